#pragma once

// Guided inference loop. Attention guidance fires every `freq` steps (0 means
// the first step only) and costs one extra policy forward pass; action
// guidance fires once at `i_act` and costs none. Guidance rewrites only the
// observation of the step at which it fires.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ata/action_roi.hpp"
#include "ata/attention_probe.hpp"
#include "ata/attn_mask.hpp"
#include "ata/compositor.hpp"
#include "ata/error.hpp"
#include "ata/geometry.hpp"

namespace ata {

enum class GuidanceKind { attention, action, blur };

inline const char* to_string(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::attention: return "attention";
        case GuidanceKind::action: return "action";
        case GuidanceKind::blur: return "blur";
    }
    return "?";
}

/// How many actions of a predicted chunk the environment executes per call.
enum class ChunkExecution { full, first };

/// Observation perturbation used by the blur ablation. `random_frames` blurs
/// each step after the first independently with probability `probability`.
struct BlurAblation {
    enum class Mode { none, first_frame, random_frames };
    Mode mode = Mode::none;
    double probability = 0.2;
    std::size_t kernel_size = kBlurKernelSize;
    double sigma = kDefaultBlurSigma;
};

struct GuidanceConfig {
    // Sentinel trigger frequency: attention guidance on the first step only.
    static constexpr std::size_t kFirstFrameOnly = 0;

    std::size_t layer = 0;
    std::size_t freq = kFirstFrameOnly;
    std::size_t i_act = 0;
    std::size_t max_steps = 220;
    std::uint8_t bg = kDefaultBackground;
    RoiParams roi{};
    bool attention_guidance_enabled = true;
    bool action_guidance_enabled = true;
    ChunkExecution chunk_execution = ChunkExecution::full;
    BlurAblation blur{};

    void validate() const {
        if (max_steps < 1) throw ContractError("max_steps must be >= 1");
        if (action_guidance_enabled) roi.validate();
        if (blur.mode == BlurAblation::Mode::random_frames && !(blur.probability >= 0.0 && blur.probability <= 1.0)) {
            throw ContractError("blur probability must lie in [0, 1]");
        }
    }

    static GuidanceConfig disabled() {
        GuidanceConfig cfg;
        cfg.attention_guidance_enabled = false;
        cfg.action_guidance_enabled = false;
        return cfg;
    }
};

struct Action {
    Vec3 dx{0.0, 0.0, 0.0};      // meters
    Vec3 dtheta{0.0, 0.0, 0.0};  // axis-angle, radians
    double dgrip = 0.0;

    friend bool operator==(const Action&, const Action&) = default;
};

struct ActionChunk {
    std::vector<Action> actions;

    std::size_t horizon() const noexcept { return actions.size(); }

    void validate() const {
        if (actions.empty()) throw ContractError("action chunk is empty");
        for (const auto& a : actions) {
            for (double v : a.dx)
                if (!std::isfinite(v)) throw ContractError("non-finite action entry");
            for (double v : a.dtheta)
                if (!std::isfinite(v)) throw ContractError("non-finite action entry");
            if (!std::isfinite(a.dgrip)) throw ContractError("non-finite action entry");
        }
    }
};

struct GuidedFrame {
    std::size_t step = 0;
    GuidanceKind kind = GuidanceKind::attention;

    friend bool operator==(const GuidedFrame&, const GuidedFrame&) = default;
};

struct EpisodeMetrics {
    bool success = false;
    std::size_t policy_calls = 0;  // predictions plus attention probe passes
    std::size_t env_steps = 0;     // loop iterations, one predicted chunk each
    std::vector<GuidedFrame> guided_frames;
    bool aborted = false;
    std::string diagnostic;

    std::size_t count(GuidanceKind kind) const {
        std::size_t n = 0;
        for (const auto& g : guided_frames) n += g.kind == kind;
        return n;
    }
};

inline bool attention_fires(std::size_t freq, std::size_t step) {
    return freq == GuidanceConfig::kFirstFrameOnly ? step == 0 : step % freq == 0;
}

inline bool action_fires(const GuidanceConfig& cfg, std::size_t step) {
    return cfg.action_guidance_enabled && step == cfg.i_act;
}

/// Every (step, kind) at which guidance would fire in a run of `max_steps`
/// steps that never terminates early. Attention precedes action within a step.
inline std::vector<GuidedFrame> guidance_schedule(const GuidanceConfig& cfg, std::size_t max_steps) {
    std::vector<GuidedFrame> out;
    if (cfg.attention_guidance_enabled) {
        if (cfg.freq == GuidanceConfig::kFirstFrameOnly) {
            if (max_steps > 0) out.push_back({0, GuidanceKind::attention});
        } else {
            for (std::size_t i = 0; i < max_steps; i += cfg.freq) out.push_back({i, GuidanceKind::attention});
        }
    }
    if (cfg.action_guidance_enabled && cfg.i_act < max_steps) {
        const GuidedFrame act{cfg.i_act, GuidanceKind::action};
        auto it = out.begin();
        while (it != out.end() && it->step <= act.step) ++it;
        out.insert(it, act);
    }
    return out;
}

inline std::size_t scheduled_attention_triggers(const GuidanceConfig& cfg, std::size_t max_steps) {
    std::size_t n = 0;
    for (const auto& g : guidance_schedule(cfg, max_steps)) n += g.kind == GuidanceKind::attention;
    return n;
}

template <class State>
struct Observation {
    Image image;
    State state;
};

/// Environment contract. `step` executes one action and reports success.
template <class E>
concept Environment = requires(E& env, const E& cenv, const Action& a) {
    typename E::State;
    typename E::Instruction;
    { cenv.instruction() } -> std::convertible_to<typename E::Instruction>;
    { env.observe() } -> std::same_as<Observation<typename E::State>>;
    { env.step(a) } -> std::convertible_to<bool>;
    { cenv.eef_pose() } -> std::convertible_to<EefPose>;
    { cenv.camera() } -> std::convertible_to<CameraModel>;
};

/// Policy contract: action prediction plus an attention probe at a layer.
template <class P, class E>
concept PolicyFor = Environment<E> &&
    requires(P& p, const typename E::Instruction& z, const Image& o, const typename E::State& s, std::size_t layer) {
        { p.predict(z, o, s) } -> std::same_as<ActionChunk>;
        { p.probe_attention(z, o, s, layer) } -> std::same_as<AttentionTensor>;
    };

/// Called with each step's model input (after guidance) when set.
using FrameSink = std::function<void(std::size_t step, const Image& model_input)>;

/// Runs one episode. Contract violations by the policy or environment abort
/// the episode, which then counts as a failure with a diagnostic.
template <class P, class E>
    requires PolicyFor<P, E>
EpisodeMetrics run_episode(P& policy, E& env, const GuidanceConfig& cfg, std::uint64_t seed = 0,
                           const FrameSink& sink = {}) {
    cfg.validate();
    EpisodeMetrics m;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution random_blur(cfg.blur.mode == BlurAblation::Mode::random_frames ? cfg.blur.probability
                                                                                               : 0.0);
    try {
        const auto instruction = env.instruction();
        for (std::size_t i = 0;;) {
            auto obs = env.observe();
            Image input = std::move(obs.image);

            const bool blur_now = (cfg.blur.mode == BlurAblation::Mode::first_frame && i == 0) ||
                                  (cfg.blur.mode == BlurAblation::Mode::random_frames && i > 0 && random_blur(rng));
            if (blur_now) {
                input = gaussian_blur(input, cfg.blur.kernel_size, cfg.blur.sigma);
                m.guided_frames.push_back({i, GuidanceKind::blur});
            }
            if (cfg.attention_guidance_enabled && attention_fires(cfg.freq, i)) {
                const AttentionTensor probe = policy.probe_attention(instruction, input, obs.state, cfg.layer);
                ++m.policy_calls;
                input = blend(input, attention_mask(probe, input.width, input.height), cfg.bg);
                m.guided_frames.push_back({i, GuidanceKind::attention});
            }
            if (action_fires(cfg, i)) {
                const ActionMask am = action_mask(env.camera(), env.eef_pose(), cfg.roi);
                if (!am.degenerate) input = blend(input, am.mask, cfg.bg);
                m.guided_frames.push_back({i, GuidanceKind::action});
            }

            const ActionChunk chunk = policy.predict(instruction, input, obs.state);
            ++m.policy_calls;
            chunk.validate();
            if (sink) sink(i, input);
            ++m.env_steps;

            const std::size_t n_exec = cfg.chunk_execution == ChunkExecution::full ? chunk.horizon() : 1;
            for (std::size_t k = 0; k < n_exec && !m.success; ++k) m.success = env.step(chunk.actions[k]);

            ++i;
            if (m.success || i >= cfg.max_steps) break;
        }
    } catch (const std::exception& e) {
        m.aborted = true;
        m.success = false;
        m.diagnostic = e.what();
    }
    return m;
}

struct MetricsSummary {
    std::size_t episodes = 0;
    std::size_t successes = 0;
    double avg_sr = 0.0;
    std::optional<double> avg_sic;  // absent when nothing succeeded
    double avg_ic = 0.0;
};

/// Success rate, mean calls over successful episodes, mean calls overall.
/// Sums are integral, so the result is independent of episode order.
inline MetricsSummary aggregate_metrics(std::span<const EpisodeMetrics> episodes) {
    if (episodes.empty()) throw StructuralError("cannot aggregate an empty episode list");
    MetricsSummary s;
    s.episodes = episodes.size();
    std::uint64_t calls_all = 0;
    std::uint64_t calls_success = 0;
    for (const auto& e : episodes) {
        calls_all += e.policy_calls;
        if (e.success) {
            ++s.successes;
            calls_success += e.policy_calls;
        }
    }
    s.avg_sr = static_cast<double>(s.successes) / static_cast<double>(s.episodes);
    s.avg_ic = static_cast<double>(calls_all) / static_cast<double>(s.episodes);
    if (s.successes > 0) s.avg_sic = static_cast<double>(calls_success) / static_cast<double>(s.successes);
    return s;
}

}  // namespace ata
