#pragma once

// Episode harness over the toy tabletop: seeded scene selection, parallel
// episode execution, CSV emission for single runs, benches and ablations.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ata/config.hpp"
#include "ata/scheduler.hpp"
#include "ata/toy_policy_env.hpp"

namespace ata::harness {

inline constexpr const char* kMetricsHeader =
    "episode,seed,success,policy_calls,env_steps,guided_attention,guided_action";
inline constexpr const char* kAblationHeader =
    "axis,setting,episodes,avg_sr,avg_sic,avg_ic,scheduled_attention_triggers";

// Step budgets for the spatial, goal, object and long-horizon task suites.
inline constexpr std::size_t kMaxStepsSpatial = 220;
inline constexpr std::size_t kMaxStepsGoal = 300;
inline constexpr std::size_t kMaxStepsObject = 280;
inline constexpr std::size_t kMaxStepsLong = 520;

struct EpisodeRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    EpisodeMetrics metrics;
};

inline toy::SceneSpec scene_for_episode(const config::RunConfig& rc, std::size_t index) {
    switch (rc.scenes) {
        case config::SceneSource::designed: return toy::designed_distractor_scene();
        case config::SceneSource::config: return *rc.scene;
        case config::SceneSource::suite: break;
    }
    return toy::generate_scene(rc.seed + index, rc.suite);
}

inline EpisodeRecord run_one(const config::RunConfig& rc, const GuidanceConfig& guidance, std::size_t index,
                             const FrameSink& sink = {}) {
    const auto scene = scene_for_episode(rc, index);
    toy::ToyEnv env(scene);
    const toy::ToyPolicy policy(scene, rc.policy);
    const std::uint64_t seed = rc.seed + index;
    return {index, seed, run_episode(policy, env, guidance, seed, sink)};
}

/// Runs `rc.episodes` episodes on a worker pool. Results are indexed by
/// episode, so thread count never changes the output.
inline std::vector<EpisodeRecord> run_episodes(const config::RunConfig& rc, const GuidanceConfig& guidance,
                                               unsigned threads = std::thread::hardware_concurrency()) {
    std::vector<EpisodeRecord> out(rc.episodes);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < out.size(); i = next++) out[i] = run_one(rc, guidance, i);
    };
    const unsigned n = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(std::max<std::size_t>(1, out.size())));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    return out;
}

inline MetricsSummary summarize(const std::vector<EpisodeRecord>& records) {
    std::vector<EpisodeMetrics> ms;
    ms.reserve(records.size());
    for (const auto& r : records) ms.push_back(r.metrics);
    return aggregate_metrics(ms);
}

inline std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

/// Per-episode rows, then one `summary` row holding averages in the same
/// columns: success rate, mean calls, mean loop steps, mean trigger counts.
inline void write_metrics_csv(std::ostream& os, const std::vector<EpisodeRecord>& records, std::uint64_t base_seed) {
    os << kMetricsHeader << '\n';
    double steps = 0.0, attn = 0.0, act = 0.0;
    for (const auto& r : records) {
        const auto& m = r.metrics;
        os << r.index << ',' << r.seed << ',' << (m.success ? 1 : 0) << ',' << m.policy_calls << ',' << m.env_steps
           << ',' << m.count(GuidanceKind::attention) << ',' << m.count(GuidanceKind::action) << '\n';
        steps += static_cast<double>(m.env_steps);
        attn += static_cast<double>(m.count(GuidanceKind::attention));
        act += static_cast<double>(m.count(GuidanceKind::action));
    }
    const auto s = summarize(records);
    const double n = static_cast<double>(records.size());
    os << "summary," << base_seed << ',' << fixed(s.avg_sr) << ',' << fixed(s.avg_ic) << ',' << fixed(steps / n)
       << ',' << fixed(attn / n) << ',' << fixed(act / n) << '\n';
}

/// Avg S.R., S.I.C. and I.C.; S.I.C. is empty when no episode succeeded.
inline void write_summary_csv(std::ostream& os, const MetricsSummary& s) {
    os << "episodes,avg_sr,avg_sic,avg_ic\n"
       << s.episodes << ',' << fixed(s.avg_sr) << ',' << (s.avg_sic ? fixed(*s.avg_sic) : std::string()) << ','
       << fixed(s.avg_ic) << '\n';
}

struct AblationRow {
    std::string axis;
    std::string setting;
    MetricsSummary summary;
    std::size_t scheduled_attention_triggers = 0;
};

/// Frequency sweep: attention-only guidance at each trigger frequency.
inline std::vector<AblationRow> ablate_freq(const config::RunConfig& rc) {
    std::vector<AblationRow> rows;
    for (std::size_t f : rc.ablate_freqs) {
        GuidanceConfig g = rc.guidance;
        g.attention_guidance_enabled = true;
        g.action_guidance_enabled = false;
        g.freq = f;
        rows.push_back({"freq", std::to_string(f), summarize(run_episodes(rc, g)),
                        scheduled_attention_triggers(g, g.max_steps)});
    }
    return rows;
}

/// First-frame study: unguided baseline, blur on the first frame, blur on
/// random later frames, attention guidance on the first frame only.
inline std::vector<AblationRow> ablate_blur(const config::RunConfig& rc) {
    GuidanceConfig base = rc.guidance;
    base.attention_guidance_enabled = false;
    base.action_guidance_enabled = false;
    base.blur.mode = BlurAblation::Mode::none;

    GuidanceConfig blur_first = base;
    blur_first.blur.mode = BlurAblation::Mode::first_frame;
    GuidanceConfig blur_random = base;
    blur_random.blur.mode = BlurAblation::Mode::random_frames;
    GuidanceConfig attn_first = base;
    attn_first.attention_guidance_enabled = true;
    attn_first.freq = GuidanceConfig::kFirstFrameOnly;

    std::vector<AblationRow> rows;
    for (const auto& [name, g] : {std::pair{"baseline", base}, std::pair{"blur_first_frame", blur_first},
                                  std::pair{"blur_random_frames", blur_random},
                                  std::pair{"attention_first_frame", attn_first}}) {
        rows.push_back({"blur", name, summarize(run_episodes(rc, g)), scheduled_attention_triggers(g, g.max_steps)});
    }
    return rows;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
    os << kAblationHeader << '\n';
    for (const auto& r : rows) {
        os << r.axis << ',' << r.setting << ',' << r.summary.episodes << ',' << fixed(r.summary.avg_sr) << ','
           << (r.summary.avg_sic ? fixed(*r.summary.avg_sic) : std::string()) << ',' << fixed(r.summary.avg_ic) << ','
           << r.scheduled_attention_triggers << '\n';
    }
}

}  // namespace ata::harness
