#pragma once

// Deterministic synthetic tabletop and a two-layer toy attention policy.
//
// The scene is seen by a top-down camera and drawn as a patch grid of colored
// squares on a gray table. The policy tokenizes every patch by its mean color
// and appends one instruction token holding the requested color.
//
//   layer 0 (decision): q . k on colors centered at mid-gray. Magnitude
//           sensitive, so a more saturated look-alike of the requested color
//           wins the argmax. The policy moves toward that patch.
//   layer 1 (semantic): the same tokens with unit-normalized embeddings, i.e.
//           hue matching. It singles out the requested color.
//
// Probing layer 1 and masking the observation with it dims the look-alike,
// which flips the decision layer's argmax to the target.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "ata/action_roi.hpp"
#include "ata/attention_probe.hpp"
#include "ata/compositor.hpp"
#include "ata/error.hpp"
#include "ata/geometry.hpp"
#include "ata/scheduler.hpp"

namespace ata::toy {

using Rgb = std::array<std::uint8_t, 3>;

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

struct SceneObject {
    Rgb color{};
    Cell cell;
};

inline constexpr double kSuccessRadius = 0.02;  // meters
inline constexpr double kStepCap = 0.1;         // meters per action
inline constexpr double kWorkspaceHalfExtent = 0.6;
inline constexpr double kWorkspaceMaxHeight = 0.6;
inline constexpr Rgb kTableColor{130, 128, 126};
inline constexpr Rgb kEefMarkerColor{60, 60, 60};
inline constexpr std::size_t kEefMarkerHalf = 2;

/// Top-down camera 1 m above the table origin; 224 px span 0.8 m at table
/// height. Image right is world +x, image up is world +y.
inline CameraModel default_camera() {
    CameraModel cam;
    cam.fx = cam.fy = 280.0;
    cam.cx = cam.cy = 112.0;
    cam.rotation = {{{1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
    cam.translation = {0.0, 0.0, 1.0};
    cam.width = cam.height = 224;
    return cam;
}

/// Tool z axis pointing along world +y, across the table away from the robot.
inline Quaternion default_eef_orientation() {
    const double h = std::sqrt(0.5);
    return {h, -h, 0.0, 0.0};
}

struct SceneSpec {
    std::size_t width = 224;
    std::size_t height = 224;
    GridShape grid{8, 8};
    SceneObject target{};
    std::vector<SceneObject> distractors;
    Vec3 eef_start{0.0, -0.35, 0.1};
    Quaternion eef_orientation = default_eef_orientation();
    CameraModel camera = default_camera();
    std::uint64_t seed = 0;

    void validate() const {
        if (width == 0 || height == 0) throw ContractError("scene image size must be positive");
        if (grid.rows == 0 || grid.cols == 0) throw ContractError("scene grid must be non-empty");
        if (width % grid.cols != 0 || height % grid.rows != 0) {
            throw ContractError("scene image size must be a multiple of the patch grid");
        }
        if (camera.width != width || camera.height != height) throw ContractError("camera size differs from scene size");
        camera.validate();
        EefPose{eef_start, eef_orientation}.validate();
        auto in_grid = [&](const Cell& c) { return c.row < grid.rows && c.col < grid.cols; };
        if (!in_grid(target.cell)) throw ContractError("target cell outside the grid");
        for (std::size_t i = 0; i < distractors.size(); ++i) {
            if (!in_grid(distractors[i].cell)) throw ContractError("distractor cell outside the grid");
            if (distractors[i].cell == target.cell) throw ContractError("distractor shares the target cell");
            for (std::size_t j = 0; j < i; ++j)
                if (distractors[j].cell == distractors[i].cell) throw ContractError("two distractors share a cell");
        }
    }

    std::size_t cell_width() const { return width / grid.cols; }
    std::size_t cell_height() const { return height / grid.rows; }
};

struct ToyState {
    Vec3 eef{0.0, 0.0, 0.0};
    double grip = 0.0;
    std::size_t step = 0;
};

/// Pixel-coordinate center of a cell (pixel x has coordinate u = x).
inline Pixel cell_center(const SceneSpec& s, const Cell& c) {
    return {(static_cast<double>(c.col) + 0.5) * static_cast<double>(s.cell_width()) - 0.5,
            (static_cast<double>(c.row) + 0.5) * static_cast<double>(s.cell_height()) - 0.5};
}

/// Intersection of the viewing ray through (u, v) with the table plane z = 0.
inline Vec3 pixel_to_table(const CameraModel& cam, Pixel px) {
    const Mat3 rt = transpose(cam.rotation);
    const Vec3 center = -1.0 * (rt * cam.translation);
    const Vec3 dir = rt * Vec3{(px.u - cam.cx) / cam.fx, (px.v - cam.cy) / cam.fy, 1.0};
    if (std::abs(dir[2]) < 1e-12) throw ContractError("viewing ray is parallel to the table");
    const double s = -center[2] / dir[2];
    if (s <= 0.0) throw ContractError("table plane lies behind the camera");
    return center + s * dir;
}

inline Vec3 cell_world_position(const SceneSpec& s, const Cell& c) { return pixel_to_table(s.camera, cell_center(s, c)); }

// Margin between a square and its cell border, in pixels per side.
inline std::size_t square_margin(const SceneSpec& s) { return std::max<std::size_t>(1, s.cell_width() / 14); }

inline void fill_rect(Image& img, std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, const Rgb& c) {
    for (std::size_t y = y0; y < y1 && y < img.height; ++y)
        for (std::size_t x = x0; x < x1 && x < img.width; ++x)
            for (std::size_t k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
}

inline Image render(const SceneSpec& scene, const ToyState& state) {
    Image img(scene.width, scene.height);
    for (std::size_t p = 0; p < scene.width * scene.height; ++p)
        for (std::size_t k = 0; k < 3; ++k) img.data[p * 3 + k] = kTableColor[k];

    const std::size_t cw = scene.cell_width(), ch = scene.cell_height(), m = square_margin(scene);
    auto draw = [&](const SceneObject& o) {
        fill_rect(img, o.cell.col * cw + m, o.cell.row * ch + m, (o.cell.col + 1) * cw - m, (o.cell.row + 1) * ch - m,
                  o.color);
    };
    for (const auto& d : scene.distractors) draw(d);
    draw(scene.target);

    try {
        const Pixel p = project_point(scene.camera, state.eef);
        const long u = std::lround(p.u), v = std::lround(p.v);
        const long r = static_cast<long>(kEefMarkerHalf);
        const long w = static_cast<long>(scene.width), h = static_cast<long>(scene.height);
        if (u + r >= 0 && u - r < w && v + r >= 0 && v - r < h) {
            fill_rect(img, static_cast<std::size_t>(std::max(0L, u - r)), static_cast<std::size_t>(std::max(0L, v - r)),
                      static_cast<std::size_t>(std::min(w, u + r + 1)), static_cast<std::size_t>(std::min(h, v + r + 1)),
                      kEefMarkerColor);
        }
    } catch (const BehindCameraError&) {
        // Marker not visible.
    }
    return img;
}

inline std::pair<ToyState, bool> env_step(const SceneSpec& scene, const ToyState& state, const Action& action) {
    for (double v : action.dx)
        if (!std::isfinite(v)) throw ContractError("non-finite action displacement");
    ToyState next = state;
    next.eef = state.eef + action.dx;
    next.eef[0] = std::clamp(next.eef[0], -kWorkspaceHalfExtent, kWorkspaceHalfExtent);
    next.eef[1] = std::clamp(next.eef[1], -kWorkspaceHalfExtent, kWorkspaceHalfExtent);
    next.eef[2] = std::clamp(next.eef[2], 0.0, kWorkspaceMaxHeight);
    next.grip = std::clamp(state.grip + action.dgrip, 0.0, 1.0);
    next.step = state.step + 1;
    const bool success = norm(next.eef - cell_world_position(scene, scene.target.cell)) < kSuccessRadius;
    return {next, success};
}

class ToyEnv {
public:
    using State = ToyState;
    using Instruction = Rgb;

    explicit ToyEnv(SceneSpec scene) : scene_(std::move(scene)) {
        scene_.validate();
        state_.eef = scene_.eef_start;
    }

    Rgb instruction() const { return scene_.target.color; }
    Observation<ToyState> observe() const { return {render(scene_, state_), state_}; }

    bool step(const Action& a) {
        auto [next, success] = env_step(scene_, state_, a);
        state_ = next;
        return success;
    }

    EefPose eef_pose() const { return {state_.eef, scene_.eef_orientation}; }
    CameraModel camera() const { return scene_.camera; }
    const ToyState& state() const { return state_; }
    const SceneSpec& scene() const { return scene_; }

private:
    SceneSpec scene_;
    ToyState state_;
};

struct ToyPolicyParams {
    static constexpr std::size_t kDecisionLayer = 0;
    static constexpr std::size_t kSemanticLayer = 1;

    std::size_t horizon = 12;
    double decision_scale = 40.0;
    double semantic_scale = 2000.0;
    // Relative temperature of each head; the probe averages them.
    std::vector<double> head_gains{1.0, 0.8};
};

struct ToyPolicyOutput {
    ActionChunk chunk;
    AttentionTensor decision;
    AttentionTensor semantic;
    std::size_t chosen_patch;
};

namespace detail {

inline std::array<double, 3> centered(const std::array<double, 3>& c) {
    return {(c[0] - 127.5) / 255.0, (c[1] - 127.5) / 255.0, (c[2] - 127.5) / 255.0};
}

inline std::array<double, 3> unit_or_zero(const std::array<double, 3>& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    // Near-gray patches carry no hue.
    if (n < 0.02) return {0.0, 0.0, 0.0};
    return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace detail

/// Row-major mean RGB of every patch.
inline std::vector<std::array<double, 3>> patch_means(const Image& img, GridShape grid) {
    if (grid.rows == 0 || grid.cols == 0 || img.width % grid.cols != 0 || img.height % grid.rows != 0) {
        throw StructuralError("image does not tile into the patch grid");
    }
    const std::size_t cw = img.width / grid.cols, ch = img.height / grid.rows;
    std::vector<std::array<double, 3>> out(grid.cells(), {0.0, 0.0, 0.0});
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            auto& acc = out[(y / ch) * grid.cols + x / cw];
            for (std::size_t k = 0; k < 3; ++k) acc[k] += img.at(x, y, k);
        }
    const double inv = 1.0 / static_cast<double>(cw * ch);
    for (auto& m : out)
        for (double& v : m) v *= inv;
    return out;
}

/// Toy policy bound to one scene geometry (grid and camera).
class ToyPolicy {
public:
    ToyPolicy(GridShape grid, CameraModel camera, ToyPolicyParams params = {})
        : grid_(grid), camera_(std::move(camera)), params_(std::move(params)) {
        if (params_.horizon == 0) throw ContractError("policy horizon must be >= 1");
        if (params_.head_gains.empty()) throw ContractError("policy needs at least one head");
    }

    explicit ToyPolicy(const SceneSpec& scene, ToyPolicyParams params = {})
        : ToyPolicy(scene.grid, scene.camera, std::move(params)) {}

    /// Attention of the instruction token at `layer`. Token order: patches
    /// row-major, instruction token last.
    AttentionTensor attention(const Image& img, const Rgb& instruction, std::size_t layer) const {
        if (img.width != camera_.width || img.height != camera_.height) {
            throw StructuralError("observation size differs from the policy camera");
        }
        const auto means = patch_means(img, grid_);
        const std::array<double, 3> instr{double(instruction[0]), double(instruction[1]), double(instruction[2])};
        constexpr std::size_t dim = 3;

        std::array<double, 3> q_base{};
        double scale = 0.0;
        if (layer == ToyPolicyParams::kDecisionLayer) {
            q_base = detail::centered(instr);
            scale = params_.decision_scale;
        } else if (layer == ToyPolicyParams::kSemanticLayer) {
            q_base = detail::unit_or_zero(detail::centered(instr));
            scale = params_.semantic_scale;
        } else {
            throw ContractError("toy policy has layers 0 and 1 only, asked for " + std::to_string(layer));
        }

        std::vector<double> keys;
        keys.reserve((means.size() + 1) * dim);
        for (const auto& m : means) {
            const auto k = layer == ToyPolicyParams::kDecisionLayer ? detail::centered(m)
                                                                     : detail::unit_or_zero(detail::centered(m));
            keys.insert(keys.end(), k.begin(), k.end());
        }
        // The instruction token's own key is zero.
        keys.insert(keys.end(), dim, 0.0);

        std::vector<std::vector<double>> queries, head_keys;
        for (double gain : params_.head_gains) {
            const double s = scale * gain;
            queries.push_back({s * q_base[0], s * q_base[1], s * q_base[2]});
            head_keys.push_back(keys);
        }
        return toy_attention(queries, head_keys, dim, layer, ImageSpan{0, grid_.cells()}, grid_);
    }

    ToyPolicyOutput step(const Image& img, const Rgb& instruction, const ToyState& state) const {
        auto decision = attention(img, instruction, ToyPolicyParams::kDecisionLayer);
        auto semantic = attention(img, instruction, ToyPolicyParams::kSemanticLayer);
        const auto agg = aggregate_heads(decision);
        const auto chosen = static_cast<std::size_t>(
            std::distance(agg.values.begin(), std::max_element(agg.values.begin(), agg.values.end())));
        const Cell cell{chosen / grid_.cols, chosen % grid_.cols};
        const Pixel center{(static_cast<double>(cell.col) + 0.5) * static_cast<double>(img.width / grid_.cols) - 0.5,
                           (static_cast<double>(cell.row) + 0.5) * static_cast<double>(img.height / grid_.rows) - 0.5};
        const Vec3 goal = pixel_to_table(camera_, center);

        ActionChunk chunk;
        Vec3 pos = state.eef;
        for (std::size_t k = 0; k < params_.horizon; ++k) {
            const Vec3 delta = goal - pos;
            const double dist = norm(delta);
            Action a;
            a.dx = dist <= kStepCap ? delta : (kStepCap / dist) * delta;
            pos = pos + a.dx;
            chunk.actions.push_back(a);
        }
        return {std::move(chunk), std::move(decision), std::move(semantic), chosen};
    }

    ActionChunk predict(const Rgb& instruction, const Image& img, const ToyState& state) const {
        return step(img, instruction, state).chunk;
    }

    AttentionTensor probe_attention(const Rgb& instruction, const Image& img, const ToyState&, std::size_t layer) const {
        return attention(img, instruction, layer);
    }

    const ToyPolicyParams& params() const { return params_; }

private:
    GridShape grid_;
    CameraModel camera_;
    ToyPolicyParams params_;
};

// Palette of well-separated hues the suite draws target colors from.
inline constexpr std::array<Rgb, 6> kPalette{{
    {200, 60, 60},   // red
    {60, 170, 70},   // green
    {60, 80, 200},   // blue
    {200, 190, 50},  // yellow
    {150, 60, 180},  // purple
    {50, 180, 190},  // teal
}};

/// The documented failure case: a red target and a more saturated red
/// look-alike. The unguided policy picks the look-alike at step 0; the
/// attention-masked observation picks the target.
inline SceneSpec designed_distractor_scene() {
    SceneSpec s;
    s.target = {{200, 60, 60}, {2, 5}};
    s.distractors = {{{240, 30, 50}, {5, 2}}, {{60, 80, 200}, {1, 1}}};
    s.seed = 0;
    return s;
}

struct SuiteParams {
    std::size_t scenes = 50;
    std::uint64_t base_seed = 2024;
    double lure_probability = 0.7;
    std::size_t max_other_distractors = 2;
};

inline std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

/// Scene k uses seed base_seed + k. With probability `lure_probability` a
/// scene holds a saturated, slightly hue-shifted look-alike of the target,
/// never adjacent to it; other distractors take other palette colors.
inline SceneSpec generate_scene(std::uint64_t seed, const SuiteParams& p = {}) {
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    auto uniform01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    SceneSpec s;
    s.seed = seed;
    const std::size_t target_idx = uniform_int(kPalette.size());
    s.target.color = kPalette[target_idx];
    s.target.cell = {uniform_int(s.grid.rows), uniform_int(s.grid.cols)};

    std::vector<Cell> used{s.target.cell};
    auto free_cell = [&](bool keep_away_from_target) {
        for (;;) {
            const Cell c{uniform_int(s.grid.rows), uniform_int(s.grid.cols)};
            if (std::find(used.begin(), used.end(), c) != used.end()) continue;
            if (keep_away_from_target) {
                const auto dr = c.row > s.target.cell.row ? c.row - s.target.cell.row : s.target.cell.row - c.row;
                const auto dc = c.col > s.target.cell.col ? c.col - s.target.cell.col : s.target.cell.col - c.col;
                if (std::max(dr, dc) < 2) continue;
            }
            used.push_back(c);
            return c;
        }
    };

    if (uniform01() < p.lure_probability) {
        const double gain = 1.3 + 0.3 * uniform01();
        Rgb lure{};
        for (std::size_t k = 0; k < 3; ++k) {
            const double jitter = (uniform01() * 2.0 - 1.0) * 20.0;
            lure[k] = clamp_u8(127.5 + gain * (s.target.color[k] - 127.5) + jitter);
        }
        s.distractors.push_back({lure, free_cell(true)});
    }
    const std::size_t others = uniform_int(p.max_other_distractors + 1);
    for (std::size_t i = 0; i < others; ++i) {
        std::size_t idx = uniform_int(kPalette.size() - 1);
        if (idx >= target_idx) ++idx;
        s.distractors.push_back({kPalette[idx], free_cell(false)});
    }
    s.validate();
    return s;
}

inline std::vector<SceneSpec> generate_suite(const SuiteParams& p = {}) {
    std::vector<SceneSpec> out;
    out.reserve(p.scenes);
    for (std::size_t k = 0; k < p.scenes; ++k) out.push_back(generate_scene(p.base_seed + k, p));
    return out;
}

}  // namespace ata::toy
