#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ata/toy_policy_env.hpp"

using namespace ata;
using namespace ata::toy;

namespace {

bool is_color(const Image& img, std::size_t x, std::size_t y, const Rgb& c) {
    return img.at(x, y, 0) == c[0] && img.at(x, y, 1) == c[1] && img.at(x, y, 2) == c[2];
}

SceneSpec lone_target(Cell cell) {
    SceneSpec s;
    s.target = {{60, 170, 70}, cell};
    return s;
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

// Decision-layer scores recomputed from raw pixels: mean color per 28x28
// patch, centered at 127.5 and scaled by 1/255, dotted with the centered
// instruction color. The softmax is monotone, so the argmax of the dot
// products is the argmax of the attention.
std::size_t decision_argmax_oracle(const Image& img, const Rgb& instr) {
    std::vector<double> score(64, 0.0);
    for (std::size_t p = 0; p < 64; ++p) {
        const std::size_t r = p / 8, c = p % 8;
        double dot = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            double mean = 0.0;
            for (std::size_t y = r * 28; y < (r + 1) * 28; ++y)
                for (std::size_t x = c * 28; x < (c + 1) * 28; ++x) mean += img.at(x, y, k);
            mean /= 784.0;
            dot += (mean - 127.5) * (instr[k] - 127.5);
        }
        score[p] = dot;
    }
    return argmax(score);
}

}  // namespace

TEST(Render, LoneTargetIsOneSquarePlusMarker) {
    const auto s = lone_target({4, 4});
    const Image img = render(s, {s.eef_start, 0.0, 0});
    std::size_t square = 0, marker = 0, table = 0;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            if (is_color(img, x, y, s.target.color)) ++square;
            else if (is_color(img, x, y, kEefMarkerColor)) ++marker;
            else if (is_color(img, x, y, kTableColor)) ++table;
        }
    const std::size_t side = 28 - 2 * square_margin(s);
    EXPECT_EQ(square, side * side);
    EXPECT_EQ(marker, 25u);
    EXPECT_EQ(square + marker + table, img.width * img.height);
}

TEST(Render, Deterministic) {
    const auto s = designed_distractor_scene();
    EXPECT_EQ(render(s, {s.eef_start, 0.0, 0}), render(s, {s.eef_start, 0.0, 0}));
}

TEST(Render, SquareSitsInsideItsCell) {
    const auto s = lone_target({2, 3});
    const Image img = render(s, {s.eef_start, 0.0, 0});
    std::size_t x0 = 999, x1 = 0, y0 = 999, y1 = 0;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            if (is_color(img, x, y, s.target.color)) {
                x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
            }
    // Cell (2, 3) covers x in [84, 112), y in [56, 84); the square keeps a
    // 2 px margin on each side.
    EXPECT_EQ(x0, 86u);
    EXPECT_EQ(x1, 109u);
    EXPECT_EQ(y0, 58u);
    EXPECT_EQ(y1, 81u);
    const Pixel c = cell_center(s, {2, 3});
    EXPECT_EQ(c.u, (x0 + x1) / 2.0);
    EXPECT_EQ(c.v, (y0 + y1) / 2.0);
}

TEST(Geometry, CellCentersBackProjectOntoTheTable) {
    const auto s = lone_target({0, 0});
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            const Vec3 w = cell_world_position(s, {r, c});
            EXPECT_NEAR(w[2], 0.0, 1e-12);
            const Pixel p = project_point(s.camera, w);
            const Pixel e = cell_center(s, {r, c});
            EXPECT_NEAR(p.u, e.u, 1e-9);
            EXPECT_NEAR(p.v, e.v, 1e-9);
        }
    // Image right is world +x, image up is world +y.
    EXPECT_LT(cell_world_position(s, {0, 0})[0], cell_world_position(s, {0, 7})[0]);
    EXPECT_GT(cell_world_position(s, {0, 0})[1], cell_world_position(s, {7, 0})[1]);
}

TEST(Policy, LoneTargetIsTheArgmaxAndActionHeadsThere) {
    for (const Cell cell : {Cell{1, 6}, Cell{6, 1}, Cell{3, 3}}) {
        const auto s = lone_target(cell);
        const ToyPolicy policy(s);
        const ToyState st{s.eef_start, 0.0, 0};
        const auto out = policy.step(render(s, st), s.target.color, st);
        EXPECT_EQ(out.chosen_patch, cell.row * 8 + cell.col);
        const Vec3 to_target = cell_world_position(s, cell) - s.eef_start;
        EXPECT_GT(dot(out.chunk.actions.front().dx, to_target), 0.0);
        EXPECT_LE(norm(out.chunk.actions.front().dx), kStepCap + 1e-12);
        EXPECT_EQ(out.chunk.horizon(), 12u);
    }
}

TEST(Policy, FullyMaskedImageGivesUniformPatchAttention) {
    const auto s = designed_distractor_scene();
    const ToyPolicy policy(s);
    const Image img = blend(render(s, {s.eef_start, 0.0, 0}), PixelMask(224, 224, 0.0), 127);
    for (std::size_t layer : {ToyPolicyParams::kDecisionLayer, ToyPolicyParams::kSemanticLayer}) {
        const auto m = aggregate_heads(policy.attention(img, s.target.color, layer));
        for (double v : m.values) EXPECT_NEAR(v, m.values.front(), 1e-15);
    }
}

TEST(Policy, DesignedSceneLureWinsUnguidedAndLosesMasked) {
    const auto s = designed_distractor_scene();
    const ToyPolicy policy(s);
    const ToyState st{s.eef_start, 0.0, 0};
    const Image raw = render(s, st);
    const std::size_t lure = s.distractors.front().cell.row * 8 + s.distractors.front().cell.col;
    const std::size_t target = s.target.cell.row * 8 + s.target.cell.col;

    EXPECT_EQ(decision_argmax_oracle(raw, s.target.color), lure);
    EXPECT_EQ(policy.step(raw, s.target.color, st).chosen_patch, lure);

    const auto probe = policy.probe_attention(s.target.color, raw, st, ToyPolicyParams::kSemanticLayer);
    const Image masked = blend(raw, attention_mask(probe, 224, 224), 127);
    EXPECT_EQ(decision_argmax_oracle(masked, s.target.color), target);
    EXPECT_EQ(policy.step(masked, s.target.color, st).chosen_patch, target);
}

TEST(Policy, UnknownLayerIsContractError) {
    const auto s = designed_distractor_scene();
    const ToyPolicy policy(s);
    EXPECT_THROW(policy.attention(render(s, {}), s.target.color, 2), ContractError);
}

TEST(EnvStep, ImmediateSuccessNearTarget) {
    const auto s = lone_target({3, 3});
    const Vec3 goal = cell_world_position(s, {3, 3});
    const auto [next, ok] = env_step(s, {goal + Vec3{0.01, 0.0, 0.0}, 0.0, 0}, Action{});
    EXPECT_TRUE(ok);
    EXPECT_EQ(next.step, 1u);
}

TEST(EnvStep, ZeroActionKeepsState) {
    const auto s = lone_target({3, 3});
    const ToyState st{{0.1, 0.2, 0.3}, 0.5, 4};
    const auto [next, ok] = env_step(s, st, Action{});
    EXPECT_EQ(next.eef, st.eef);
    EXPECT_EQ(next.grip, st.grip);
    EXPECT_FALSE(ok);
}

TEST(EnvStep, StraightApproachSucceedsAtStepFive) {
    const auto s = lone_target({3, 3});
    const Vec3 goal = cell_world_position(s, {3, 3});
    ToyState st{goal + Vec3{0.5, 0.0, 0.0}, 0.0, 0};
    std::size_t success_step = 0;
    for (std::size_t k = 1; k <= 10 && success_step == 0; ++k) {
        auto [next, ok] = env_step(s, st, Action{{-0.1, 0.0, 0.0}, {}, 0.0});
        st = next;
        if (ok) success_step = k;
    }
    EXPECT_EQ(success_step, 5u);
}

TEST(EnvStep, ClampsToWorkspaceAndRejectsNonFinite) {
    const auto s = lone_target({3, 3});
    const auto [next, ok] = env_step(s, {{0.55, -0.55, 0.5}, 0.0, 0}, Action{{1.0, -1.0, 1.0}, {}, 0.0});
    EXPECT_EQ(next.eef, (Vec3{kWorkspaceHalfExtent, -kWorkspaceHalfExtent, kWorkspaceMaxHeight}));
    EXPECT_FALSE(ok);
    EXPECT_THROW(env_step(s, {}, Action{{NAN, 0.0, 0.0}, {}, 0.0}), ContractError);
}

TEST(Episode, LoneTargetSucceedsWithinDistanceBound) {
    for (const Cell cell : {Cell{0, 0}, Cell{7, 7}, Cell{2, 5}}) {
        const auto s = lone_target(cell);
        ToyEnv env(s);
        const ToyPolicy policy(s);
        auto cfg = GuidanceConfig::disabled();
        cfg.chunk_execution = ChunkExecution::first;
        const auto m = run_episode(policy, env, cfg);
        const double d = norm(cell_world_position(s, cell) - s.eef_start);
        EXPECT_TRUE(m.success);
        EXPECT_LE(m.env_steps, static_cast<std::size_t>(std::ceil(d / kStepCap)) + 1);
    }
}

TEST(Episode, TraceIsDeterministic) {
    const auto s = generate_scene(123);
    auto run = [&] {
        ToyEnv env(s);
        const ToyPolicy policy(s);
        GuidanceConfig cfg;
        cfg.layer = ToyPolicyParams::kSemanticLayer;
        cfg.freq = 3;
        return run_episode(policy, env, cfg, 5);
    };
    const auto a = run(), b = run();
    EXPECT_EQ(a.success, b.success);
    EXPECT_EQ(a.policy_calls, b.policy_calls);
    EXPECT_EQ(a.guided_frames, b.guided_frames);
}

TEST(Suite, SeededScenesAreValidAndReproducible) {
    SuiteParams p;
    p.scenes = 30;
    const auto a = generate_suite(p), b = generate_suite(p);
    ASSERT_EQ(a.size(), 30u);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_NO_THROW(a[k].validate());
        EXPECT_EQ(a[k].seed, p.base_seed + k);
        EXPECT_EQ(render(a[k], {a[k].eef_start, 0.0, 0}), render(b[k], {b[k].eef_start, 0.0, 0}));
    }
}

TEST(Suite, ToolRayIsUsableFromTheStartPose) {
    const auto s = designed_distractor_scene();
    const auto am = action_mask(s.camera, {s.eef_start, s.eef_orientation}, {});
    EXPECT_FALSE(am.degenerate);
    // Tool z points along world +y, which is image up.
    EXPECT_LT(am.ray.dv, 0.0);
}

TEST(SceneSpec, ValidationCatchesBadLayouts) {
    auto s = designed_distractor_scene();
    s.distractors.push_back({{1, 2, 3}, s.target.cell});
    EXPECT_THROW(s.validate(), ContractError);
    s = designed_distractor_scene();
    s.target.cell = {8, 0};
    EXPECT_THROW(s.validate(), ContractError);
    s = designed_distractor_scene();
    s.width = 200;
    EXPECT_THROW(s.validate(), ContractError);
}
