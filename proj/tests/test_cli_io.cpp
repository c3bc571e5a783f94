#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ata/atn1.hpp"
#include "ata/config.hpp"
#include "ata/harness.hpp"
#include "ata/png_io.hpp"
#include "test_util.hpp"

using namespace ata;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("ata_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& stderr_file = "/dev/null") {
    const std::string cmd = std::string(ATA_CLI_PATH) + " " + args + " > /dev/null 2> " + stderr_file.string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

config::RunConfig parse_json(const std::string& text) { return config::parse(config::Json::parse(text)); }

// Designed scene, one action per step: the target is more than five capped
// steps away, so a five-step run never terminates early.
constexpr const char* kFiveStepConfig = R"({
  "GuidanceConfig": {"freq": 2, "max_steps": 5, "chunk_execution": "first", "action_guidance_enabled": false},
  "ToyPolicyParams": {"horizon": 1},
  "RunConfig": {"scenes": "designed", "seed": 31}
})";

}  // namespace

TEST(Config, DefaultsWithoutSections) {
    const auto rc = parse_json("{}");
    EXPECT_EQ(rc.guidance.layer, toy::ToyPolicyParams::kSemanticLayer);
    EXPECT_EQ(rc.guidance.freq, 0u);
    EXPECT_EQ(rc.guidance.bg, 127);
    EXPECT_EQ(rc.episodes, 50u);
    EXPECT_EQ(rc.ablate_freqs, (std::vector<std::size_t>{0, 20, 50, 100, 200}));
}

TEST(Config, ReadsEverySection) {
    const auto rc = parse_json(R"({
      "GuidanceConfig": {"layer": 0, "freq": 7, "i_act": 3, "max_steps": 300, "bg": 10,
                         "blur": {"mode": "random_frames", "probability": 0.5}},
      "RoiParams": {"alpha": 120, "z_depth": 0.25, "tool_axis": "x"},
      "CameraModel": {"fx": 100, "fy": 100, "cx": 64, "cy": 64, "width": 128, "height": 128},
      "EefPose": {"position": [0, 0, 1], "orientation": [1, 0, 0, 0]},
      "ToyPolicyParams": {"horizon": 4, "head_gains": [1.0]},
      "RunConfig": {"episodes": 3, "seed": 9, "out": "somewhere", "scenes": "designed", "ablate_axis": "blur"}
    })");
    EXPECT_EQ(rc.guidance.layer, 0u);
    EXPECT_EQ(rc.guidance.freq, 7u);
    EXPECT_EQ(rc.guidance.i_act, 3u);
    EXPECT_EQ(rc.guidance.max_steps, 300u);
    EXPECT_EQ(rc.guidance.bg, 10);
    EXPECT_EQ(rc.guidance.blur.mode, BlurAblation::Mode::random_frames);
    EXPECT_EQ(rc.guidance.blur.probability, 0.5);
    EXPECT_EQ(rc.guidance.roi.alpha_deg, 120.0);
    EXPECT_EQ(rc.guidance.roi.tool_axis, ToolAxis::x);
    ASSERT_TRUE(rc.camera && rc.pose);
    EXPECT_EQ(rc.camera->width, 128u);
    EXPECT_EQ(rc.pose->position, (Vec3{0, 0, 1}));
    EXPECT_EQ(rc.policy.horizon, 4u);
    EXPECT_EQ(rc.episodes, 3u);
    EXPECT_EQ(rc.seed, 9u);
    EXPECT_EQ(rc.out_dir, fs::path("somewhere"));
    EXPECT_EQ(rc.scenes, config::SceneSource::designed);
    EXPECT_EQ(rc.ablate_axis, config::AblationAxis::blur);
}

TEST(Config, UnknownKeysAreNamed) {
    auto expect_key = [](const std::string& json, const std::string& key) {
        try {
            parse_json(json);
            FAIL() << "expected a usage error for " << key;
        } catch (const UsageError& e) {
            EXPECT_NE(std::string(e.what()).find("'" + key + "'"), std::string::npos) << e.what();
        }
    };
    expect_key(R"({"Bogus": {}})", "Bogus");
    expect_key(R"({"GuidanceConfig": {"frequency": 3}})", "GuidanceConfig.frequency");
    expect_key(R"({"GuidanceConfig": {"blur": {"size": 3}}})", "GuidanceConfig.blur.size");
    expect_key(R"({"SceneSpec": {"target": {"color": [1,2,3], "cell": [0,0], "shape": 1}}})", "SceneSpec.target.shape");
}

TEST(Config, WrongTypesAndValues) {
    EXPECT_THROW(parse_json(R"({"GuidanceConfig": {"freq": "often"}})"), UsageError);
    EXPECT_THROW(parse_json(R"({"GuidanceConfig": {"bg": 300}})"), UsageError);
    EXPECT_THROW(parse_json(R"({"RoiParams": {"tool_axis": "w"}})"), UsageError);
    EXPECT_THROW(parse_json(R"({"RunConfig": {"ablate_axis": "alpha"}})"), UsageError);
    EXPECT_THROW(parse_json(R"({"EefPose": {"position": [1, 2]}})"), UsageError);
}

TEST(Config, SceneSpecSection) {
    const auto rc = parse_json(R"({"SceneSpec": {"target": {"color": [10, 20, 30], "cell": [1, 2]},
                                                  "distractors": [{"color": [1, 1, 1], "cell": [3, 3]}]}})");
    ASSERT_TRUE(rc.scene);
    EXPECT_EQ(rc.scenes, config::SceneSource::config);
    EXPECT_EQ(rc.scene->target.cell, (toy::Cell{1, 2}));
    EXPECT_EQ(rc.scene->distractors.size(), 1u);
    EXPECT_NO_THROW(rc.validate());
}

TEST(Config, InvalidJsonIsFormatError) {
    const auto dir = scratch_dir("badjson");
    write_text(dir / "c.json", "{\"GuidanceConfig\": {");
    EXPECT_THROW(config::load(dir / "c.json"), FormatError);
}

TEST(Harness, MetricsCsvLayout) {
    config::RunConfig rc;
    rc.scenes = config::SceneSource::designed;
    rc.episodes = 2;
    const auto records = harness::run_episodes(rc, rc.guidance, 1);
    std::ostringstream os;
    harness::write_metrics_csv(os, records, rc.seed);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "episode,seed,success,policy_calls,env_steps,guided_attention,guided_action");
    std::getline(is, line);
    EXPECT_EQ(line.rfind("0,2024,", 0), 0u) << line;
    std::getline(is, line);
    EXPECT_EQ(line.rfind("1,2025,", 0), 0u) << line;
    std::getline(is, line);
    EXPECT_EQ(line.rfind("summary,2024,", 0), 0u) << line;
    EXPECT_FALSE(std::getline(is, line));
}

TEST(Harness, ThreadCountDoesNotChangeResults) {
    config::RunConfig rc;
    rc.episodes = 12;
    const auto a = harness::run_episodes(rc, rc.guidance, 1), b = harness::run_episodes(rc, rc.guidance, 4);
    std::ostringstream sa, sb;
    harness::write_metrics_csv(sa, a, rc.seed);
    harness::write_metrics_csv(sb, b, rc.seed);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Harness, CallAccountingOnTheToy) {
    config::RunConfig rc;
    rc.episodes = 10;
    rc.guidance.freq = 20;
    for (const auto& r : harness::run_episodes(rc, rc.guidance, 1)) {
        EXPECT_EQ(r.metrics.policy_calls, r.metrics.env_steps + r.metrics.count(GuidanceKind::attention));
    }
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("run --bg 300"), 2);
    EXPECT_EQ(run_cli("run --seed notanumber"), 2);
    const auto dir = scratch_dir("usage");
    write_text(dir / "c.json", R"({"GuidanceConfig": {"nope": 1}})");
    EXPECT_EQ(run_cli("run --config " + (dir / "c.json").string()), 2);
    EXPECT_EQ(run_cli("ablate --axis alpha --out " + dir.string()), 2);
    EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, FormatErrors) {
    const auto dir = scratch_dir("format");
    std::mt19937_64 rng(1);
    png::write_rgb(dir / "img.png", fixtures::random_image(rng, 32, 32));
    auto bytes = atn1::encode(fixtures::random_tensor(rng, 2, 1, {4, 4}, 1));
    bytes.pop_back();
    std::ofstream(dir / "bad.atn", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                           static_cast<std::streamsize>(bytes.size()));
    const auto err = dir / "err.txt";
    EXPECT_EQ(run_cli("mask-attn " + (dir / "bad.atn").string() + " " + (dir / "img.png").string() + " --out " +
                          dir.string(),
                      err),
              3);
    EXPECT_NE(read_text(err).find("expected " + std::to_string(bytes.size() + 1)), std::string::npos);
    write_text(dir / "c.json", "{not json");
    EXPECT_EQ(run_cli("run --config " + (dir / "c.json").string()), 3);
}

TEST(Cli, ContractErrors) {
    const auto dir = scratch_dir("contract");
    std::mt19937_64 rng(2);
    png::write_rgb(dir / "img.png", fixtures::random_image(rng, 224, 224));
    png::write_gray(dir / "mask.png", {10, 10, std::vector<std::uint8_t>(100, 255)});
    EXPECT_EQ(run_cli("blend " + (dir / "img.png").string() + " " + (dir / "mask.png").string() + " --out " +
                      dir.string()),
              4);
    write_text(dir / "behind.json", R"({"EefPose": {"position": [0, 0, 2], "orientation": [1, 0, 0, 0]}})");
    EXPECT_EQ(run_cli("mask-act --config " + (dir / "behind.json").string() + " " + (dir / "img.png").string() +
                      " --out " + dir.string()),
              4);
}

TEST(Cli, MaskAttnWithUniformDumpIsHalfBlend) {
    const auto dir = scratch_dir("mask_attn");
    std::mt19937_64 rng(3);
    const auto img = fixtures::random_image(rng, 64, 48);
    png::write_rgb(dir / "img.png", img);
    atn1::write_file(dir / "u.atn", AttentionTensor(1, 2, 13, std::vector<double>(26, 1.0 / 13.0), {0, 12}, {3, 4}));
    ASSERT_EQ(run_cli("mask-attn " + (dir / "u.atn").string() + " " + (dir / "img.png").string() + " --out " +
                      dir.string() + " --bg 40 --overlay"),
              0);
    EXPECT_EQ(png::read_rgb(dir / "blended_attn.png"), blend(img, PixelMask(64, 48, 0.5), 40));
    const auto mask = png::read_gray(dir / "mask_attn.png");
    for (auto v : mask.data) EXPECT_EQ(v, 128);
    EXPECT_TRUE(fs::exists(dir / "overlay_attn.png"));
}

TEST(Cli, MaskActForwardAndDegenerate) {
    const auto dir = scratch_dir("mask_act");
    const auto scene = toy::designed_distractor_scene();
    const auto img = toy::render(scene, {scene.eef_start, 0.0, 0});
    png::write_rgb(dir / "img.png", img);
    const std::string image = (dir / "img.png").string();

    ASSERT_EQ(run_cli("mask-act --config " + std::string(ATA_CONFIG_DIR) + "/mask_act.json " + image + " --out " +
                      (dir / "fwd").string()),
              0);
    const auto fwd = png::read_gray(dir / "fwd" / "mask_act.png");
    const Pixel base = project_point(scene.camera, scene.eef_start);
    // Tool axis points image-up from the base pixel.
    const auto bx = static_cast<std::size_t>(std::lround(base.u));
    for (std::size_t y = 0; y + 5 < static_cast<std::size_t>(base.v); ++y) EXPECT_EQ(fwd.data[y * 224 + bx], 255);
    EXPECT_EQ(fwd.data[223 * 224 + bx], 0);

    ASSERT_EQ(run_cli("mask-act --config " + std::string(ATA_CONFIG_DIR) + "/mask_act.json " + image + " --out " +
                      (dir / "narrow").string() + " --alpha 120"),
              0);
    const auto narrow = png::read_gray(dir / "narrow" / "mask_act.png");
    for (std::size_t k = 0; k < fwd.data.size(); ++k) ASSERT_GE(fwd.data[k], narrow.data[k]);

    write_text(dir / "down.json", R"({"EefPose": {"position": [0, 0, 0.5], "orientation": [1, 0, 0, 0]}})");
    const auto err = dir / "err.txt";
    ASSERT_EQ(run_cli("mask-act --config " + (dir / "down.json").string() + " " + image + " --out " +
                          (dir / "down").string(),
                      err),
              0);
    EXPECT_NE(read_text(err).find("degenerate"), std::string::npos);
    EXPECT_EQ(png::read_rgb(dir / "down" / "blended_act.png"), img);
}

TEST(Cli, FlagsOverrideConfig) {
    const auto dir = scratch_dir("precedence");
    write_text(dir / "c.json", kFiveStepConfig);
    const std::string cfg = "--config " + (dir / "c.json").string();

    ASSERT_EQ(run_cli("run " + cfg + " --out " + (dir / "from_config").string()), 0);
    auto rows = read_csv(dir / "from_config" / "metrics.csv");
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[1][1], "31");
    EXPECT_EQ(rows[1][4], "5");
    EXPECT_EQ(rows[1][5], "3");  // attention at 0, 2, 4

    ASSERT_EQ(run_cli("run " + cfg + " --out " + (dir / "from_flags").string() + " --seed 77 --freq 4 --i-act 1"), 0);
    rows = read_csv(dir / "from_flags" / "metrics.csv");
    EXPECT_EQ(rows[1][1], "77");
    EXPECT_EQ(rows[1][5], "2");  // attention at 0, 4
    EXPECT_EQ(rows[1][6], "0");  // action guidance stays disabled by the config

    write_text(dir / "c2.json", R"({"RoiParams": {"alpha": 120, "z_depth": 0.5},
      "EefPose": {"position": [0, -0.35, 0.1], "orientation": [0.7071067811865476, -0.7071067811865476, 0, 0]},
      "GuidanceConfig": {"bg": 10}, "RunConfig": {"out": ")" + (dir / "cfg_out").string() + R"("}})");
    const auto scene = toy::designed_distractor_scene();
    png::write_rgb(dir / "img.png", toy::render(scene, {scene.eef_start, 0.0, 0}));
    const std::string act = "mask-act --config " + (dir / "c2.json").string() + " " + (dir / "img.png").string();
    ASSERT_EQ(run_cli(act), 0);
    ASSERT_EQ(run_cli(act + " --out " + (dir / "flag_out").string() + " --alpha 150 --z-depth 0.3 --bg 200"), 0);
    const auto c_blend = png::read_rgb(dir / "cfg_out" / "blended_act.png");
    const auto f_blend = png::read_rgb(dir / "flag_out" / "blended_act.png");
    const auto c_mask = png::read_gray(dir / "cfg_out" / "mask_act.png");
    const auto f_mask = png::read_gray(dir / "flag_out" / "mask_act.png");
    // Bottom-left corner lies outside both cones: pure background.
    EXPECT_EQ(c_blend.at(0, 223, 0), 10);
    EXPECT_EQ(f_blend.at(0, 223, 0), 200);
    std::size_t c_on = 0, f_on = 0;
    for (std::size_t k = 0; k < c_mask.data.size(); ++k) c_on += c_mask.data[k] > 0, f_on += f_mask.data[k] > 0;
    EXPECT_GT(f_on, c_on);
}

TEST(Cli, DumpFramesWritesOneImagePerStep) {
    const auto dir = scratch_dir("frames");
    write_text(dir / "c.json", kFiveStepConfig);
    ASSERT_EQ(run_cli("run --config " + (dir / "c.json").string() + " --dump-frames --out " + dir.string()), 0);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir / "frames")) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    EXPECT_EQ(names, (std::vector<std::string>{"step_000000.png", "step_000001.png", "step_000002.png",
                                               "step_000003.png", "step_000004.png"}));
}

TEST(Cli, BenchWritesSummary) {
    const auto dir = scratch_dir("bench");
    write_text(dir / "c.json", R"({"RunConfig": {"episodes": 4}})");
    ASSERT_EQ(run_cli("bench --config " + (dir / "c.json").string() + " --out " + dir.string()), 0);
    const auto rows = read_csv(dir / "summary.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"episodes", "avg_sr", "avg_sic", "avg_ic"}));
    EXPECT_EQ(rows[1][0], "4");
    EXPECT_EQ(read_csv(dir / "metrics.csv").size(), 6u);
}

TEST(Cli, BlendMatchesLibrary) {
    const auto dir = scratch_dir("blend");
    std::mt19937_64 rng(4);
    const auto img = fixtures::random_image(rng, 20, 10);
    png::GrayImage mask{20, 10, std::vector<std::uint8_t>(200)};
    for (auto& v : mask.data) v = static_cast<std::uint8_t>(rng() % 256);
    png::write_rgb(dir / "img.png", img);
    png::write_gray(dir / "mask.png", mask);
    ASSERT_EQ(run_cli("blend " + (dir / "img.png").string() + " " + (dir / "mask.png").string() + " --out " +
                      dir.string()),
              0);
    EXPECT_EQ(png::read_rgb(dir / "blended.png"), blend(img, from_gray8(20, 10, mask.data)));
}
