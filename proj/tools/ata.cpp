// ata: command-line front end for attention- and action-guided observation
// masking and the toy tabletop harness.
//
// Exit status: 0 success, 1 I/O or other runtime failure, 2 usage or
// configuration error, 3 malformed input file, 4 contract violation.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ata/action_roi.hpp"
#include "ata/atn1.hpp"
#include "ata/attn_mask.hpp"
#include "ata/compositor.hpp"
#include "ata/config.hpp"
#include "ata/error.hpp"
#include "ata/harness.hpp"
#include "ata/png_io.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2, kFormat = 3, kContract = 4 };

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("ATA_LOG");
        const std::string v = env ? env : "";
        if (v == "error") return LogLevel::error;
        if (v == "info") return LogLevel::info;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

void log(LogLevel level, const std::string& msg) {
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    if (level <= log_level()) std::cerr << "ata: " << names[static_cast<int>(level)] << ": " << msg << '\n';
}

// Flags shared by every subcommand. Unset flags leave the config untouched.
struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> freq;
    std::optional<std::size_t> i_act;
    std::optional<double> alpha;
    std::optional<double> z_depth;
    std::optional<int> bg;
    bool dump_frames = false;
    bool overlay = false;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
        app->add_option("--out", out, "output directory");
        app->add_option("--seed", seed, "base seed");
        app->add_option("--freq", freq, "attention trigger frequency (0 = first frame only)");
        app->add_option("--i-act", i_act, "step at which action guidance fires");
        app->add_option("--alpha", alpha, "RoI opening angle in degrees");
        app->add_option("--z-depth", z_depth, "RoI ray length in meters");
        app->add_option("--bg", bg, "background gray level")->check(CLI::Range(0, 255));
        app->add_flag("--dump-frames", dump_frames, "write every model input frame");
        app->add_flag("--overlay", overlay, "write inspection overlays");
    }

    ata::config::RunConfig resolve() const {
        ata::config::RunConfig rc;
        rc.guidance.layer = ata::toy::ToyPolicyParams::kSemanticLayer;
        if (!config.empty()) rc = ata::config::load(config);
        if (!out.empty()) rc.out_dir = out;
        if (seed) rc.seed = *seed;
        if (freq) rc.guidance.freq = *freq;
        if (i_act) rc.guidance.i_act = *i_act;
        if (alpha) rc.guidance.roi.alpha_deg = *alpha;
        if (z_depth) rc.guidance.roi.z_depth = *z_depth;
        if (bg) rc.guidance.bg = static_cast<std::uint8_t>(*bg);
        rc.suite.scenes = rc.episodes;
        rc.suite.base_seed = rc.seed;
        rc.validate();
        log(LogLevel::debug, "output directory " + rc.out_dir.string() + ", seed " + std::to_string(rc.seed));
        return rc;
    }
};

fs::path prepare_out(const ata::config::RunConfig& rc) {
    fs::create_directories(rc.out_dir);
    return rc.out_dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ata::Error("cannot write " + path.string());
    os << text;
}

int cmd_mask_attn(const CommonFlags& flags, const std::string& dump_path, const std::string& image_path) {
    const auto rc = flags.resolve();
    const auto tensor = ata::atn1::read_file(dump_path);
    const auto img = ata::png::read_rgb(image_path);
    const auto mask = ata::attention_mask(tensor, img.width, img.height);
    const auto dir = prepare_out(rc);
    ata::png::write_mask(dir / "mask_attn.png", mask);
    ata::png::write_rgb(dir / "blended_attn.png", ata::blend(img, mask, rc.guidance.bg));
    if (flags.overlay) ata::png::write_rgb(dir / "overlay_attn.png", ata::heatmap_overlay(img, mask));
    log(LogLevel::info, "attention mask from layer " + std::to_string(tensor.layer_index()) + " written to " +
                            dir.string());
    return kOk;
}

int cmd_mask_act(const CommonFlags& flags, const std::string& image_path) {
    const auto rc = flags.resolve();
    if (!rc.pose) throw ata::UsageError("mask-act needs an EefPose section in the config");
    const auto camera = rc.camera.value_or(ata::toy::default_camera());
    if (!rc.camera) log(LogLevel::info, "no CameraModel section; using the toy tabletop camera");
    const auto img = ata::png::read_rgb(image_path);
    if (img.width != camera.width || img.height != camera.height) {
        throw ata::StructuralError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                   " but the camera is " + std::to_string(camera.width) + "x" +
                                   std::to_string(camera.height));
    }
    const auto am = ata::action_mask(camera, *rc.pose, rc.guidance.roi);
    if (am.degenerate) log(LogLevel::warn, "projected tool direction is degenerate; using an all-ones mask");
    const auto dir = prepare_out(rc);
    ata::png::write_mask(dir / "mask_act.png", am.mask);
    ata::png::write_rgb(dir / "blended_act.png", ata::blend(img, am.mask, rc.guidance.bg));
    if (flags.overlay) ata::png::write_rgb(dir / "overlay_act.png", ata::red_overlay(img, am.mask));
    return kOk;
}

int cmd_blend(const CommonFlags& flags, const std::string& image_path, const std::string& mask_path) {
    const auto rc = flags.resolve();
    const auto img = ata::png::read_rgb(image_path);
    const auto mask = ata::png::read_mask(mask_path);
    const auto dir = prepare_out(rc);
    ata::png::write_rgb(dir / "blended.png", ata::blend(img, mask, rc.guidance.bg));
    return kOk;
}

int cmd_run(const CommonFlags& flags) {
    auto rc = flags.resolve();
    rc.episodes = 1;
    const auto dir = prepare_out(rc);
    ata::FrameSink sink;
    if (flags.dump_frames) {
        fs::create_directories(dir / "frames");
        sink = [&](std::size_t step, const ata::Image& frame) {
            char name[32];
            std::snprintf(name, sizeof name, "step_%06zu.png", step);
            ata::png::write_rgb(dir / "frames" / name, frame);
        };
    }
    const std::vector<ata::harness::EpisodeRecord> records{ata::harness::run_one(rc, rc.guidance, 0, sink)};
    if (records.front().metrics.aborted) log(LogLevel::error, "episode aborted: " + records.front().metrics.diagnostic);
    std::ostringstream csv;
    ata::harness::write_metrics_csv(csv, records, rc.seed);
    write_text(dir / "metrics.csv", csv.str());
    std::cout << csv.str();
    return kOk;
}

int cmd_bench(const CommonFlags& flags) {
    const auto rc = flags.resolve();
    const auto dir = prepare_out(rc);
    const auto records = ata::harness::run_episodes(rc, rc.guidance);
    for (const auto& r : records)
        if (r.metrics.aborted) log(LogLevel::warn, "episode " + std::to_string(r.index) + " aborted: " + r.metrics.diagnostic);
    std::ostringstream metrics, summary;
    ata::harness::write_metrics_csv(metrics, records, rc.seed);
    ata::harness::write_summary_csv(summary, ata::harness::summarize(records));
    write_text(dir / "metrics.csv", metrics.str());
    write_text(dir / "summary.csv", summary.str());
    std::cout << summary.str();
    return kOk;
}

int cmd_ablate(const CommonFlags& flags, const std::string& axis) {
    auto rc = flags.resolve();
    if (!axis.empty()) {
        if (axis == "freq") rc.ablate_axis = ata::config::AblationAxis::freq;
        else if (axis == "blur") rc.ablate_axis = ata::config::AblationAxis::blur;
        else throw ata::UsageError("unknown ablation axis '" + axis + "' (expected freq or blur)");
    }
    const auto dir = prepare_out(rc);
    const auto rows = rc.ablate_axis == ata::config::AblationAxis::freq ? ata::harness::ablate_freq(rc)
                                                                         : ata::harness::ablate_blur(rc);
    std::ostringstream csv;
    ata::harness::write_ablation_csv(csv, rows);
    write_text(dir / "ablation.csv", csv.str());
    std::cout << csv.str();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention- and action-guided observation masking for policy inference"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string dump_path, image_path, mask_path, axis;

    auto* mask_attn = app.add_subcommand("mask-attn", "attention dump + image -> mask and blended image");
    flags.attach(mask_attn);
    mask_attn->add_option("dump", dump_path, "ATN1 attention dump")->required();
    mask_attn->add_option("image", image_path, "input PNG")->required()->check(CLI::ExistingFile);

    auto* mask_act = app.add_subcommand("mask-act", "EEF pose + camera -> conic RoI mask and blended image");
    flags.attach(mask_act);
    mask_act->add_option("image", image_path, "input PNG")->required()->check(CLI::ExistingFile);

    auto* blend = app.add_subcommand("blend", "blend an image with a grayscale mask");
    flags.attach(blend);
    blend->add_option("image", image_path, "input PNG")->required()->check(CLI::ExistingFile);
    blend->add_option("mask", mask_path, "grayscale mask PNG")->required()->check(CLI::ExistingFile);

    auto* run = app.add_subcommand("run", "run one guided episode on the toy tabletop");
    flags.attach(run);
    auto* bench = app.add_subcommand("bench", "run N seeded episodes and summarize");
    flags.attach(bench);
    auto* ablate = app.add_subcommand("ablate", "sweep trigger frequency or the first-frame blur study");
    flags.attach(ablate);
    ablate->add_option("--axis", axis, "freq or blur");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*mask_attn) return cmd_mask_attn(flags, dump_path, image_path);
        if (*mask_act) return cmd_mask_act(flags, image_path);
        if (*blend) return cmd_blend(flags, image_path, mask_path);
        if (*run) return cmd_run(flags);
        if (*bench) return cmd_bench(flags);
        if (*ablate) return cmd_ablate(flags, axis);
    } catch (const ata::UsageError& e) {
        log(LogLevel::error, e.what());
        return kUsage;
    } catch (const ata::FormatError& e) {
        log(LogLevel::error, e.what());
        return kFormat;
    } catch (const ata::ContractError& e) {
        log(LogLevel::error, e.what());
        return kContract;
    } catch (const ata::StructuralError& e) {
        log(LogLevel::error, e.what());
        return kContract;
    } catch (const ata::NumericError& e) {
        log(LogLevel::error, e.what());
        return kContract;
    } catch (const ata::BehindCameraError& e) {
        log(LogLevel::error, e.what());
        return kContract;
    } catch (const ata::DegenerateRayError& e) {
        log(LogLevel::error, e.what());
        return kContract;
    } catch (const std::exception& e) {
        log(LogLevel::error, e.what());
        return kRuntime;
    }
    return kUsage;
}
