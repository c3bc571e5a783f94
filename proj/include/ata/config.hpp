#pragma once

// JSON configuration. Top-level sections are named after the types they
// fill: GuidanceConfig, RoiParams, CameraModel, EefPose, SceneSpec,
// ToyPolicyParams, RunConfig. Every section is optional; unknown keys are
// rejected with their full dotted name.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#if __has_include(<json.hpp>)
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include "ata/action_roi.hpp"
#include "ata/error.hpp"
#include "ata/scheduler.hpp"
#include "ata/toy_policy_env.hpp"

namespace ata::config {

using Json = nlohmann::json;

enum class SceneSource { suite, designed, config };

enum class AblationAxis { freq, blur };

struct RunConfig {
    GuidanceConfig guidance{};
    toy::ToyPolicyParams policy{};
    SceneSource scenes = SceneSource::suite;
    std::optional<toy::SceneSpec> scene;  // set when scenes == config
    toy::SuiteParams suite{};
    std::optional<EefPose> pose;          // mask-act inputs
    std::optional<CameraModel> camera;
    std::filesystem::path out_dir = "out";
    std::size_t episodes = 50;
    std::uint64_t seed = 2024;
    AblationAxis ablate_axis = AblationAxis::freq;
    std::vector<std::size_t> ablate_freqs{0, 20, 50, 100, 200};

    void validate() const {
        if (episodes < 1) throw UsageError("RunConfig.episodes must be >= 1");
        guidance.validate();
        if (scenes == SceneSource::config && !scene) throw UsageError("RunConfig.scenes is 'config' but no SceneSpec given");
        if (scene) scene->validate();
        if (camera) camera->validate();
        if (pose) pose->validate();
    }
};

namespace detail {

class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw UsageError("config key '" + path_ + "' must be an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [k, _] : j_.items()) {
            bool known = false;
            for (const char* a : keys) known = known || k == a;
            if (!known) throw UsageError("unknown config key '" + key(k) + "'");
        }
    }

    bool has(const char* k) const { return j_.contains(k); }
    const Json& raw(const char* k) const { return j_.at(k); }
    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    Section sub(const char* k) const { return Section(j_.at(k), key(k)); }

    template <class T>
    void get(const char* k, T& dst) const {
        if (!j_.contains(k)) return;
        try {
            dst = j_.at(k).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("config key '" + key(k) + "' has the wrong type: " + e.what());
        }
    }

private:
    const Json& j_;
    std::string path_;
};

inline Vec3 vec3(const Section& s, const char* k) {
    std::vector<double> v;
    s.get(k, v);
    if (v.size() != 3) throw UsageError("config key '" + s.key(k) + "' must hold 3 numbers");
    return {v[0], v[1], v[2]};
}

inline Quaternion quaternion(const Section& s, const char* k) {
    std::vector<double> v;
    s.get(k, v);
    if (v.size() != 4) throw UsageError("config key '" + s.key(k) + "' must hold [w, x, y, z]");
    return {v[0], v[1], v[2], v[3]};
}

inline toy::Rgb rgb(const Section& s, const char* k) {
    std::vector<int> v;
    s.get(k, v);
    if (v.size() != 3) throw UsageError("config key '" + s.key(k) + "' must hold [r, g, b]");
    toy::Rgb c{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (v[i] < 0 || v[i] > 255) throw UsageError("config key '" + s.key(k) + "' has a channel outside 0..255");
        c[i] = static_cast<std::uint8_t>(v[i]);
    }
    return c;
}

inline toy::Cell cell(const Section& s, const char* k) {
    std::vector<std::size_t> v;
    s.get(k, v);
    if (v.size() != 2) throw UsageError("config key '" + s.key(k) + "' must hold [row, col]");
    return {v[0], v[1]};
}

inline toy::SceneObject scene_object(const Section& s) {
    s.allow({"color", "cell"});
    return {rgb(s, "color"), cell(s, "cell")};
}

inline std::uint8_t gray_level(const Section& s, const char* k, std::uint8_t fallback) {
    int v = fallback;
    s.get(k, v);
    if (v < 0 || v > 255) throw UsageError("config key '" + s.key(k) + "' must lie in 0..255");
    return static_cast<std::uint8_t>(v);
}

}  // namespace detail

inline RoiParams parse_roi(const detail::Section& s, RoiParams roi = {}) {
    s.allow({"alpha", "z_depth", "tool_axis"});
    s.get("alpha", roi.alpha_deg);
    s.get("z_depth", roi.z_depth);
    if (s.has("tool_axis")) {
        std::string a;
        s.get("tool_axis", a);
        const auto axis = parse_tool_axis(a);
        if (!axis) throw UsageError("config key '" + s.key("tool_axis") + "' must be x, y or z");
        roi.tool_axis = *axis;
    }
    return roi;
}

inline CameraModel parse_camera(const detail::Section& s, CameraModel cam = {}) {
    s.allow({"fx", "fy", "cx", "cy", "rotation", "translation", "width", "height"});
    s.get("fx", cam.fx);
    s.get("fy", cam.fy);
    s.get("cx", cam.cx);
    s.get("cy", cam.cy);
    s.get("width", cam.width);
    s.get("height", cam.height);
    if (s.has("rotation")) {
        std::vector<std::vector<double>> r;
        s.get("rotation", r);
        if (r.size() != 3) throw UsageError("config key '" + s.key("rotation") + "' must be 3x3");
        for (std::size_t i = 0; i < 3; ++i) {
            if (r[i].size() != 3) throw UsageError("config key '" + s.key("rotation") + "' must be 3x3");
            for (std::size_t j = 0; j < 3; ++j) cam.rotation[i][j] = r[i][j];
        }
    }
    if (s.has("translation")) cam.translation = detail::vec3(s, "translation");
    return cam;
}

inline EefPose parse_pose(const detail::Section& s) {
    s.allow({"position", "orientation"});
    EefPose pose{{0.0, 0.0, 0.0}, toy::default_eef_orientation()};
    if (s.has("position")) pose.position = detail::vec3(s, "position");
    if (s.has("orientation")) pose.orientation = detail::quaternion(s, "orientation");
    return pose;
}

inline GuidanceConfig parse_guidance(const detail::Section& s, GuidanceConfig g) {
    s.allow({"layer", "freq", "i_act", "max_steps", "bg", "attention_guidance_enabled", "action_guidance_enabled",
             "chunk_execution", "blur"});
    s.get("layer", g.layer);
    s.get("freq", g.freq);
    s.get("i_act", g.i_act);
    s.get("max_steps", g.max_steps);
    g.bg = detail::gray_level(s, "bg", g.bg);
    s.get("attention_guidance_enabled", g.attention_guidance_enabled);
    s.get("action_guidance_enabled", g.action_guidance_enabled);
    if (s.has("chunk_execution")) {
        std::string mode;
        s.get("chunk_execution", mode);
        if (mode == "full") g.chunk_execution = ChunkExecution::full;
        else if (mode == "first") g.chunk_execution = ChunkExecution::first;
        else throw UsageError("config key '" + s.key("chunk_execution") + "' must be 'full' or 'first'");
    }
    if (s.has("blur")) {
        const auto b = s.sub("blur");
        b.allow({"mode", "probability", "kernel_size", "sigma"});
        if (b.has("mode")) {
            std::string mode;
            b.get("mode", mode);
            if (mode == "none") g.blur.mode = BlurAblation::Mode::none;
            else if (mode == "first_frame") g.blur.mode = BlurAblation::Mode::first_frame;
            else if (mode == "random_frames") g.blur.mode = BlurAblation::Mode::random_frames;
            else throw UsageError("config key '" + b.key("mode") + "' must be none, first_frame or random_frames");
        }
        b.get("probability", g.blur.probability);
        b.get("kernel_size", g.blur.kernel_size);
        b.get("sigma", g.blur.sigma);
    }
    return g;
}

inline toy::SceneSpec parse_scene(const detail::Section& s, const CameraModel& camera) {
    s.allow({"width", "height", "grid", "target", "distractors", "eef_start", "eef_orientation", "seed"});
    toy::SceneSpec scene;
    scene.camera = camera;
    s.get("width", scene.width);
    s.get("height", scene.height);
    if (s.has("grid")) {
        const auto g = detail::cell(s, "grid");
        scene.grid = {g.row, g.col};
    }
    if (!s.has("target")) throw UsageError("config key '" + s.key("target") + "' is required");
    scene.target = detail::scene_object(s.sub("target"));
    if (s.has("distractors")) {
        const auto& arr = s.raw("distractors");
        if (!arr.is_array()) throw UsageError("config key '" + s.key("distractors") + "' must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            scene.distractors.push_back(
                detail::scene_object(detail::Section(arr[i], s.key("distractors") + "[" + std::to_string(i) + "]")));
        }
    }
    if (s.has("eef_start")) scene.eef_start = detail::vec3(s, "eef_start");
    if (s.has("eef_orientation")) scene.eef_orientation = detail::quaternion(s, "eef_orientation");
    s.get("seed", scene.seed);
    return scene;
}

inline RunConfig parse(const Json& root) {
    const detail::Section top(root, "");
    top.allow({"GuidanceConfig", "RoiParams", "CameraModel", "EefPose", "SceneSpec", "ToyPolicyParams", "RunConfig"});

    RunConfig rc;
    // The toy tabletop's probe layer is the semantic one.
    rc.guidance.layer = toy::ToyPolicyParams::kSemanticLayer;
    if (top.has("GuidanceConfig")) rc.guidance = parse_guidance(top.sub("GuidanceConfig"), rc.guidance);
    if (top.has("RoiParams")) rc.guidance.roi = parse_roi(top.sub("RoiParams"), rc.guidance.roi);

    CameraModel camera = toy::default_camera();
    if (top.has("CameraModel")) {
        camera = parse_camera(top.sub("CameraModel"), camera);
        rc.camera = camera;
    }
    if (top.has("EefPose")) rc.pose = parse_pose(top.sub("EefPose"));

    if (top.has("ToyPolicyParams")) {
        const auto s = top.sub("ToyPolicyParams");
        s.allow({"horizon", "decision_scale", "semantic_scale", "head_gains"});
        s.get("horizon", rc.policy.horizon);
        s.get("decision_scale", rc.policy.decision_scale);
        s.get("semantic_scale", rc.policy.semantic_scale);
        s.get("head_gains", rc.policy.head_gains);
    }

    if (top.has("SceneSpec")) {
        rc.scene = parse_scene(top.sub("SceneSpec"), camera);
        rc.scenes = SceneSource::config;
    }

    if (top.has("RunConfig")) {
        const auto s = top.sub("RunConfig");
        s.allow({"episodes", "seed", "out", "scenes", "lure_probability", "max_other_distractors", "ablate_axis",
                 "ablate_freqs"});
        s.get("episodes", rc.episodes);
        s.get("seed", rc.seed);
        if (s.has("out")) {
            std::string out;
            s.get("out", out);
            rc.out_dir = out;
        }
        if (s.has("scenes")) {
            std::string src;
            s.get("scenes", src);
            if (src == "suite") rc.scenes = SceneSource::suite;
            else if (src == "designed") rc.scenes = SceneSource::designed;
            else if (src == "config") rc.scenes = SceneSource::config;
            else throw UsageError("config key '" + s.key("scenes") + "' must be suite, designed or config");
        }
        s.get("lure_probability", rc.suite.lure_probability);
        s.get("max_other_distractors", rc.suite.max_other_distractors);
        if (s.has("ablate_axis")) {
            std::string axis;
            s.get("ablate_axis", axis);
            if (axis == "freq") rc.ablate_axis = AblationAxis::freq;
            else if (axis == "blur") rc.ablate_axis = AblationAxis::blur;
            else throw UsageError("config key '" + s.key("ablate_axis") + "' must be freq or blur");
        }
        s.get("ablate_freqs", rc.ablate_freqs);
    }
    return rc;
}

inline RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    Json root;
    try {
        root = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("config " + path.string() + " is not valid JSON: " + e.what(), e.byte);
    }
    return parse(root);
}

}  // namespace ata::config
