#pragma once

// Action-guided region of interest: the end-effector tool axis is projected
// into the image and turned into a soft conic-sector mask.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "ata/attn_mask.hpp"
#include "ata/error.hpp"
#include "ata/geometry.hpp"

namespace ata {

/// Unit quaternion, (w, x, y, z) order, right-handed, world frame.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
};

struct EefPose {
    Vec3 position{0.0, 0.0, 0.0};  // meters, world frame
    Quaternion orientation{};

    static constexpr double kUnitTolerance = 1e-6;

    void validate() const {
        for (double v : position)
            if (!std::isfinite(v)) throw NumericError("end-effector position is not finite");
        if (std::abs(orientation.norm() - 1.0) > kUnitTolerance) {
            throw ContractError("end-effector quaternion is not unit length (norm " +
                                std::to_string(orientation.norm()) + ")");
        }
    }
};

/// Pinhole camera. `rotation` and `translation` map world points into the
/// camera frame: p_c = R * p_w + t.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation = identity3();
    Vec3 translation{0.0, 0.0, 0.0};
    std::size_t width = 1;
    std::size_t height = 1;

    static constexpr double kOrthoTolerance = 1e-6;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("camera focal lengths must be positive");
        if (width == 0 || height == 0) throw ContractError("camera image size must be positive");
        const Mat3 rrt = rotation * transpose(rotation);
        const Mat3 eye = identity3();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (std::abs(rrt[i][j] - eye[i][j]) > kOrthoTolerance)
                    throw ContractError("camera rotation is not orthonormal");
        if (std::abs(determinant(rotation) - 1.0) > kOrthoTolerance) {
            throw ContractError("camera rotation must have determinant +1");
        }
    }
};

enum class ToolAxis { x, y, z };

inline std::optional<ToolAxis> parse_tool_axis(const std::string& s) {
    if (s == "x") return ToolAxis::x;
    if (s == "y") return ToolAxis::y;
    if (s == "z") return ToolAxis::z;
    return std::nullopt;
}

inline const char* to_string(ToolAxis a) {
    switch (a) {
        case ToolAxis::x: return "x";
        case ToolAxis::y: return "y";
        case ToolAxis::z: return "z";
    }
    return "?";
}

struct RoiParams {
    double alpha_deg = 150.0;  // full opening angle
    double z_depth = 0.5;      // ray length, meters
    ToolAxis tool_axis = ToolAxis::z;

    void validate() const {
        if (!(alpha_deg > 0.0 && alpha_deg < 360.0)) throw ContractError("alpha must lie in (0, 360) degrees");
        if (!(z_depth > 0.0)) throw ContractError("z_depth must be positive");
    }
};

struct Pixel {
    double u = 0.0;
    double v = 0.0;
};

struct ProjectedRay {
    Pixel base;
    double du = 0.0;
    double dv = 0.0;
    bool degenerate = false;

    static constexpr double kMinLength = 1e-6;
};

inline Mat3 rotation_from_quaternion(const Quaternion& q_in) {
    const double n = q_in.norm();
    if (!std::isfinite(n) || n < 1e-12) throw NumericError("cannot build a rotation from a zero quaternion");
    const double w = q_in.w / n, x = q_in.x / n, y = q_in.y / n, z = q_in.z / n;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

/// Tool-frame axis expressed in the world frame: the selected column of R.
inline Vec3 tool_direction(const EefPose& pose, ToolAxis axis) {
    pose.validate();
    const Mat3 r = rotation_from_quaternion(pose.orientation);
    const int c = static_cast<int>(axis);
    Vec3 d{r[0][c], r[1][c], r[2][c]};
    return (1.0 / norm(d)) * d;
}

inline constexpr double kMinCameraDepth = 1e-6;

inline Pixel project_point(const CameraModel& cam, const Vec3& p_world) {
    const Vec3 pc = cam.rotation * p_world + cam.translation;
    if (!(pc[2] > kMinCameraDepth)) {
        throw BehindCameraError("point lies behind the camera (depth " + std::to_string(pc[2]) + ")");
    }
    return {cam.fx * pc[0] / pc[2] + cam.cx, cam.fy * pc[1] / pc[2] + cam.cy};
}

/// Projects the EEF position and the tip `position + z_depth * d`. A tip
/// behind the camera yields a degenerate ray rather than an error.
inline ProjectedRay project_ray(const CameraModel& cam, const EefPose& pose, const RoiParams& params) {
    params.validate();
    const Vec3 d = tool_direction(pose, params.tool_axis);
    ProjectedRay ray;
    ray.base = project_point(cam, pose.position);
    try {
        const Pixel tip = project_point(cam, pose.position + params.z_depth * d);
        ray.du = tip.u - ray.base.u;
        ray.dv = tip.v - ray.base.v;
    } catch (const BehindCameraError&) {
        ray.degenerate = true;
        return ray;
    }
    ray.degenerate = !(std::hypot(ray.du, ray.dv) >= ProjectedRay::kMinLength);
    return ray;
}

/// Soft sector weight max((psi - cos(alpha/2)) / (1 - cos(alpha/2)), 0) for
/// the offset (ou, ov) from the base pixel, where psi is the cosine between
/// the offset and the ray direction. A zero offset maps to 1.
inline double conic_weight(double ou, double ov, double du, double dv, double cos_half) {
    const double len = std::hypot(ou, ov);
    if (len == 0.0) return 1.0;
    const double psi = std::clamp((ou * du + ov * dv) / (len * std::hypot(du, dv)), -1.0, 1.0);
    return std::max((psi - cos_half) / (1.0 - cos_half), 0.0);
}

/// Conic-sector mask evaluated at integer pixel coordinates (u, v) = (x, y).
inline PixelMask conic_mask(const ProjectedRay& ray, double alpha_deg, std::size_t width, std::size_t height) {
    if (ray.degenerate) throw DegenerateRayError("projected motion direction is degenerate");
    if (!(alpha_deg > 0.0 && alpha_deg < 360.0)) throw ContractError("alpha must lie in (0, 360) degrees");
    const double cos_half = std::cos(deg_to_rad(alpha_deg) / 2.0);
    PixelMask out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const double ov = static_cast<double>(y) - ray.base.v;
        for (std::size_t x = 0; x < width; ++x) {
            out.at(x, y) = conic_weight(static_cast<double>(x) - ray.base.u, ov, ray.du, ray.dv, cos_half);
        }
    }
    return out;
}

struct ActionMask {
    PixelMask mask;
    ProjectedRay ray;
    bool degenerate = false;  // mask is all ones
};

/// Full action-guided path at camera resolution, with the all-ones fallback
/// for a degenerate ray. A base point behind the camera still throws.
inline ActionMask action_mask(const CameraModel& cam, const EefPose& pose, const RoiParams& params) {
    cam.validate();
    ActionMask out{PixelMask(cam.width, cam.height, 1.0), project_ray(cam, pose, params), false};
    if (out.ray.degenerate) {
        out.degenerate = true;
        return out;
    }
    out.mask = conic_mask(out.ray, params.alpha_deg, cam.width, cam.height);
    return out;
}

}  // namespace ata
