#pragma once

#include <array>

#include "field.hpp"
#include "tape.hpp"

namespace dmk::geom {

// Points warped to depth <= kZMin are masked out of every loss.
inline constexpr double kZMin = 1e-3;

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    // Throws InputError unless fx, fy > 0 and the centre lies inside the image.
    void validate(int width, int height) const;
};

// Euler angles (radians) applied x first, then y, then z: R = Rz * Ry * Rx.
struct RigidMotion {
    Vec3 euler{0.0, 0.0, 0.0};
    Vec3 translation{0.0, 0.0, 0.0};
};

Mat3 euler_to_rotation(const Vec3& euler);
Vec3 rotation_to_euler(const Mat3& r);
Mat3 transpose(const Mat3& r);
Mat3 multiply(const Mat3& a, const Mat3& b);
Vec3 apply(const Mat3& r, const Vec3& x);

// The motion mapping camera-b points back to camera a: (R^T, -R^T t).
RigidMotion inverse(const RigidMotion& m);

// ---------------------------------------------------------------------------
// Differentiable counterparts.

using VarMat3 = std::array<std::array<ad::Var, 3>, 3>;

VarMat3 euler_to_rotation(ad::Var rx, ad::Var ry, ad::Var rz);
VarMat3 constant_rotation(ad::Tape& tape, const Mat3& r);

// Camera matrix entries as scalar nodes, either constants or trainable.
struct CameraVars {
    ad::Var fx, fy, cx, cy;

    static CameraVars constant(ad::Tape& tape, const Intrinsics& k);
};

// T(u, v) = T_obj(u, v) + T_ego. T_ego components are scalar nodes.
ad::VarField3 total_translation(const ad::VarField3& t_obj, const std::array<ad::Var, 3>& t_ego);

struct WarpResult {
    ad::Var u;  // target column, pixels
    ad::Var v;  // target row, pixels
    ad::Var z;  // depth in the target camera
    Field mask; // 0 where z <= kZMin or (u, v) leaves the image
};

// Per-pixel z' p' = K R K^-1 z p + K T(u, v) over the full pixel grid.
WarpResult warp(ad::Var depth, const CameraVars& k, const VarMat3& r, const ad::VarField3& t);

// Same transform for arbitrary source coordinates; `image` bounds the mask.
WarpResult warp_points(ad::Var u, ad::Var v, ad::Var depth, const CameraVars& k, const VarMat3& r,
                       const ad::VarField3& t, ad::Shape image);

struct Resampled {
    std::array<ad::Var, 3> frame;
    ad::Var depth;
    // Warp validity AND sample validity.
    Field mask;
};

// Reads the source frame and source depth at the warped coordinates.
Resampled resample(const std::array<ad::Var, 3>& frame, ad::Var depth, const WarpResult& w);

}  // namespace dmk::geom
