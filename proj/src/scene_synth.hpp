#pragma once

#include <cstdint>
#include <vector>

#include "camera.hpp"
#include "field.hpp"

namespace dmk::synth {

// Fronto-parallel textured rectangle, given by its pixel footprint in
// frame a (inclusive integer bounds) and its depth there. Between the frames
// it moves by the ego-motion plus `translation` (camera-b coordinates).
struct ObjectSpec {
    int u0 = 0, v0 = 0, u1 = 0, v1 = 0;
    double depth = 1.0;
    Vec3 translation{0.0, 0.0, 0.0};
};

struct SceneSpec {
    int width = 64;
    int height = 48;
    geom::Intrinsics k{48.0, 48.0, 32.0, 24.0};
    // Background plane: depth_far on the top row, depth_near on the bottom
    // row, inverse depth linear in between (a tilted 3D plane).
    double depth_near = 4.0;
    double depth_far = 12.0;
    std::uint64_t texture_seed = 1;
    std::vector<ObjectSpec> objects;
    geom::RigidMotion ego;
    double noise_sigma = 0.0;

    // Throws InputError with a field path on violation.
    void validate() const;
};

struct SceneSample {
    int width = 0;
    int height = 0;
    geom::Intrinsics k;
    RgbImage frame_a, frame_b;
    Field depth_a, depth_b;
    // Residual translation ground truth: a->b on frame a's grid, b->a on b's.
    Field3 t_obj_ab, t_obj_ba;
    geom::RigidMotion ego_ab, ego_ba;
    Field object_mask_a, object_mask_b;
    // 1 where the pixel's surface is visible at its ground-truth position in
    // the other frame (bilinear footprint on the same surface, in-frame).
    Field valid_a, valid_b;
};

SceneSample render_pair(const SceneSpec& spec, std::uint64_t seed);

// Max per-pixel absolute colour difference between frame a and frame b
// sampled at the ground-truth warp of frame a, over valid_a pixels.
double photometric_residual(const SceneSample& sample);

inline constexpr double kSelfCheckLimit = 2e-2;

// photometric_residual, raising ContractError above `limit`.
double self_check(const SceneSample& sample, double limit = kSelfCheckLimit);

// Scenes used by the demos and the acceptance suite.
SceneSpec ego_motion_scene(std::uint64_t texture_seed = 1);
SceneSpec dynamic_scene(std::uint64_t texture_seed = 1);
SceneSpec static_scene(std::uint64_t texture_seed = 1);

}  // namespace dmk::synth
