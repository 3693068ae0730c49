#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "camera.hpp"
#include "field.hpp"
#include "losses.hpp"

namespace dmk::fit {

struct LearningRates {
    double depth = 1e-2;
    double residual = 1e-3;
    double ego = 1e-3;
    // Focal lengths; the principal point has its own rate.
    double intrinsics = 1e-3;
    double principal_point = 1e-3;
};

struct AdamMoments {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Below this much rigid flow the pair carries no usable parallax.
inline constexpr double kNoFlowPx = 0.05;

struct FitConfig {
    int steps = 3000;
    LearningRates lr;
    AdamMoments adam;
    // Learning rates decay by cosine annealing down to lr * final_lr_fraction.
    double final_lr_fraction = 1.0;
    // Residual translation fields stay at zero for this many initial steps.
    int residual_warmup = 1000;
    // Learned intrinsics stay at their initial guess for this many steps.
    int intrinsics_warmup = 0;
    std::uint64_t seed = 0;
    int log_every = 10;
    double init_depth = 5.0;
    bool learn_intrinsics = false;
    loss::HyperParams hyper;

    void validate() const;
};

// Trainable state. Depth is decoded as softplus(logit). Ego-motion blocks are
// (rx, ry, rz, tx, ty, tz). Learned intrinsics are stored as
// (log(fx / W), log(fy / W), cx / W, cy / H).
struct FitParams {
    Field logit_a, logit_b;
    Field3 residual_ab, residual_ba;
    std::array<double, 6> motion_ab{}, motion_ba{};
    std::optional<std::array<double, 4>> intrinsics;
};

// log(e^d - 1): the logit whose softplus is d.
double softplus_inverse(double depth);

geom::Intrinsics default_intrinsics(int width, int height);
geom::Intrinsics decode_intrinsics(const std::array<double, 4>& raw, int width, int height);

FitParams init_params(int rows, int cols, const FitConfig& config);

struct TraceEntry {
    int step = 0;
    std::vector<std::pair<std::string, double>> values;

    double total() const;
};

struct FitResult {
    Field depth_a, depth_b;
    Field3 t_obj_ab, t_obj_ba;
    geom::RigidMotion ego_ab, ego_ba;
    geom::Intrinsics k;
    bool intrinsics_learned = false;
    std::vector<TraceEntry> trace;
    int steps = 0;
    bool converged = false;
    // Largest displacement, in pixels, of the fitted ego warp of frame a.
    double rigid_flow_px = 0.0;
    // Ego translation below 1e-4 or rigid flow under kNoFlowPx: depth is unconstrained.
    bool no_parallax = false;
};

// Receives each logged trace entry as it is produced.
using ProgressFn = std::function<void(const TraceEntry&)>;

// Adam over the pair objective. `k` is required unless
// config.learn_intrinsics is set. Throws DivergenceError on a non-finite loss.
FitResult fit_pair(const RgbImage& a, const RgbImage& b, const std::optional<geom::Intrinsics>& k,
                   const FitConfig& config, const ProgressFn& progress = {});

// Decodes the current parameters without optimising.
FitResult decode(const FitParams& p, const geom::Intrinsics& k);

struct Alignment {
    Field pred;
    double scale = 1.0;
};

// Multiplies pred by median(gt) / median(pred) over mask != 0.
Alignment scale_align(const Field& pred, const Field& gt, const Field& mask);

}  // namespace dmk::fit
