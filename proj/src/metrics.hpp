#pragma once

#include <vector>

#include "camera.hpp"
#include "field.hpp"

namespace dmk::metrics {

// Median of the values (mean of the middle pair for even counts).
double median(std::vector<double> values);

struct DepthMetrics {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
    double delta1 = 1.0;
    double delta2 = 1.0;
    double delta3 = 1.0;
    int count = 0;
};

inline constexpr double kDepthCutoff = 80.0;

// Standard monocular depth error suite over mask != 0 and gt <= cutoff.
DepthMetrics depth_metrics(const Field& pred, const Field& gt, const Field& mask, double cutoff = kDepthCutoff);

struct MotionMetrics {
    double epe_object_mean = 0.0;
    double epe_object_median = 0.0;
    double epe_background_mean = 0.0;
    double epe_background_median = 0.0;
    // Mean predicted residual magnitude on the background.
    double background_pred_mean_norm = 0.0;
    // Mean ground-truth residual magnitude inside objects.
    double object_gt_mean_norm = 0.0;
    // Angle between mean predicted and mean ground-truth in-object vectors.
    double object_direction_deg = 0.0;
    double ego_angle_deg = 0.0;
    // |t_pred| / |t_gt|; 0 when the ground truth is zero.
    double ego_magnitude_ratio = 0.0;
    int object_count = 0;
    int background_count = 0;
};

// Angle between two vectors in degrees: 0 if both norms are below 1e-8,
// 90 if exactly one is.
double angle_deg(const Vec3& a, const Vec3& b);

// `eval_mask` (optional, empty = all pixels) restricts which pixels count.
MotionMetrics motion_metrics(const Field3& pred, const Field3& gt, const Field& object_mask, const Vec3& pred_ego,
                             const Vec3& gt_ego, const Field& eval_mask = {});

}  // namespace dmk::metrics
