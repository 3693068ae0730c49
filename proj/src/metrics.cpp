#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dmk::metrics {

double median(std::vector<double> values) {
    if (values.empty()) throw ContractError("median of an empty set");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + std::ptrdiff_t(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + std::ptrdiff_t(mid));
    return 0.5 * (lo + hi);
}

DepthMetrics depth_metrics(const Field& pred, const Field& gt, const Field& mask, double cutoff) {
    if (!pred.same_shape(gt) || !pred.same_shape(mask)) throw DimensionError("depth_metrics: shape mismatch");
    DepthMetrics m;
    double sq = 0.0, sq_log = 0.0;
    int d1 = 0, d2 = 0, d3 = 0, n = 0;
    m.abs_rel = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double g = gt.data[i], p = pred.data[i];
        if (mask.data[i] == 0.0 || !(g > 0.0) || g > cutoff) continue;
        if (!(p > 0.0)) throw ContractError("depth_metrics: prediction must be positive");
        const double diff = g - p;
        m.abs_rel += std::abs(diff) / g;
        m.sq_rel += diff * diff / g;
        sq += diff * diff;
        const double dl = std::log(g) - std::log(p);
        sq_log += dl * dl;
        const double ratio = std::max(p / g, g / p);
        d1 += ratio < 1.25;
        d2 += ratio < 1.25 * 1.25;
        d3 += ratio < 1.25 * 1.25 * 1.25;
        ++n;
    }
    if (n == 0) throw ContractError("depth_metrics: empty evaluation mask");
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse = std::sqrt(sq / n);
    m.rmse_log = std::sqrt(sq_log / n);
    m.delta1 = double(d1) / n;
    m.delta2 = double(d2) / n;
    m.delta3 = double(d3) / n;
    m.count = n;
    return m;
}

double angle_deg(const Vec3& a, const Vec3& b) {
    const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    const bool za = na < 1e-8, zb = nb < 1e-8;
    if (za && zb) return 0.0;
    if (za || zb) return 90.0;
    const Vec3 cross{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
    const double s = std::sqrt(cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]);
    return std::atan2(s, a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) * 180.0 / std::numbers::pi;
}

MotionMetrics motion_metrics(const Field3& pred, const Field3& gt, const Field& object_mask, const Vec3& pred_ego,
                             const Vec3& gt_ego, const Field& eval_mask) {
    for (std::size_t c = 0; c < 3; ++c)
        if (!pred[c].same_shape(object_mask) || !gt[c].same_shape(object_mask))
            throw DimensionError("motion_metrics: shape mismatch");
    if (eval_mask.size() != 0 && !eval_mask.same_shape(object_mask))
        throw DimensionError("motion_metrics: evaluation mask shape mismatch");

    std::vector<double> epe_obj, epe_bg;
    Vec3 sum_pred{0, 0, 0}, sum_gt{0, 0, 0};
    double bg_norm = 0.0, obj_gt_norm = 0.0;
    for (std::size_t i = 0; i < object_mask.size(); ++i) {
        if (eval_mask.size() != 0 && eval_mask.data[i] == 0.0) continue;
        double e2 = 0.0, p2 = 0.0, g2 = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = pred[c].data[i] - gt[c].data[i];
            e2 += d * d;
            p2 += pred[c].data[i] * pred[c].data[i];
            g2 += gt[c].data[i] * gt[c].data[i];
        }
        if (object_mask.data[i] != 0.0) {
            epe_obj.push_back(std::sqrt(e2));
            obj_gt_norm += std::sqrt(g2);
            for (std::size_t c = 0; c < 3; ++c) {
                sum_pred[c] += pred[c].data[i];
                sum_gt[c] += gt[c].data[i];
            }
        } else {
            epe_bg.push_back(std::sqrt(e2));
            bg_norm += std::sqrt(p2);
        }
    }

    MotionMetrics m;
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    m.object_count = int(epe_obj.size());
    m.background_count = int(epe_bg.size());
    if (!epe_obj.empty()) {
        m.epe_object_mean = mean(epe_obj);
        m.epe_object_median = median(epe_obj);
        m.object_gt_mean_norm = obj_gt_norm / double(epe_obj.size());
        m.object_direction_deg = angle_deg(sum_pred, sum_gt);
    }
    if (!epe_bg.empty()) {
        m.epe_background_mean = mean(epe_bg);
        m.epe_background_median = median(epe_bg);
        m.background_pred_mean_norm = bg_norm / double(epe_bg.size());
    }
    m.ego_angle_deg = angle_deg(pred_ego, gt_ego);
    const double ng = std::sqrt(gt_ego[0] * gt_ego[0] + gt_ego[1] * gt_ego[1] + gt_ego[2] * gt_ego[2]);
    const double np = std::sqrt(pred_ego[0] * pred_ego[0] + pred_ego[1] * pred_ego[1] + pred_ego[2] * pred_ego[2]);
    m.ego_magnitude_ratio = ng > 0.0 ? np / ng : 0.0;
    return m;
}

}  // namespace dmk::metrics
