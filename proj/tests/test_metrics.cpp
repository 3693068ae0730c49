#include <doctest.h>

#include <cmath>
#include <random>

#include "metrics.hpp"

using namespace dmk;
using namespace dmk::metrics;
using doctest::Approx;

namespace {

Field ramp(int rows, int cols, double lo, double step) {
    Field f(rows, cols);
    for (std::size_t i = 0; i < f.size(); ++i) f.data[i] = lo + step * double(i);
    return f;
}

Field scaled(Field f, double k) {
    for (double& x : f.data) x *= k;
    return f;
}

}  // namespace

TEST_CASE("perfect prediction") {
    const Field gt = ramp(4, 5, 1.0, 0.5);
    const DepthMetrics m = depth_metrics(gt, gt, Field(4, 5, 1.0));
    CHECK(m.abs_rel == 0.0);
    CHECK(m.sq_rel == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.rmse_log == 0.0);
    CHECK(m.delta1 == 1.0);
    CHECK(m.delta2 == 1.0);
    CHECK(m.delta3 == 1.0);
    CHECK(m.count == 20);
}

TEST_CASE("doubled prediction") {
    const Field gt = ramp(4, 5, 1.0, 0.5);
    const DepthMetrics m = depth_metrics(scaled(gt, 2.0), gt, Field(4, 5, 1.0));
    CHECK(m.abs_rel == Approx(1.0).epsilon(1e-15));
    CHECK(m.rmse_log == Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(m.rmse_log - 0.6931) < 1e-4);
    CHECK(m.delta1 == 0.0);
    CHECK(m.delta2 == 0.0);
    CHECK(m.delta3 == 0.0);
    CHECK(std::pow(1.25, 3) == Approx(1.953125));
}

TEST_CASE("prediction 20 percent long") {
    const Field gt = ramp(3, 3, 2.0, 1.0);
    const DepthMetrics m = depth_metrics(scaled(gt, 1.2), gt, Field(3, 3, 1.0));
    CHECK(m.delta1 == 1.0);
    CHECK(m.abs_rel == Approx(0.2).epsilon(1e-12));
}

TEST_CASE("hand-evaluated errors") {
    const Field gt(1, 2, std::vector<double>{2.0, 4.0});
    const Field pred(1, 2, std::vector<double>{3.0, 4.0});
    const DepthMetrics m = depth_metrics(pred, gt, Field(1, 2, 1.0));
    CHECK(m.abs_rel == Approx(0.25));
    CHECK(m.sq_rel == Approx(0.25));
    CHECK(m.rmse == Approx(std::sqrt(0.5)));
    CHECK(m.rmse_log == Approx(std::sqrt(0.5) * std::log(1.5)));
    CHECK(m.delta1 == 0.5);
    CHECK(m.delta2 == 1.0);
}

TEST_CASE("mask and cutoff restrict the evaluated pixels") {
    const Field gt(1, 4, std::vector<double>{1.0, 2.0, 90.0, 3.0});
    const Field pred(1, 4, std::vector<double>{1.0, 2.0, 1.0, 6.0});
    const Field mask(1, 4, std::vector<double>{1, 1, 1, 0});
    const DepthMetrics m = depth_metrics(pred, gt, mask);
    CHECK(m.count == 2);
    CHECK(m.abs_rel == 0.0);
    CHECK(depth_metrics(pred, gt, mask, 100.0).count == 3);
    CHECK_THROWS_AS(depth_metrics(pred, gt, Field(1, 4, 0.0)), ContractError);
    CHECK_THROWS_AS(depth_metrics(pred, Field(2, 2, 1.0), mask), DimensionError);
}

TEST_CASE("joint rescaling") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(1.0, 30.0);
    Field gt(6, 6), pred(6, 6);
    for (double& x : gt.data) x = d(rng);
    for (double& x : pred.data) x = d(rng);
    const Field mask(6, 6, 1.0);
    const double k = 1.75;
    const DepthMetrics a = depth_metrics(pred, gt, mask);
    const DepthMetrics b = depth_metrics(scaled(pred, k), scaled(gt, k), mask);
    CHECK(b.abs_rel == Approx(a.abs_rel).epsilon(1e-12));
    CHECK(b.rmse_log == Approx(a.rmse_log).epsilon(1e-12));
    CHECK(b.delta1 == a.delta1);
    CHECK(b.delta2 == a.delta2);
    CHECK(b.delta3 == a.delta3);
    CHECK(b.rmse == Approx(k * a.rmse).epsilon(1e-12));
    CHECK(b.sq_rel == Approx(k * a.sq_rel).epsilon(1e-12));
}

TEST_CASE("delta thresholds are monotone") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> d(0.5, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        Field gt(5, 5), pred(5, 5);
        for (double& x : gt.data) x = d(rng);
        for (double& x : pred.data) x = d(rng);
        const DepthMetrics m = depth_metrics(pred, gt, Field(5, 5, 1.0));
        CHECK(m.delta1 <= m.delta2);
        CHECK(m.delta2 <= m.delta3);
    }
}

TEST_CASE("median") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK_THROWS_AS(median({}), ContractError);
}

TEST_CASE("angles between vectors") {
    CHECK(angle_deg({0, 0, 1}, {0, 1, 0}) == Approx(90.0));
    CHECK(angle_deg({1, 2, 3}, {2, 4, 6}) == 0.0);
    CHECK(angle_deg({1, 0, 0}, {-1, 0, 0}) == Approx(180.0));
    CHECK(angle_deg({0, 0, 0}, {0, 0, 0}) == 0.0);
    CHECK(angle_deg({0, 0, 0}, {1, 0, 0}) == 90.0);
    CHECK(angle_deg({1e-9, 0, 0}, {0, 1, 0}) == 90.0);
}

TEST_CASE("motion metrics") {
    Field3 gt = make_field3(2, 2), pred = make_field3(2, 2);
    Field obj(2, 2, 0.0);
    obj.data[3] = 1.0;
    gt[1].data[3] = 0.5;
    pred[1].data[3] = 0.5;
    MotionMetrics m = motion_metrics(pred, gt, obj, {0, 0, 1}, {0, 0, 1});
    CHECK(m.epe_object_mean == 0.0);
    CHECK(m.epe_background_mean == 0.0);
    CHECK(m.ego_angle_deg == 0.0);
    CHECK(m.ego_magnitude_ratio == 1.0);
    CHECK(m.object_count == 1);
    CHECK(m.background_count == 3);
    CHECK(m.object_gt_mean_norm == Approx(0.5));

    for (int i = 0; i < 3; ++i) pred[0].data[std::size_t(i)] = 0.1;
    m = motion_metrics(pred, gt, obj, {0, 0, 1}, {0, 1, 0});
    CHECK(m.epe_background_mean == Approx(0.1));
    CHECK(m.epe_background_median == Approx(0.1));
    CHECK(m.background_pred_mean_norm == Approx(0.1));
    CHECK(m.ego_angle_deg == Approx(90.0));

    pred[2].data[3] = 0.5;
    m = motion_metrics(pred, gt, obj, {0, 0, 2}, {0, 0, 1});
    CHECK(m.object_direction_deg == Approx(45.0));
    CHECK(m.epe_object_mean == Approx(0.5));
    CHECK(m.ego_magnitude_ratio == Approx(2.0));

    Field eval(2, 2, 1.0);
    eval.data[0] = 0.0;
    CHECK(motion_metrics(pred, gt, obj, {0, 0, 1}, {0, 0, 1}, eval).background_count == 2);
    CHECK_THROWS_AS(motion_metrics(pred, make_field3(3, 3), obj, {0, 0, 1}, {0, 0, 1}), DimensionError);
}
