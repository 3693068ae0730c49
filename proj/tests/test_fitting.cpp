#include <doctest.h>

#include <cmath>

#include "fitting.hpp"
#include "scene_synth.hpp"

using namespace dmk;
using namespace dmk::fit;
using doctest::Approx;

namespace {

synth::SceneSpec small_spec(synth::SceneSpec s) {
    s.width = 24;
    s.height = 16;
    s.k = {18, 18, 12, 8};
    s.objects.clear();
    return s;
}

}  // namespace

TEST_CASE("default initialisation") {
    const FitConfig cfg;
    const FitParams p = init_params(6, 8, cfg);
    const FitResult r = decode(p, default_intrinsics(8, 6));
    for (double d : r.depth_a.data) CHECK(d == Approx(5.0).epsilon(1e-12));
    for (double d : r.depth_b.data) CHECK(d == Approx(5.0).epsilon(1e-12));
    for (const auto& c : r.t_obj_ab)
        for (double x : c.data) CHECK(x == 0.0);
    for (double x : p.motion_ab) CHECK(x == 0.0);
    CHECK_FALSE(p.intrinsics.has_value());
}

TEST_CASE("softplus inverse") {
    CHECK(softplus_inverse(1.0) == Approx(std::log(std::exp(1.0) - 1.0)).epsilon(1e-14));
    CHECK(std::abs(softplus_inverse(1.0) - 0.5413) < 1e-4);
    CHECK(std::log1p(std::exp(softplus_inverse(5.0))) == Approx(5.0).epsilon(1e-14));
    CHECK(std::isfinite(softplus_inverse(1e-9)));
    CHECK_THROWS_AS(softplus_inverse(0.0), ContractError);
}

TEST_CASE("learnable intrinsics start at the image-size guess") {
    FitConfig cfg;
    cfg.learn_intrinsics = true;
    const FitParams p = init_params(96, 128, cfg);
    REQUIRE(p.intrinsics.has_value());
    const geom::Intrinsics k = decode_intrinsics(*p.intrinsics, 128, 96);
    CHECK(k.fx == Approx(128.0));
    CHECK(k.fy == Approx(128.0));
    CHECK(k.cx == Approx(64.0));
    CHECK(k.cy == Approx(48.0));
}

TEST_CASE("decoded depth stays positive for extreme logits") {
    FitParams p = init_params(1, 3, FitConfig{});
    p.logit_a.data = {-40.0, 0.0, 800.0};
    const FitResult r = decode(p, default_intrinsics(3, 1));
    for (double d : r.depth_a.data) {
        CHECK(d > 0.0);
        CHECK(std::isfinite(d));
    }
}

TEST_CASE("median scale alignment") {
    Field gt(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
    Field pred = gt;
    for (double& x : pred.data) x *= 2.0;
    const Field mask(2, 3, 1.0);
    const Alignment a = scale_align(pred, gt, mask);
    CHECK(a.scale == Approx(0.5));
    for (std::size_t i = 0; i < gt.size(); ++i) CHECK(a.pred.data[i] == Approx(gt.data[i]));
    CHECK(scale_align(gt, gt, mask).scale == 1.0);

    // One wild outlier moves the mean but not the median.
    Field outlier(1, 5, std::vector<double>{1, 1, 1, 1, 1000});
    const Field gt5(1, 5, 2.0);
    CHECK(scale_align(outlier, gt5, Field(1, 5, 1.0)).scale == Approx(2.0));

    CHECK_THROWS_AS(scale_align(pred, gt, Field(2, 3, 0.0)), ContractError);
    CHECK_THROWS_AS(scale_align(pred, Field(3, 2, 1.0), mask), DimensionError);
}

TEST_CASE("config validation") {
    FitConfig c;
    CHECK_NOTHROW(c.validate());
    c.steps = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = FitConfig{};
    c.lr.depth = 0.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = FitConfig{};
    c.adam.beta1 = 1.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = FitConfig{};
    c.final_lr_fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("a single step yields a one-entry trace") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::ego_motion_scene(1)), 1);
    FitConfig cfg;
    cfg.steps = 1;
    const FitResult r = fit_pair(s.frame_a, s.frame_b, s.k, cfg);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].step == 0);
    CHECK(std::isfinite(r.trace[0].total()));
    CHECK(r.steps == 1);
}

TEST_CASE("fits are deterministic") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::ego_motion_scene(2)), 2);
    FitConfig cfg;
    cfg.steps = 15;
    cfg.log_every = 5;
    cfg.learn_intrinsics = true;
    const FitResult a = fit_pair(s.frame_a, s.frame_b, std::nullopt, cfg);
    const FitResult b = fit_pair(s.frame_a, s.frame_b, std::nullopt, cfg);
    CHECK(a.depth_a.data == b.depth_a.data);
    CHECK(a.t_obj_ab[2].data == b.t_obj_ab[2].data);
    CHECK(a.ego_ab.translation == b.ego_ab.translation);
    CHECK(a.k.fx == b.k.fx);
    REQUIRE(a.trace.size() == 4);
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].total() == b.trace[i].total());
    CHECK(a.trace.back().step == 14);
}

TEST_CASE("logged entries reach the progress hook") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::ego_motion_scene(2)), 2);
    FitConfig cfg;
    cfg.steps = 7;
    cfg.log_every = 3;
    std::vector<int> seen;
    const FitResult r = fit_pair(s.frame_a, s.frame_b, s.k, cfg, [&](const TraceEntry& e) { seen.push_back(e.step); });
    CHECK(seen == std::vector<int>{0, 3, 6});
    CHECK(r.trace.size() == 3);
}

TEST_CASE("identical frames flag the missing parallax") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::static_scene(1)), 1);
    FitConfig cfg;
    cfg.steps = 400;
    const FitResult r = fit_pair(s.frame_a, s.frame_b, s.k, cfg);
    CHECK(r.no_parallax);
    CHECK(r.rigid_flow_px < kNoFlowPx);
    const auto& t = r.ego_ab.translation;
    CHECK(std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]) < 1e-2);
    for (const auto& c : r.t_obj_ab)
        for (double x : c.data) CHECK(std::abs(x) < 1e-3);
}

TEST_CASE("a moving camera is not flagged") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::ego_motion_scene(1)), 1);
    FitConfig cfg;
    cfg.steps = 400;
    const FitResult r = fit_pair(s.frame_a, s.frame_b, s.k, cfg);
    CHECK_FALSE(r.no_parallax);
    CHECK(r.rigid_flow_px > 10 * kNoFlowPx);
}

TEST_CASE("a non-finite input aborts with the step index") {
    synth::SceneSample s = synth::render_pair(small_spec(synth::ego_motion_scene(1)), 1);
    s.frame_b[1].data[3] = std::nan("");
    FitConfig cfg;
    cfg.steps = 5;
    try {
        (void)fit_pair(s.frame_a, s.frame_b, s.k, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() == 0);
        CHECK_FALSE(e.component().empty());
    }
}

TEST_CASE("known intrinsics are required unless learned") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::static_scene(1)), 1);
    CHECK_THROWS_AS(fit_pair(s.frame_a, s.frame_b, std::nullopt, FitConfig{}), InputError);
    RgbImage wrong = make_field3(8, 8);
    CHECK_THROWS_AS(fit_pair(s.frame_a, wrong, s.k, FitConfig{}), DimensionError);
}

TEST_CASE("residual warm-up holds the motion field at zero") {
    const synth::SceneSample s = synth::render_pair(small_spec(synth::ego_motion_scene(3)), 3);
    FitConfig cfg;
    cfg.steps = 10;
    cfg.residual_warmup = 10;
    const FitResult r = fit_pair(s.frame_a, s.frame_b, s.k, cfg);
    for (const auto& c : r.t_obj_ab)
        for (double x : c.data) CHECK(x == 0.0);
    cfg.residual_warmup = 0;
    const FitResult r2 = fit_pair(s.frame_a, s.frame_b, s.k, cfg);
    double moved = 0.0;
    for (const auto& c : r2.t_obj_ab)
        for (double x : c.data) moved += std::abs(x);
    CHECK(moved > 0.0);
}
