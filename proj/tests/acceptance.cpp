// Acceptance suite: one PASS/FAIL line per numbered criterion, then a few
// supplementary checks. Exit status is 0 only when every line passes.
//
//   dmk_acceptance            run everything
//   dmk_acceptance 1 3 9      run the listed criteria only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "camera.hpp"
#include "fitting.hpp"
#include "grad_suite.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "render.hpp"
#include "scene_synth.hpp"

using namespace dmk;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

void report(const std::string& label, const Outcome& o) {
    std::printf("%-14s %s  %s\n", label.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

// Metrics of one fit, with predictions median-scaled onto the ground truth.
struct Scored {
    fit::FitResult fit;
    metrics::DepthMetrics depth;
    metrics::MotionMetrics motion;
    double scale = 1.0;
    double seconds = 0.0;
};

Scored fit_and_score(const synth::SceneSample& s, const fit::FitConfig& cfg) {
    Scored out;
    const auto t0 = Clock::now();
    const std::optional<geom::Intrinsics> k = cfg.learn_intrinsics ? std::nullopt : std::optional(s.k);
    out.fit = fit::fit_pair(s.frame_a, s.frame_b, k, cfg);
    out.seconds = seconds_since(t0);
    const fit::Alignment al = fit::scale_align(out.fit.depth_a, s.depth_a, s.valid_a);
    out.scale = al.scale;
    out.depth = metrics::depth_metrics(al.pred, s.depth_a, s.valid_a);
    Field3 t = out.fit.t_obj_ab;
    for (auto& c : t)
        for (double& x : c.data) x *= al.scale;
    Vec3 ego = out.fit.ego_ab.translation;
    for (double& x : ego) x *= al.scale;
    out.motion = metrics::motion_metrics(t, s.t_obj_ab, s.object_mask_a, ego, s.ego_ab.translation, s.valid_a);
    return out;
}

// Dynamic-scene fits are shared by criteria 6 and 7 and the render check.
struct DynamicRuns {
    std::vector<Scored> tuned, unregularised;
    std::vector<synth::SceneSample> scenes;
};

const DynamicRuns& dynamic_runs(int seeds_needed, bool need_ablation) {
    static DynamicRuns runs;
    while (int(runs.scenes.size()) < seeds_needed) {
        const auto seed = std::uint64_t(runs.scenes.size() + 1);
        runs.scenes.push_back(synth::render_pair(synth::dynamic_scene(seed), seed));
    }
    while (int(runs.tuned.size()) < seeds_needed)
        runs.tuned.push_back(fit_and_score(runs.scenes[runs.tuned.size()], fit::FitConfig{}));
    if (need_ablation) {
        fit::FitConfig off;
        off.hyper.alpha_mot = 0.0;
        off.hyper.beta_mot = 0.0;
        while (int(runs.unregularised.size()) < seeds_needed)
            runs.unregularised.push_back(fit_and_score(runs.scenes[runs.unregularised.size()], off));
    }
    return runs;
}

// ---- criteria ----------------------------------------------------------

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    double worst_ratio = 0.0;
    std::string worst;
    int checks = 0;
    bool pass = true;
    for (const std::string& name : loss::grad_suite_names())
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const ad::GradReport r = loss::grad_suite_check(name, 8, 8, seed);
            const double tol = loss::grad_suite_tolerance(name);
            ++checks;
            if (!(r.max_rel_error < tol)) pass = false;
            if (r.max_rel_error / tol > worst_ratio) {
                worst_ratio = r.max_rel_error / tol;
                worst = fmt("%s seed %d: %.2e (limit %.0e)", name.c_str(), int(seed), r.max_rel_error, tol);
            }
        }
    const double secs = seconds_since(t0);
    return {pass && secs < 60.0, fmt("%d checks at 8x8 in %.1f s, closest to limit %s", checks, secs, worst.c_str())};
}

Outcome closed_form_sparsity() {
    ad::Tape tape;
    Field3 uniform = make_field3(4, 4), spike = make_field3(4, 4);
    for (double& x : uniform[0].data) x = 1.0;
    spike[0].data[5] = 16.0;
    auto var3 = [&](const Field3& f) {
        return ad::VarField3{tape.constant(f[0]), tape.constant(f[1]), tape.constant(f[2])};
    };
    const double u = loss::sparsity_l_half(var3(uniform)).item();
    const double s = loss::sparsity_l_half(var3(spike)).item();
    const double want_u = 2.0 * std::sqrt(2.0), want_s = 2.0 * (15.0 + std::sqrt(17.0)) / 16.0;
    bool pass = std::abs(u - want_u) < 1e-6 && std::abs(s - want_s) < 1e-6;

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Field3 t = make_field3(5, 6);
        for (auto& c : t)
            for (double& x : c.data) x = n(rng);
        const double k = scale(rng);
        Field3 kt = t;
        for (auto& c : kt)
            for (double& x : c.data) x *= k;
        const double a = loss::sparsity_l_half(var3(t)).item(), b = loss::sparsity_l_half(var3(kt)).item();
        worst = std::max(worst, std::abs(b - k * a) / std::abs(k * a));
    }
    pass = pass && worst < 1e-9;
    return {pass, fmt("uniform %.6f (want %.6f), concentrated %.6f (want %.6f), homogeneity rel err %.1e", u, want_u,
                      s, want_s, worst)};
}

Outcome warp_oracle() {
    ad::Tape t;
    auto const3 = [&](const Vec3& v) {
        return ad::VarField3{t.constant(Field(1, 1, v[0])), t.constant(Field(1, 1, v[1])), t.constant(Field(1, 1, v[2]))};
    };
    const geom::CameraVars k100 = geom::CameraVars::constant(t, {100, 100, 64, 48});
    const geom::VarMat3 ident = geom::constant_rotation(t, geom::euler_to_rotation(Vec3{0, 0, 0}));
    const geom::WarpResult p = geom::warp_points(t.constant(Field(1, 1, 164.0)), t.constant(Field(1, 1, 48.0)),
                                                 t.constant(Field(1, 1, 2.0)), k100, ident, const3({0, 0, 1}),
                                                 {200, 200});
    const double du = std::abs(p.u.item() - (64.0 + 200.0 / 3.0));
    const double dz = std::abs(p.z.item() - 3.0);

    // Round trip on a random depth map through a motion and its inverse.
    const ad::Shape s{24, 32};
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(3.0, 9.0);
    Field depth(s.rows, s.cols);
    for (double& x : depth.data) x = d(rng);
    const geom::CameraVars k = geom::CameraVars::constant(t, {30, 28, 16, 12});
    const geom::RigidMotion m{{0.02, -0.03, 0.01}, {0.2, -0.1, 0.3}};
    const geom::RigidMotion inv = geom::inverse(m);
    auto field3 = [&](const Vec3& v) {
        return ad::VarField3{t.constant(Field(s.rows, s.cols, v[0])), t.constant(Field(s.rows, s.cols, v[1])),
                             t.constant(Field(s.rows, s.cols, v[2]))};
    };
    const geom::WarpResult fwd =
        geom::warp(t.constant(depth), k, geom::constant_rotation(t, geom::euler_to_rotation(m.euler)), field3(m.translation));
    const geom::WarpResult back = geom::warp_points(fwd.u, fwd.v, fwd.z, k,
                                                    geom::constant_rotation(t, geom::euler_to_rotation(inv.euler)),
                                                    field3(inv.translation), s);
    const auto bu = back.u.value(), bv = back.v.value(), bz = back.z.value();
    double worst_px = 0.0, worst_depth = 0.0;
    int checked = 0;
    for (int v = 1; v < s.rows - 1; ++v)
        for (int u = 1; u < s.cols - 1; ++u) {
            const std::size_t i = std::size_t(v) * std::size_t(s.cols) + std::size_t(u);
            if (fwd.mask.data[i] == 0.0) continue;
            ++checked;
            worst_px = std::max(worst_px, std::hypot(bu[i] - u, bv[i] - v));
            worst_depth = std::max(worst_depth, std::abs(bz[i] - depth.data[i]) / depth.data[i]);
        }
    const bool pass = du < 1e-9 && dz < 1e-9 && worst_px < 1e-6 && worst_depth < 1e-6 && checked > 0;
    return {pass, fmt("u' = %.10f (err %.1e), z' err %.1e; round trip over %d px: %.1e px, depth %.1e rel",
                      p.u.item(), du, dz, checked, worst_px, worst_depth)};
}

synth::SceneSpec random_spec(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    synth::SceneSpec s;
    s.width = 32 + int(between(0, 48));
    s.height = 24 + int(between(0, 32));
    const double f = between(0.6, 1.2) * s.width;
    s.k = {f, f * between(0.9, 1.1), s.width / 2.0 + between(-2, 2), s.height / 2.0 + between(-2, 2)};
    s.depth_near = between(3.0, 6.0);
    s.depth_far = s.depth_near + between(1.0, 10.0);
    s.texture_seed = rng();
    s.ego = {{between(-0.02, 0.02), between(-0.03, 0.03), between(-0.01, 0.01)},
             {between(-0.3, 0.3), between(-0.1, 0.1), between(-0.2, 0.2)}};
    const int objects = int(between(0, 3));
    for (int i = 0; i < objects; ++i) {
        synth::ObjectSpec o;
        o.u0 = int(between(2, s.width / 2.0));
        o.v0 = int(between(2, s.height / 2.0));
        o.u1 = std::min(s.width - 3, o.u0 + 6 + int(between(0, s.width / 3.0)));
        o.v1 = std::min(s.height - 3, o.v0 + 6 + int(between(0, s.height / 3.0)));
        o.depth = between(2.0, s.depth_near - 0.5);
        o.translation = {between(-0.2, 0.2), between(-0.2, 0.2), between(-0.1, 0.1)};
        s.objects.push_back(o);
    }
    s.noise_sigma = 0.0;
    return s;
}

Outcome generator_consistency() {
    std::mt19937_64 rng(11);
    double worst = 0.0;
    bool pass = true;
    int rejected = 0;
    for (int i = 0; i < 10; ++i) {
        synth::SceneSpec spec = random_spec(rng);
        // Redraw specs the validator refuses, e.g. objects leaving the frame.
        for (;;) {
            try {
                spec.validate();
                break;
            } catch (const InputError&) {
                ++rejected;
                spec = random_spec(rng);
            }
        }
        const synth::SceneSample s = synth::render_pair(spec, std::uint64_t(i));
        const double r = synth::photometric_residual(s);
        worst = std::max(worst, r);
        if (!(r < synth::kSelfCheckLimit)) pass = false;
    }
    return {pass, fmt("10 random scenes (%d invalid draws skipped), worst residual %.4f (limit %.0e)", rejected, worst,
                      synth::kSelfCheckLimit)};
}

const Scored& ego_run() {
    static const Scored r = fit_and_score(synth::render_pair(synth::ego_motion_scene(1), 1), fit::FitConfig{});
    return r;
}

Outcome ego_recovery() {
    const fit::FitConfig cfg;
    const Scored& r = ego_run();
    const bool pass = cfg.steps <= 5000 && r.seconds < 600.0 && r.depth.abs_rel < 0.15 && r.motion.ego_angle_deg < 10.0;
    return {pass, fmt("%d steps in %.0f s: abs_rel %.4f (< 0.15), ego direction error %.2f deg (< 10)", cfg.steps,
                      r.seconds, r.depth.abs_rel, r.motion.ego_angle_deg)};
}

Outcome dynamic_recovery() {
    const DynamicRuns& runs = dynamic_runs(3, false);
    bool pass = true;
    std::string detail;
    for (int i = 0; i < 3; ++i) {
        const auto& m = runs.tuned[std::size_t(i)].motion;
        const double ratio = m.background_pred_mean_norm / m.object_gt_mean_norm;
        const bool ok = ratio < 0.1 && m.object_direction_deg < 30.0;
        pass = pass && ok;
        detail += fmt("%sseed %d: bg/obj %.3f, dir %.1f deg", i ? "; " : "", i + 1, ratio, m.object_direction_deg);
    }
    return {pass, detail + " (limits 0.1, 30 deg)"};
}

Outcome regularizer_ab() {
    const DynamicRuns& runs = dynamic_runs(5, true);
    std::vector<double> bg_on, bg_off, rel_on, rel_off;
    for (int i = 0; i < 5; ++i) {
        bg_on.push_back(runs.tuned[std::size_t(i)].motion.background_pred_mean_norm);
        bg_off.push_back(runs.unregularised[std::size_t(i)].motion.background_pred_mean_norm);
        rel_on.push_back(runs.tuned[std::size_t(i)].depth.abs_rel);
        rel_off.push_back(runs.unregularised[std::size_t(i)].depth.abs_rel);
    }
    const double a = metrics::median(bg_on), b = metrics::median(bg_off);
    const double c = metrics::median(rel_on), d = metrics::median(rel_off);
    return {a < b && c < d,
            fmt("median over 5 seeds: background |T| %.4f vs %.4f unregularised, abs_rel %.4f vs %.4f", a, b, c, d)};
}

Outcome learned_intrinsics() {
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const synth::SceneSample s = synth::render_pair(synth::ego_motion_scene(seed), seed);
        fit::FitConfig cfg;
        cfg.learn_intrinsics = true;
        const Scored r = fit_and_score(s, cfg);
        const double ex = r.fit.k.fx / s.k.fx - 1.0, ey = r.fit.k.fy / s.k.fy - 1.0;
        const bool ok = std::abs(ex) < 0.15 && std::abs(ey) < 0.15;
        pass = pass && ok;
        detail += fmt("%sseed %d: fx %.1f (%+.0f%%), fy %.1f (%+.0f%%)", seed > 1 ? "; " : "", int(seed), r.fit.k.fx,
                      100 * ex, r.fit.k.fy, 100 * ey);
    }
    return {pass, detail + " (true 48, limit 15%)"};
}

Outcome metric_suite() {
    Field gt(6, 8);
    for (std::size_t i = 0; i < gt.size(); ++i) gt.data[i] = 1.0 + 0.25 * double(i);
    Field pred = gt;
    for (double& x : pred.data) x *= 2.0;
    const metrics::DepthMetrics m = metrics::depth_metrics(pred, gt, Field(6, 8, 1.0));
    bool pass = std::abs(m.abs_rel - 1.0) < 1e-12 && std::abs(m.rmse_log - 0.6931) < 1e-4 && m.delta1 == 0.0 &&
                m.delta2 == 0.0 && m.delta3 == 0.0;

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> d(0.2, 20.0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Field a(5, 5), b(5, 5);
        for (double& x : a.data) x = d(rng);
        for (double& x : b.data) x = d(rng);
        const metrics::DepthMetrics r = metrics::depth_metrics(a, b, Field(5, 5, 1.0));
        if (!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3)) ++violations;
    }
    pass = pass && violations == 0;
    return {pass, fmt("pred = 2 gt: abs_rel %.4f, rmse_log %.4f, deltas %.0f/%.0f/%.0f; monotonicity violations %d/1000",
                      m.abs_rel, m.rmse_log, m.delta1, m.delta2, m.delta3, violations)};
}

// ---- supplementary checks ---------------------------------------------

Outcome render_contrast() {
    const DynamicRuns& runs = dynamic_runs(1, false);
    const synth::SceneSample& s = runs.scenes[0];
    const RgbImage img = render::motion_image(runs.tuned[0].fit.t_obj_ab);
    double in = 0.0, out = 0.0;
    int n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < s.object_mask_a.size(); ++i) {
        if (s.valid_a.data[i] == 0.0) continue;
        if (s.object_mask_a.data[i] > 0.5) {
            in += img[0].data[i];
            ++n_in;
        } else {
            out += img[0].data[i];
            ++n_out;
        }
    }
    in /= std::max(n_in, 1);
    out /= std::max(n_out, 1);
    const double ratio = out > 0.0 ? in / out : INFINITY;
    return {ratio > 5.0, fmt("motion render, dynamic seed 1: object %.3f vs background %.3f, ratio %.1f (> 5)", in, out,
                             ratio)};
}

// Windows of 50 steps over which the logged total did not rise.
void count_windows(const fit::FitResult& f, int& good, int& all) {
    for (std::size_t i = 0; i < f.trace.size(); ++i)
        for (std::size_t j = i + 1; j < f.trace.size(); ++j) {
            if (f.trace[j].step - f.trace[i].step < 50) continue;
            if (f.trace[j].step - f.trace[i].step == 50) {
                ++all;
                if (f.trace[j].total() <= f.trace[i].total()) ++good;
            }
            break;
        }
}

Outcome trace_monotone() {
    int good = 0, all = 0;
    count_windows(ego_run().fit, good, all);
    for (const Scored& r : dynamic_runs(3, false).tuned) count_windows(r.fit, good, all);
    const double frac = all ? double(good) / all : 0.0;
    return {frac >= 0.95, fmt("loss total non-increasing in %d/%d 50-step windows (%.1f%%, >= 95%%)", good, all,
                              100.0 * frac)};
}

Outcome demo_fit_time() {
    const synth::SceneSample s = synth::render_pair(synth::ego_motion_scene(1), 1);
    fit::FitConfig cfg;
    cfg.steps = 2000;
    const auto t0 = Clock::now();
    (void)fit::fit_pair(s.frame_a, s.frame_b, s.k, cfg);
    const double secs = seconds_since(t0);
    return {secs < 300.0, fmt("2000 steps at 64x48 in %.1f s (< 300)", secs)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    auto want = [&](int n) { return only.empty() || only.count(n) > 0; };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient checks", gradient_suite},       {"closed forms", closed_form_sparsity},
        {"warp oracle", warp_oracle},              {"generator", generator_consistency},
        {"ego recovery", ego_recovery},            {"dynamic scene", dynamic_recovery},
        {"regularizer A/B", regularizer_ab},       {"intrinsics", learned_intrinsics},
        {"metrics", metric_suite},
    };
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = int(i) + 1;
        if (!want(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        report(fmt("criterion %d", n), Outcome{o.pass, criteria[i].first + ": " + o.detail});
    }
    if (only.empty()) {
        report("extra render", render_contrast());
        report("extra trace", trace_monotone());
        report("extra timing", demo_fit_time());
    }
    std::printf("%s in %.0f s\n", failures ? fmt("%d FAILED", failures).c_str() : "all passed", seconds_since(t0));
    return failures ? 1 : 0;
}
