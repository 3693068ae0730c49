#include "fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "metrics.hpp"
#include "tape.hpp"

namespace dmk::fit {

using ad::Var;

void FitConfig::validate() const {
    if (steps < 1) throw InputError("must be >= 1", "steps");
    const std::pair<const char*, double> rates[] = {
        {"lr.depth", lr.depth}, {"lr.residual", lr.residual}, {"lr.ego", lr.ego}, {"lr.intrinsics", lr.intrinsics},
        {"lr.principal_point", lr.principal_point}};
    for (const auto& [name, r] : rates)
        if (!(r > 0.0) || !std::isfinite(r)) throw InputError("must be positive", name);
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw InputError("must be in [0, 1)", "adam.beta1");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw InputError("must be in [0, 1)", "adam.beta2");
    if (!(adam.eps > 0.0)) throw InputError("must be positive", "adam.eps");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
        throw InputError("must be in (0, 1]", "final_lr_fraction");
    if (residual_warmup < 0) throw InputError("must be >= 0", "residual_warmup");
    if (intrinsics_warmup < 0) throw InputError("must be >= 0", "intrinsics_warmup");
    if (log_every < 1) throw InputError("must be >= 1", "log_every");
    if (!(init_depth > 0.0)) throw InputError("must be positive", "init_depth");
    hyper.validate();
}

double softplus_inverse(double depth) {
    if (!(depth > 0.0)) throw ContractError("softplus_inverse: depth must be positive");
    // log(e^d - 1) = d + log(1 - e^-d)
    return depth + std::log(-std::expm1(-depth));
}

geom::Intrinsics default_intrinsics(int width, int height) {
    return {double(width), double(width), width / 2.0, height / 2.0};
}

geom::Intrinsics decode_intrinsics(const std::array<double, 4>& raw, int width, int height) {
    return {width * std::exp(raw[0]), width * std::exp(raw[1]), width * raw[2], height * raw[3]};
}

FitParams init_params(int rows, int cols, const FitConfig& config) {
    FitParams p;
    const double logit = softplus_inverse(config.init_depth);
    p.logit_a = Field(rows, cols, logit);
    p.logit_b = Field(rows, cols, logit);
    p.residual_ab = make_field3(rows, cols);
    p.residual_ba = make_field3(rows, cols);
    if (config.learn_intrinsics) {
        const geom::Intrinsics k = default_intrinsics(cols, rows);
        p.intrinsics = std::array<double, 4>{std::log(k.fx / cols), std::log(k.fy / cols), k.cx / cols, k.cy / rows};
    }
    return p;
}

double TraceEntry::total() const {
    for (const auto& [name, v] : values)
        if (name == "total") return v;
    return std::nan("");
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Field decode_depth(const Field& logit) {
    Field d = logit;
    for (double& x : d.data) x = softplus(x);
    return d;
}

geom::RigidMotion decode_motion(const std::array<double, 6>& m) {
    return {{m[0], m[1], m[2]}, {m[3], m[4], m[5]}};
}

// One Adam state per parameter block.
// Moments and bias correction per parameter group; a group that starts late
// (warm-up) counts its own steps from 1.
struct AdamSlot {
    std::vector<double> m, v;
    int t = 0;

    void step(std::span<double> x, std::span<const double> g, double lr, const AdamMoments& a) {
        if (m.empty()) {
            m.assign(x.size(), 0.0);
            v.assign(x.size(), 0.0);
        }
        ++t;
        const double c1 = 1.0 - std::pow(a.beta1, t);
        const double c2 = 1.0 - std::pow(a.beta2, t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
            v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
            x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.eps);
        }
    }
};

struct Leaves {
    Var logit_a, logit_b, motion_ab, motion_ba, intrinsics;
    ad::VarField3 residual_ab, residual_ba;
};

loss::MotionVars motion_vars(Var block, const ad::VarField3& residual) {
    loss::MotionVars mv;
    mv.rotation = geom::euler_to_rotation(ad::pick(block, 0), ad::pick(block, 1), ad::pick(block, 2));
    mv.t_ego = {ad::pick(block, 3), ad::pick(block, 4), ad::pick(block, 5)};
    mv.t_obj = residual;
    return mv;
}

geom::CameraVars camera_vars(ad::Tape& tape, const Leaves& l, const geom::Intrinsics& fixed, int width,
                             int height) {
    if (!l.intrinsics.valid()) return geom::CameraVars::constant(tape, fixed);
    return {double(width) * ad::exp(ad::pick(l.intrinsics, 0)), double(width) * ad::exp(ad::pick(l.intrinsics, 1)),
            double(width) * ad::pick(l.intrinsics, 2), double(height) * ad::pick(l.intrinsics, 3)};
}

bool has_converged(const std::vector<TraceEntry>& trace) {
    const std::size_t n = trace.size();
    const std::size_t win = n / 10;
    if (win < 2) return false;
    double late = 0.0, early = 0.0;
    for (std::size_t i = n - win; i < n; ++i) late += trace[i].total();
    for (std::size_t i = n - 2 * win; i < n - win; ++i) early += trace[i].total();
    return std::abs(early - late) <= 1e-2 * std::abs(early);
}

// Largest pixel displacement produced by the fitted camera motion alone.
double rigid_flow_max(const Field& depth, const geom::Intrinsics& k, const geom::RigidMotion& m) {
    ad::Tape tape;
    const ad::VarField3 t{tape.constant(m.translation[0]), tape.constant(m.translation[1]),
                          tape.constant(m.translation[2])};
    const geom::WarpResult w = geom::warp(tape.constant(depth), geom::CameraVars::constant(tape, k),
                                          geom::constant_rotation(tape, geom::euler_to_rotation(m.euler)), t);
    const auto u = w.u.value(), v = w.v.value();
    double worst = 0.0;
    for (int y = 0; y < depth.rows; ++y)
        for (int x = 0; x < depth.cols; ++x) {
            const std::size_t i = std::size_t(y) * std::size_t(depth.cols) + std::size_t(x);
            if (w.mask.data[i] == 0.0) continue;
            worst = std::max(worst, std::hypot(u[i] - x, v[i] - y));
        }
    return worst;
}

}  // namespace

FitResult decode(const FitParams& p, const geom::Intrinsics& k) {
    FitResult r;
    r.depth_a = decode_depth(p.logit_a);
    r.depth_b = decode_depth(p.logit_b);
    r.t_obj_ab = p.residual_ab;
    r.t_obj_ba = p.residual_ba;
    r.ego_ab = decode_motion(p.motion_ab);
    r.ego_ba = decode_motion(p.motion_ba);
    r.k = p.intrinsics ? decode_intrinsics(*p.intrinsics, p.logit_a.cols, p.logit_a.rows) : k;
    r.intrinsics_learned = p.intrinsics.has_value();
    const auto& t = r.ego_ab.translation;
    r.rigid_flow_px = rigid_flow_max(r.depth_a, r.k, r.ego_ab);
    // On identical frames translation trades against rotation along a flat
    // valley, so a small residual translation can survive with no net flow.
    r.no_parallax = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]) < 1e-4 || r.rigid_flow_px < kNoFlowPx;
    return r;
}

FitResult fit_pair(const RgbImage& a, const RgbImage& b, const std::optional<geom::Intrinsics>& k,
                   const FitConfig& config, const ProgressFn& progress) {
    config.validate();
    for (std::size_t c = 0; c < 3; ++c)
        if (!a[c].same_shape(a[0]) || !b[c].same_shape(a[0]))
            throw DimensionError("fit_pair: frames must share one resolution");
    const int rows = a[0].rows, cols = a[0].cols;
    if (!config.learn_intrinsics && !k) throw InputError("intrinsics required unless learned", "intrinsics");
    const geom::Intrinsics fixed = k ? *k : default_intrinsics(cols, rows);
    if (k) k->validate(cols, rows);

    FitParams p = init_params(rows, cols, config);
    AdamSlot s_logit_a, s_logit_b, s_motion_ab, s_motion_ba, s_focal, s_centre;
    std::array<AdamSlot, 3> s_res_ab, s_res_ba;

    FitResult result;
    ad::Tape tape;
    for (int step = 0; step < config.steps; ++step) {
        tape.clear();
        Leaves l;
        l.logit_a = tape.leaf(p.logit_a);
        l.logit_b = tape.leaf(p.logit_b);
        for (std::size_t c = 0; c < 3; ++c) {
            l.residual_ab[c] = tape.leaf(p.residual_ab[c]);
            l.residual_ba[c] = tape.leaf(p.residual_ba[c]);
        }
        l.motion_ab = tape.leaf({1, 6}, {p.motion_ab.begin(), p.motion_ab.end()});
        l.motion_ba = tape.leaf({1, 6}, {p.motion_ba.begin(), p.motion_ba.end()});
        if (p.intrinsics) l.intrinsics = tape.leaf({1, 4}, {p.intrinsics->begin(), p.intrinsics->end()});

        loss::LossBreakdown br;
        try {
            loss::FrameVars fa{{tape.constant(a[0]), tape.constant(a[1]), tape.constant(a[2])}, ad::softplus(l.logit_a)};
            loss::FrameVars fb{{tape.constant(b[0]), tape.constant(b[1]), tape.constant(b[2])}, ad::softplus(l.logit_b)};
            const geom::CameraVars cam = camera_vars(tape, l, fixed, cols, rows);
            br = loss::pair_loss(fa, fb, motion_vars(l.motion_ab, l.residual_ab), motion_vars(l.motion_ba, l.residual_ba),
                                 cam, config.hyper);
        } catch (const NumericError& e) {
            throw DivergenceError(step, e.op(), "non-finite loss at step " + std::to_string(step) + " in " + e.op());
        }

        if (step % config.log_every == 0 || step == config.steps - 1) {
            result.trace.push_back({step, br.values()});
            if (progress) progress(result.trace.back());
        }

        const ad::Gradients g = tape.backward(br.total);
        const double progress = config.steps > 1 ? double(step) / double(config.steps - 1) : 0.0;
        const double decay =
            config.final_lr_fraction + (1.0 - config.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        const auto& lr = config.lr;
        const auto& am = config.adam;
        s_logit_a.step(p.logit_a.data, g.of(l.logit_a), lr.depth * decay, am);
        s_logit_b.step(p.logit_b.data, g.of(l.logit_b), lr.depth * decay, am);
        for (std::size_t c = 0; c < 3 && step >= config.residual_warmup; ++c) {
            s_res_ab[c].step(p.residual_ab[c].data, g.of(l.residual_ab[c]), lr.residual * decay, am);
            s_res_ba[c].step(p.residual_ba[c].data, g.of(l.residual_ba[c]), lr.residual * decay, am);
        }
        s_motion_ab.step(p.motion_ab, g.of(l.motion_ab), lr.ego * decay, am);
        s_motion_ba.step(p.motion_ba, g.of(l.motion_ba), lr.ego * decay, am);
        if (p.intrinsics && step >= config.intrinsics_warmup) {
            const std::span<double> k(*p.intrinsics);
            const std::span<const double> gk = g.of(l.intrinsics);
            s_focal.step(k.first(2), gk.first(2), lr.intrinsics * decay, am);
            s_centre.step(k.last(2), gk.last(2), lr.principal_point * decay, am);
        }
    }

    FitResult decoded = decode(p, fixed);
    decoded.trace = std::move(result.trace);
    decoded.steps = config.steps;
    decoded.converged = has_converged(decoded.trace);
    return decoded;
}

Alignment scale_align(const Field& pred, const Field& gt, const Field& mask) {
    if (!pred.same_shape(gt) || !pred.same_shape(mask)) throw DimensionError("scale_align: shape mismatch");
    std::vector<double> p, g;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        if (!(gt.data[i] > 0.0)) throw ContractError("scale_align: ground truth must be positive on the mask");
        p.push_back(pred.data[i]);
        g.push_back(gt.data[i]);
    }
    if (p.empty()) throw ContractError("scale_align: empty mask");
    const double mp = metrics::median(p);
    if (!(mp > 0.0)) throw ContractError("scale_align: prediction median must be positive");
    Alignment out{pred, metrics::median(g) / mp};
    for (double& x : out.pred.data) x *= out.scale;
    return out;
}

}  // namespace dmk::fit
