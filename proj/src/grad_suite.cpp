#include "grad_suite.hpp"

#include <cmath>
#include <random>

#include "camera.hpp"
#include "losses.hpp"

namespace dmk::loss {

using ad::Tape;
using ad::Var;

namespace {

struct Draw {
    std::mt19937_64 rng;
    int rows, cols;

    Field uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        Field f(rows, cols);
        for (double& x : f.data) x = d(rng);
        return f;
    }
    Field normal(double sigma) {
        std::normal_distribution<double> d(0.0, sigma);
        Field f(rows, cols);
        for (double& x : f.data) x = d(rng);
        return f;
    }
    Field binary(double p) {
        std::bernoulli_distribution d(p);
        Field f(rows, cols);
        for (double& x : f.data) x = d(rng) ? 1.0 : 0.0;
        return f;
    }
    // Small rotation (three angles) followed by a translation.
    Field motion() {
        std::normal_distribution<double> rot(0.0, 0.02), tr(0.0, 0.1);
        Field f(1, 6);
        for (int i = 0; i < 3; ++i) f.data[std::size_t(i)] = rot(rng);
        for (int i = 3; i < 6; ++i) f.data[std::size_t(i)] = tr(rng);
        return f;
    }
    RgbImage image() { return {uniform(0.1, 0.9), uniform(0.1, 0.9), uniform(0.1, 0.9)}; }
};

Rgb constant_image(Tape& t, const RgbImage& img) { return {t.constant(img[0]), t.constant(img[1]), t.constant(img[2])}; }

ad::VarField3 field3(std::span<const Var> v, std::size_t first) { return {v[first], v[first + 1], v[first + 2]}; }

MotionVars motion_vars(Var block, const ad::VarField3& t_obj) {
    MotionVars m;
    m.rotation = geom::euler_to_rotation(ad::pick(block, 0), ad::pick(block, 1), ad::pick(block, 2));
    m.t_ego = {ad::pick(block, 3), ad::pick(block, 4), ad::pick(block, 5)};
    m.t_obj = t_obj;
    return m;
}

geom::Intrinsics suite_intrinsics(int rows, int cols) { return {double(cols), double(cols), cols / 2.0, rows / 2.0}; }

void add3(std::vector<ad::NamedLeaf>& leaves, const std::string& name, Draw& d, double sigma) {
    for (const char* axis : {"x", "y", "z"}) leaves.push_back({name + "." + axis, d.normal(sigma)});
}

struct Case {
    ad::LossBuilder build;
    std::vector<ad::NamedLeaf> leaves;
    bool warps = false;
};

Case make_case(const std::string& name, int rows, int cols, std::uint64_t seed) {
    Draw d{std::mt19937_64(seed), rows, cols};
    const HyperParams h;
    Case c;
    if (name == "group_smooth") {
        add3(c.leaves, "t_obj", d, 0.1);
        c.build = [](Tape&, std::span<const Var> v) { return group_smoothness(field3(v, 0)); };
    } else if (name == "sparsity") {
        add3(c.leaves, "t_obj", d, 0.1);
        c.build = [h](Tape&, std::span<const Var> v) { return sparsity_l_half(field3(v, 0), h.eps_norm); };
    } else if (name == "depth_smooth") {
        c.leaves.push_back({"depth", d.uniform(2.0, 6.0)});
        const RgbImage img = d.image();
        c.build = [h, img](Tape& t, std::span<const Var> v) {
            return depth_smoothness(1.0 / v[0], constant_image(t, img), h);
        };
    } else if (name == "cycle") {
        c.leaves.push_back({"motion_fwd", d.motion()});
        c.leaves.push_back({"motion_bwd", d.motion()});
        add3(c.leaves, "t", d, 0.1);
        add3(c.leaves, "t_inv", d, 0.1);
        const Field mask = d.binary(0.8);
        c.build = [h, mask](Tape&, std::span<const Var> v) {
            const auto r = geom::euler_to_rotation(ad::pick(v[0], 0), ad::pick(v[0], 1), ad::pick(v[0], 2));
            const auto r_inv = geom::euler_to_rotation(ad::pick(v[1], 0), ad::pick(v[1], 1), ad::pick(v[1], 2));
            const CycleTerms terms = cycle_consistency(r, field3(v, 2), r_inv, field3(v, 5), mask, h);
            return terms.rotation + terms.translation;
        };
    } else if (name == "photometric") {
        c.warps = true;
        c.leaves.push_back({"depth_a", d.uniform(2.0, 6.0)});
        c.leaves.push_back({"depth_b", d.uniform(2.0, 6.0)});
        c.leaves.push_back({"motion", d.motion()});
        add3(c.leaves, "t_obj", d, 0.02);
        const RgbImage ia = d.image(), ib = d.image();
        const geom::Intrinsics k = suite_intrinsics(rows, cols);
        c.build = [h, ia, ib, k](Tape& t, std::span<const Var> v) {
            const MotionVars m = motion_vars(v[2], field3(v, 3));
            const geom::CameraVars cam = geom::CameraVars::constant(t, k);
            const geom::WarpResult w = geom::warp(v[0], cam, m.rotation, geom::total_translation(m.t_obj, m.t_ego));
            const geom::Resampled res = geom::resample(constant_image(t, ib), v[1], w);
            const PhotoTerms p = photometric_loss(constant_image(t, ia), res.frame, w.z, res.depth, res.mask, h);
            return p.l1 + p.ssim;
        };
    } else if (name == "pair_total") {
        c.warps = true;
        c.leaves.push_back({"depth_a", d.uniform(2.0, 6.0)});
        c.leaves.push_back({"depth_b", d.uniform(2.0, 6.0)});
        c.leaves.push_back({"motion_ab", d.motion()});
        c.leaves.push_back({"motion_ba", d.motion()});
        add3(c.leaves, "t_obj_ab", d, 0.02);
        add3(c.leaves, "t_obj_ba", d, 0.02);
        const geom::Intrinsics k0 = suite_intrinsics(rows, cols);
        Field intr(1, 4);
        intr.data = {std::log(k0.fx / cols), std::log(k0.fy / cols), k0.cx / cols, k0.cy / rows};
        c.leaves.push_back({"intrinsics", intr});
        const RgbImage ia = d.image(), ib = d.image();
        c.build = [h, ia, ib, rows, cols](Tape& t, std::span<const Var> v) {
            const double w = cols, hgt = rows;
            const geom::CameraVars cam{w * ad::exp(ad::pick(v[10], 0)), w * ad::exp(ad::pick(v[10], 1)),
                                       w * ad::pick(v[10], 2), hgt * ad::pick(v[10], 3)};
            const FrameVars fa{constant_image(t, ia), v[0]};
            const FrameVars fb{constant_image(t, ib), v[1]};
            return pair_loss(fa, fb, motion_vars(v[2], field3(v, 4)), motion_vars(v[3], field3(v, 7)), cam, h).total;
        };
    } else {
        throw InputError("unknown loss \"" + name + "\"", "loss");
    }
    return c;
}

}  // namespace

const std::vector<std::string>& grad_suite_names() {
    static const std::vector<std::string> names = {"group_smooth", "sparsity",    "depth_smooth",
                                                   "cycle",        "photometric", "pair_total"};
    return names;
}

double grad_suite_tolerance(const std::string& name) {
    return name == "photometric" || name == "pair_total" ? 5e-3 : 1e-3;
}

ad::GradReport grad_suite_check(const std::string& name, int rows, int cols, std::uint64_t seed) {
    if (rows < 2 || cols < 2) throw InputError("size must be at least 2x2", "size");
    const Case c = make_case(name, rows, cols, seed);
    ad::GradCheckOptions opt;
    opt.seed = seed;
    opt.skip_kinks = c.warps;
    return ad::grad_check(c.build, c.leaves, opt);
}

}  // namespace dmk::loss
