#include "losses.hpp"

#include <cmath>

namespace dmk::loss {

using ad::Var;

void HyperParams::validate() const {
    const std::pair<const char*, double> weights[] = {
        {"alpha_mot", alpha_mot}, {"beta_mot", beta_mot}, {"alpha_dep", alpha_dep}, {"alpha_cyc", alpha_cyc},
        {"beta_cyc", beta_cyc},   {"alpha_rgb", alpha_rgb}, {"beta_rgb", beta_rgb}, {"eps_occ", eps_occ}};
    for (const auto& [name, w] : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("must be a finite non-negative number", name);
    if (!(eps_norm > 0.0) || !std::isfinite(eps_norm)) throw InputError("must be positive", "eps_norm");
}

namespace {

Var masked(Var f, const Field& m) { return f * f.tape()->constant(m); }

Var zero(ad::Tape& t) { return t.constant(0.0); }

Var frobenius_sq(const geom::VarMat3& m) {
    Var acc = ad::square(m[0][0]);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i || j) acc = acc + ad::square(m[std::size_t(i)][std::size_t(j)]);
    return acc;
}

geom::VarMat3 minus_identity(const geom::VarMat3& m) {
    geom::VarMat3 out = m;
    for (std::size_t i = 0; i < 3; ++i) out[i][i] = m[i][i] - 1.0;
    return out;
}

geom::VarMat3 matmul(const geom::VarMat3& a, const geom::VarMat3& b) {
    geom::VarMat3 out;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    return out;
}

Var norm_sq(const ad::VarField3& v) { return ad::square(v[0]) + ad::square(v[1]) + ad::square(v[2]); }

// Euclidean norm over channels of the spatial derivative of a constant image.
Field edge_weight(const Rgb& image, ad::Axis axis) {
    const ad::Shape s = image[0].shape();
    Field w(s.rows, s.cols, 0.0);
    const bool along_u = axis == ad::Axis::u;
    for (const Var& ch : image) {
        const auto x = ch.value();
        for (int r = 0; r < s.rows; ++r)
            for (int c = 0; c < s.cols; ++c) {
                const bool last = along_u ? c == s.cols - 1 : r == s.rows - 1;
                if (last) continue;
                const std::size_t i = std::size_t(r) * s.cols + c;
                const double d = x[i + (along_u ? 1 : std::size_t(s.cols))] - x[i];
                w.data[i] += d * d;
            }
    }
    for (double& x : w.data) x = std::exp(-std::sqrt(x));
    return w;
}

}  // namespace

Var group_smoothness(const ad::VarField3& t) {
    Var acc;
    for (const Var& ti : t) {
        const Var du = ad::spatial_diff(ti, ad::Axis::u);
        const Var dv = ad::spatial_diff(ti, ad::Axis::v);
        const Var mag = ad::sqrt(ad::square(du) + ad::square(dv) + ad::kEpsAbs * ad::kEpsAbs);
        const Var term = ad::mean(mag);
        acc = acc.valid() ? acc + term : term;
    }
    return acc;
}

Var sparsity_l_half(const ad::VarField3& t, double eps_norm) {
    ad::Tape& tape = *t[0].tape();
    Var acc = zero(tape);
    for (const Var& ti : t) {
        const Var mag = ad::abs(ti);
        const Var avg = ad::mean(mag);
        if (avg.item() < eps_norm) continue;
        const Var integrand = ad::sqrt(1.0 + mag / avg);
        acc = acc + 2.0 * avg * ad::mean(integrand);
    }
    return acc;
}

Var motion_regularizer(const ad::VarField3& t_obj, const HyperParams& h) {
    return h.alpha_mot * group_smoothness(t_obj) + h.beta_mot * sparsity_l_half(t_obj, h.eps_norm);
}

Var depth_smoothness(Var disparity, const Rgb& image, const HyperParams& h) {
    ad::Tape& tape = *disparity.tape();
    const Var wu = tape.constant(edge_weight(image, ad::Axis::u));
    const Var wv = tape.constant(edge_weight(image, ad::Axis::v));
    const Var du = ad::abs_smooth(ad::spatial_diff(disparity, ad::Axis::u));
    const Var dv = ad::abs_smooth(ad::spatial_diff(disparity, ad::Axis::v));
    return h.alpha_dep * ad::mean(du * wu + dv * wv);
}

CycleTerms cycle_consistency(const geom::VarMat3& r, const ad::VarField3& t, const geom::VarMat3& r_inv,
                             const ad::VarField3& t_inv_warped, const Field& mask, const HyperParams& h) {
    const Var num_r = frobenius_sq(minus_identity(matmul(r, r_inv)));
    const Var den_r = frobenius_sq(minus_identity(r)) + frobenius_sq(minus_identity(r_inv)) + h.eps_norm;

    ad::VarField3 residual;
    for (std::size_t i = 0; i < 3; ++i)
        residual[i] = r_inv[i][0] * t[0] + r_inv[i][1] * t[1] + r_inv[i][2] * t[2] + t_inv_warped[i];
    const Var num_t = norm_sq(residual);
    const Var den_t = norm_sq(t) + norm_sq(t_inv_warped) + h.eps_norm;

    return {h.alpha_cyc * (num_r / den_r), h.beta_cyc * ad::mean(masked(num_t / den_t, mask))};
}

Var ssim(const Rgb& a, const Rgb& b) {
    Var acc;
    for (std::size_t c = 0; c < 3; ++c) {
        const Var mu_a = ad::box_filter3(a[c]);
        const Var mu_b = ad::box_filter3(b[c]);
        const Var mu_aa = mu_a * mu_a;
        const Var mu_bb = mu_b * mu_b;
        const Var mu_ab = mu_a * mu_b;
        const Var var_a = ad::box_filter3(a[c] * a[c]) - mu_aa;
        const Var var_b = ad::box_filter3(b[c] * b[c]) - mu_bb;
        const Var cov = ad::box_filter3(a[c] * b[c]) - mu_ab;
        const Var num = (2.0 * mu_ab + kSsimC1) * (2.0 * cov + kSsimC2);
        const Var den = (mu_aa + mu_bb + kSsimC1) * (var_a + var_b + kSsimC2);
        const Var term = ad::mean(num / den);
        acc = acc.valid() ? acc + term : term;
    }
    return acc / 3.0;
}

Field visibility_mask(Var z_prime, Var d_warp, double eps_occ) {
    const ad::Shape s = z_prime.shape();
    Field occ(s.rows, s.cols, 0.0);
    const auto z = z_prime.value();
    const auto d = d_warp.value();
    for (std::size_t i = 0; i < occ.size(); ++i) occ.data[i] = z[i] <= d[i] + eps_occ ? 1.0 : 0.0;
    return occ;
}

PhotoTerms photometric_loss(const Rgb& image, const Rgb& image_warp, Var z_prime, Var d_warp, const Field& mask,
                            const HyperParams& h) {
    Field m = visibility_mask(z_prime, d_warp, h.eps_occ);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] *= mask.data[i];

    const Var l1 = ad::abs(image[0] - image_warp[0]) + ad::abs(image[1] - image_warp[1]) +
                   ad::abs(image[2] - image_warp[2]);
    Rgb a, b;
    for (std::size_t c = 0; c < 3; ++c) {
        a[c] = masked(image[c], m);
        b[c] = masked(image_warp[c], m);
    }
    return {h.alpha_rgb * ad::mean(masked(l1, m)), h.beta_rgb * (1.0 - ssim(a, b)) / 2.0};
}

std::vector<std::pair<std::string, double>> LossBreakdown::values() const {
    return {{"group_smooth", group_smooth.item()}, {"sparsity", sparsity.item()},
            {"depth_smooth", depth_smooth.item()}, {"cyc_rot", cyc_rot.item()},
            {"cyc_trans", cyc_trans.item()},       {"photo_l1", photo_l1.item()},
            {"photo_ssim", photo_ssim.item()},     {"total", total.item()}};
}

namespace {

struct DirectionTerms {
    Var group_smooth, sparsity, cyc_rot, cyc_trans, photo_l1, photo_ssim;
};

// Losses for the warp from `src` into `dst`'s viewpoint: `src` pixels are
// moved by `fwd` and compared against `dst` resampled at the warped points.
DirectionTerms direction(const FrameVars& src, const FrameVars& dst, const MotionVars& fwd, const MotionVars& bwd,
                         const geom::CameraVars& k, const HyperParams& h) {
    const ad::VarField3 t_fwd = geom::total_translation(fwd.t_obj, fwd.t_ego);
    const geom::WarpResult w = geom::warp(src.depth, k, fwd.rotation, t_fwd);
    const geom::Resampled res = geom::resample(dst.image, dst.depth, w);

    const ad::VarField3 t_bwd = geom::total_translation(bwd.t_obj, bwd.t_ego);
    ad::VarField3 t_bwd_warped;
    for (std::size_t i = 0; i < 3; ++i) t_bwd_warped[i] = ad::bilinear_sample(t_bwd[i], w.u, w.v).value;

    DirectionTerms d;
    d.group_smooth = h.alpha_mot * group_smoothness(fwd.t_obj);
    d.sparsity = h.beta_mot * sparsity_l_half(fwd.t_obj, h.eps_norm);
    const CycleTerms cyc = cycle_consistency(fwd.rotation, t_fwd, bwd.rotation, t_bwd_warped, res.mask, h);
    d.cyc_rot = cyc.rotation;
    d.cyc_trans = cyc.translation;
    const PhotoTerms photo = photometric_loss(src.image, res.frame, w.z, res.depth, res.mask, h);
    d.photo_l1 = photo.l1;
    d.photo_ssim = photo.ssim;
    return d;
}

}  // namespace

LossBreakdown pair_loss(const FrameVars& a, const FrameVars& b, const MotionVars& ab, const MotionVars& ba,
                        const geom::CameraVars& k, const HyperParams& h) {
    const DirectionTerms f = direction(a, b, ab, ba, k, h);
    const DirectionTerms r = direction(b, a, ba, ab, k, h);

    LossBreakdown out;
    out.group_smooth = f.group_smooth + r.group_smooth;
    out.sparsity = f.sparsity + r.sparsity;
    out.depth_smooth = depth_smoothness(1.0 / a.depth, a.image, h) + depth_smoothness(1.0 / b.depth, b.image, h);
    out.cyc_rot = f.cyc_rot + r.cyc_rot;
    out.cyc_trans = f.cyc_trans + r.cyc_trans;
    out.photo_l1 = f.photo_l1 + r.photo_l1;
    out.photo_ssim = f.photo_ssim + r.photo_ssim;
    out.total = out.group_smooth + out.sparsity + out.depth_smooth + out.cyc_rot + out.cyc_trans + out.photo_l1 +
                out.photo_ssim;
    return out;
}

}  // namespace dmk::loss
