#include "camera.hpp"

#include <algorithm>
#include <cmath>

namespace dmk::geom {

void Intrinsics::validate(int width, int height) const {
    if (!(fx > 0.0) || !std::isfinite(fx)) throw InputError("focal length must be positive", "fx");
    if (!(fy > 0.0) || !std::isfinite(fy)) throw InputError("focal length must be positive", "fy");
    if (!(cx > 0.0 && cx < width)) throw InputError("optical centre must lie inside the image", "cx");
    if (!(cy > 0.0 && cy < height)) throw InputError("optical centre must lie inside the image", "cy");
}

namespace {

// R = Rz(g) * Ry(b) * Rx(a), written out so it serves doubles and tape nodes.
template <class S>
std::array<std::array<S, 3>, 3> rotation_from(S ca, S sa, S cb, S sb, S cg, S sg) {
    return {{{cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa},
             {sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa},
             {-sb, cb * sa, cb * ca}}};
}

}  // namespace

Mat3 euler_to_rotation(const Vec3& e) {
    return rotation_from(std::cos(e[0]), std::sin(e[0]), std::cos(e[1]), std::sin(e[1]), std::cos(e[2]),
                         std::sin(e[2]));
}

Vec3 rotation_to_euler(const Mat3& r) {
    const double b = std::asin(std::clamp(-r[2][0], -1.0, 1.0));
    const double a = std::atan2(r[2][1], r[2][2]);
    const double g = std::atan2(r[1][0], r[0][0]);
    return {a, b, g};
}

Mat3 transpose(const Mat3& r) {
    Mat3 t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = r[j][i];
    return t;
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) m[i][j] += a[i][k] * b[k][j];
    return m;
}

Vec3 apply(const Mat3& r, const Vec3& x) {
    Vec3 y{};
    for (int i = 0; i < 3; ++i) y[i] = r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2];
    return y;
}

RigidMotion inverse(const RigidMotion& m) {
    const Mat3 rt = transpose(euler_to_rotation(m.euler));
    const Vec3 t = apply(rt, m.translation);
    return {rotation_to_euler(rt), {-t[0], -t[1], -t[2]}};
}

VarMat3 euler_to_rotation(ad::Var rx, ad::Var ry, ad::Var rz) {
    return rotation_from(ad::cos(rx), ad::sin(rx), ad::cos(ry), ad::sin(ry), ad::cos(rz), ad::sin(rz));
}

VarMat3 constant_rotation(ad::Tape& tape, const Mat3& r) {
    VarMat3 m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = tape.constant(r[i][j]);
    return m;
}

CameraVars CameraVars::constant(ad::Tape& tape, const Intrinsics& k) {
    return {tape.constant(k.fx), tape.constant(k.fy), tape.constant(k.cx), tape.constant(k.cy)};
}

ad::VarField3 total_translation(const ad::VarField3& t_obj, const std::array<ad::Var, 3>& t_ego) {
    return {t_obj[0] + t_ego[0], t_obj[1] + t_ego[1], t_obj[2] + t_ego[2]};
}

WarpResult warp_points(ad::Var u, ad::Var v, ad::Var depth, const CameraVars& k, const VarMat3& r,
                       const ad::VarField3& t, ad::Shape image) {
    using ad::Var;
    // Back-project: X = z K^-1 p.
    const Var xn = (u - k.cx) / k.fx;
    const Var yn = (v - k.cy) / k.fy;
    const Var x = depth * xn;
    const Var y = depth * yn;
    const Var& z = depth;

    // Rigid transform, then re-project with K.
    const Var xt = r[0][0] * x + r[0][1] * y + r[0][2] * z + t[0];
    const Var yt = r[1][0] * x + r[1][1] * y + r[1][2] * z + t[1];
    const Var zt = r[2][0] * x + r[2][1] * y + r[2][2] * z + t[2];
    const Var z_safe = ad::max(zt, kZMin);

    WarpResult w;
    w.u = k.fx * xt / z_safe + k.cx;
    w.v = k.fy * yt / z_safe + k.cy;
    w.z = zt;

    const ad::Shape s = u.shape();
    w.mask = Field(s.rows, s.cols, 0.0);
    const auto uu = w.u.value();
    const auto vv = w.v.value();
    const auto zz = zt.value();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool inside = uu[i] >= 0.0 && uu[i] <= image.cols - 1 && vv[i] >= 0.0 && vv[i] <= image.rows - 1;
        w.mask.data[i] = (zz[i] > kZMin && inside) ? 1.0 : 0.0;
    }
    return w;
}

WarpResult warp(ad::Var depth, const CameraVars& k, const VarMat3& r, const ad::VarField3& t) {
    ad::Tape& tape = *depth.tape();
    const ad::Shape s = depth.shape();
    return warp_points(tape.grid_u(s), tape.grid_v(s), depth, k, r, t, s);
}

Resampled resample(const std::array<ad::Var, 3>& frame, ad::Var depth, const WarpResult& w) {
    Resampled out;
    out.mask = w.mask;
    auto combine = [&](const Field& m) {
        for (std::size_t i = 0; i < m.size(); ++i) out.mask.data[i] *= m.data[i];
    };
    for (int c = 0; c < 3; ++c) {
        ad::Sampled s = ad::bilinear_sample(frame[std::size_t(c)], w.u, w.v);
        combine(s.mask);
        out.frame[std::size_t(c)] = s.value;
    }
    ad::Sampled d = ad::bilinear_sample(depth, w.u, w.v);
    combine(d.mask);
    out.depth = d.value;
    return out;
}

}  // namespace dmk::geom
