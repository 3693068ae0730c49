#include "scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace dmk::synth {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Lattice value in [-1, 1].
double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
    const std::uint64_t h = splitmix(seed ^ splitmix(std::uint64_t(ix) * 0x632be59bd9b4e019ULL ^
                                                     splitmix(std::uint64_t(iy) + 0x85ebca6b)));
    return double(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(double x, double y, std::uint64_t seed) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = std::int64_t(fx), iy = std::int64_t(fy);
    const double tx = fade(x - fx), ty = fade(y - fy);
    const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
    const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
    return (1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d);
}

// Octaves are specified in frame-a pixels, so texture detail has the same
// image-space scale everywhere in the reference view.
struct Octave {
    double cell;
    double amplitude;
};
constexpr Octave kOctaves[] = {{12.0, 0.22}, {6.0, 0.12}, {3.5, 0.05}};

double texture(double u, double v, std::uint64_t seed) {
    double acc = 0.0;
    std::uint64_t s = seed;
    for (const auto& o : kOctaves) {
        s = splitmix(s);
        acc += o.amplitude * value_noise(u / o.cell, v / o.cell, s);
    }
    return acc;
}

struct Surface {
    // Plane n . X = 1 in camera-a coordinates.
    Vec3 normal;
    // Camera-a -> camera-b translation applied to this surface.
    Vec3 motion_t;
    // Residual translation (zero for the background).
    Vec3 t_obj;
    // Footprint in frame-a image coordinates; unbounded for the background.
    double u_lo, u_hi, v_lo, v_hi;
    std::uint64_t seed;
    double tint;
};

struct Hit {
    int surface = -1;
    double depth = 0.0;
    double u_a = 0.0, v_a = 0.0;
};

class Renderer {
public:
    Renderer(const SceneSpec& spec, std::uint64_t seed) : spec_(spec), r_(geom::euler_to_rotation(spec.ego.euler)) {
        const auto& k = spec.k;
        const double inv_far = 1.0 / spec.depth_far, inv_near = 1.0 / spec.depth_near;
        const double slope = (inv_near - inv_far) / double(spec.height - 1);
        const double inf = std::numeric_limits<double>::infinity();
        const std::uint64_t base = splitmix(spec.texture_seed ^ splitmix(seed));
        surfaces_.push_back(
            {{0.0, slope * k.fy, inv_far + slope * k.cy}, spec.ego.translation, {0, 0, 0}, -inf, inf, -inf, inf, base, 0.0});
        for (std::size_t i = 0; i < spec.objects.size(); ++i) {
            const auto& o = spec.objects[i];
            Vec3 t = spec.ego.translation;
            for (int j = 0; j < 3; ++j) t[std::size_t(j)] += o.translation[std::size_t(j)];
            surfaces_.push_back({{0.0, 0.0, 1.0 / o.depth},
                                 t,
                                 o.translation,
                                 o.u0 - 0.5,
                                 o.u1 + 0.5,
                                 o.v0 - 0.5,
                                 o.v1 + 0.5,
                                 splitmix(base + 0x1000 * (i + 1)),
                                 (i % 2 == 0) ? 0.12 : -0.12});
        }
    }

    const std::vector<Surface>& surfaces() const { return surfaces_; }
    const Mat3& rotation() const { return r_; }

    // Casts the ray through pixel (u, v) of frame a (moved = false) or frame
    // b (moved = true) and returns the nearest surface hit.
    Hit cast(double u, double v, bool moved) const {
        const auto& k = spec_.k;
        const Vec3 d{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
        Hit best;
        for (std::size_t s = 0; s < surfaces_.size(); ++s) {
            const Surface& sf = surfaces_[s];
            // Ray X_b = lambda d, mapped back: X_a = R^T (lambda d - t).
            Vec3 a = d, c{0, 0, 0};
            if (moved) {
                const Mat3 rt = geom::transpose(r_);
                a = geom::apply(rt, d);
                c = geom::apply(rt, sf.motion_t);
            }
            const double na = dot(sf.normal, a);
            if (std::abs(na) < 1e-12) continue;
            const double lambda = (1.0 + dot(sf.normal, c)) / na;
            if (!(lambda > geom::kZMin)) continue;
            const Vec3 x{lambda * a[0] - c[0], lambda * a[1] - c[1], lambda * a[2] - c[2]};
            if (!(x[2] > geom::kZMin)) continue;
            const double ua = k.fx * x[0] / x[2] + k.cx;
            const double va = k.fy * x[1] / x[2] + k.cy;
            if (ua < sf.u_lo || ua > sf.u_hi || va < sf.v_lo || va > sf.v_hi) continue;
            if (best.surface < 0 || lambda < best.depth) best = {int(s), lambda, ua, va};
        }
        return best;
    }

    Vec3 shade(const Hit& h) const {
        const Surface& sf = surfaces_[std::size_t(h.surface)];
        Vec3 rgb{};
        for (std::size_t c = 0; c < 3; ++c)
            rgb[c] = std::clamp(0.5 + sf.tint + texture(h.u_a, h.v_a, sf.seed + 7919 * (c + 1)), 0.0, 1.0);
        return rgb;
    }

    static double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

private:
    const SceneSpec& spec_;
    Mat3 r_;
    std::vector<Surface> surfaces_;
};

struct FrameRender {
    RgbImage image;
    Field depth;
    std::vector<int> surface;
};

FrameRender render_frame(const Renderer& renderer, int w, int h, bool moved) {
    FrameRender f{make_field3(h, w), Field(h, w, 0.0), std::vector<int>(std::size_t(w) * h, -1)};
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const Hit hit = renderer.cast(u, v, moved);
            if (hit.surface < 0)
                throw InputError("background plane not visible at pixel (" + std::to_string(u) + ", " +
                                     std::to_string(v) + ")",
                                 moved ? "ego" : "background.depth_far");
            const Vec3 rgb = renderer.shade(hit);
            const std::size_t i = std::size_t(v) * w + u;
            for (std::size_t c = 0; c < 3; ++c) f.image[c].data[i] = rgb[c];
            f.depth.data[i] = hit.depth;
            f.surface[i] = hit.surface;
        }
    return f;
}

// Ground-truth correspondence of pixel (u, v) with depth z under (R, t).
void project(const geom::Intrinsics& k, const Mat3& r, const Vec3& t, double u, double v, double z, double& u2,
             double& v2, double& z2) {
    const Vec3 x{z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z};
    Vec3 y = geom::apply(r, x);
    for (std::size_t i = 0; i < 3; ++i) y[i] += t[i];
    z2 = y[2];
    u2 = k.fx * y[0] / y[2] + k.cx;
    v2 = k.fy * y[1] / y[2] + k.cy;
}

// A pixel is valid when its surface occupies all four bilinear neighbours
// of its ground-truth position in the other frame.
Field validity(const FrameRender& src, const FrameRender& dst, const std::vector<Surface>& surfaces,
               const geom::Intrinsics& k, const Mat3& r, bool forward, int w, int h) {
    Field valid(h, w, 0.0);
    const Mat3 rt = geom::transpose(r);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const std::size_t i = std::size_t(v) * w + u;
            const int s = src.surface[i];
            const Surface& sf = surfaces[std::size_t(s)];
            double u2, v2, z2;
            if (forward) {
                project(k, r, sf.motion_t, u, v, src.depth.data[i], u2, v2, z2);
            } else {
                const Vec3 t = geom::apply(rt, sf.motion_t);
                project(k, rt, {-t[0], -t[1], -t[2]}, u, v, src.depth.data[i], u2, v2, z2);
            }
            if (!(z2 > geom::kZMin) || u2 < 0.0 || u2 > w - 1 || v2 < 0.0 || v2 > h - 1) continue;
            const int c0 = std::min(int(std::floor(u2)), w - 2), r0 = std::min(int(std::floor(v2)), h - 2);
            bool same = true;
            for (int dr = 0; dr <= 1; ++dr)
                for (int dc = 0; dc <= 1; ++dc)
                    same = same && dst.surface[std::size_t(r0 + dr) * w + (c0 + dc)] == s;
            valid.data[i] = same ? 1.0 : 0.0;
        }
    return valid;
}

}  // namespace

void SceneSpec::validate() const {
    if (width < 8) throw InputError("must be at least 8", "width");
    if (height < 8) throw InputError("must be at least 8", "height");
    try {
        k.validate(width, height);
    } catch (const InputError& e) {
        throw InputError(e.message(), "intrinsics." + e.path());
    }
    if (!(depth_near > 0.0)) throw InputError("must be positive", "background.depth_near");
    if (!(depth_far >= depth_near)) throw InputError("must be >= depth_near", "background.depth_far");
    if (!(noise_sigma >= 0.0)) throw InputError("must be non-negative", "noise_sigma");
    for (double a : ego.euler)
        if (!std::isfinite(a)) throw InputError("must be finite", "ego_motion.euler");
    for (double t : ego.translation)
        if (!std::isfinite(t)) throw InputError("must be finite", "ego_motion.translation");

    const double inv_far = 1.0 / depth_far, inv_near = 1.0 / depth_near;
    const Mat3 r = geom::euler_to_rotation(ego.euler);
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        const std::string path = "objects[" + std::to_string(i) + "]";
        if (o.u0 < 0 || o.v0 < 0 || o.u1 >= width || o.v1 >= height || o.u0 > o.u1 || o.v0 > o.v1)
            throw InputError("rectangle must lie inside the image", path + ".rect");
        if (!(o.depth > 0.0)) throw InputError("must be positive", path + ".depth");
        // Background depth is smallest on the lowest row the object covers.
        const double v_low = std::min(double(height - 1), o.v1 + 0.5);
        const double bg = 1.0 / (inv_far + (inv_near - inv_far) * v_low / double(height - 1));
        if (!(o.depth < bg)) throw InputError("object must be in front of the background", path + ".depth");

        Vec3 t = ego.translation;
        for (std::size_t j = 0; j < 3; ++j) t[j] += o.translation[j];
        const double corners[4][2] = {{o.u0 - 0.5, o.v0 - 0.5}, {o.u1 + 0.5, o.v0 - 0.5}, {o.u0 - 0.5, o.v1 + 0.5},
                                      {o.u1 + 0.5, o.v1 + 0.5}};
        for (const auto& cn : corners) {
            double u2, v2, z2;
            project(k, r, t, cn[0], cn[1], o.depth, u2, v2, z2);
            if (!(z2 > geom::kZMin) || u2 < 0.0 || u2 > width - 1 || v2 < 0.0 || v2 > height - 1)
                throw InputError("object leaves the frame", path + ".translation");
        }
    }
}

SceneSample render_pair(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int w = spec.width, h = spec.height;
    Renderer renderer(spec, seed);
    FrameRender fa = render_frame(renderer, w, h, false);
    FrameRender fb = render_frame(renderer, w, h, true);

    SceneSample s;
    s.width = w;
    s.height = h;
    s.k = spec.k;
    s.ego_ab = spec.ego;
    s.ego_ba = geom::inverse(spec.ego);
    s.depth_a = fa.depth;
    s.depth_b = fb.depth;
    s.t_obj_ab = make_field3(h, w);
    s.t_obj_ba = make_field3(h, w);
    s.object_mask_a = Field(h, w, 0.0);
    s.object_mask_b = Field(h, w, 0.0);

    const Mat3 rt = geom::transpose(renderer.rotation());
    const auto& surfaces = renderer.surfaces();
    for (std::size_t i = 0; i < std::size_t(w) * h; ++i) {
        if (fa.surface[i] > 0) {
            const Vec3& t = surfaces[std::size_t(fa.surface[i])].t_obj;
            for (std::size_t c = 0; c < 3; ++c) s.t_obj_ab[c].data[i] = t[c];
            s.object_mask_a.data[i] = 1.0;
        }
        if (fb.surface[i] > 0) {
            const Vec3 t = geom::apply(rt, surfaces[std::size_t(fb.surface[i])].t_obj);
            for (std::size_t c = 0; c < 3; ++c) s.t_obj_ba[c].data[i] = -t[c];
            s.object_mask_b.data[i] = 1.0;
        }
    }
    s.valid_a = validity(fa, fb, surfaces, spec.k, renderer.rotation(), true, w, h);
    s.valid_b = validity(fb, fa, surfaces, spec.k, renderer.rotation(), false, w, h);

    if (spec.noise_sigma > 0.0) {
        std::mt19937_64 rng(splitmix(seed ^ 0xa5a5a5a5ULL));
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (RgbImage* img : {&fa.image, &fb.image})
            for (auto& ch : *img)
                for (double& x : ch.data) x = std::clamp(x + noise(rng), 0.0, 1.0);
    }
    s.frame_a = std::move(fa.image);
    s.frame_b = std::move(fb.image);
    return s;
}

double photometric_residual(const SceneSample& s) {
    ad::Tape tape;
    const ad::Var depth = tape.constant(s.depth_a);
    const geom::CameraVars k = geom::CameraVars::constant(tape, s.k);
    const geom::VarMat3 r = geom::constant_rotation(tape, geom::euler_to_rotation(s.ego_ab.euler));
    ad::VarField3 t_obj;
    std::array<ad::Var, 3> t_ego;
    for (std::size_t c = 0; c < 3; ++c) {
        t_obj[c] = tape.constant(s.t_obj_ab[c]);
        t_ego[c] = tape.constant(s.ego_ab.translation[c]);
    }
    const geom::WarpResult w = geom::warp(depth, k, r, geom::total_translation(t_obj, t_ego));

    double worst = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        const ad::Sampled sb = ad::bilinear_sample(tape.constant(s.frame_b[c]), w.u, w.v);
        const auto vb = sb.value.value();
        for (std::size_t i = 0; i < vb.size(); ++i) {
            if (s.valid_a.data[i] == 0.0 || w.mask.data[i] == 0.0 || sb.mask.data[i] == 0.0) continue;
            worst = std::max(worst, std::abs(vb[i] - s.frame_a[c].data[i]));
        }
    }
    return worst;
}

double self_check(const SceneSample& sample, double limit) {
    const double residual = photometric_residual(sample);
    if (residual > limit)
        throw ContractError("generator/geometry inconsistency: residual " + std::to_string(residual) +
                            " exceeds " + std::to_string(limit));
    return residual;
}

SceneSpec static_scene(std::uint64_t texture_seed) {
    SceneSpec s;
    s.texture_seed = texture_seed;
    return s;
}

SceneSpec ego_motion_scene(std::uint64_t texture_seed) {
    SceneSpec s;
    s.texture_seed = texture_seed;
    s.ego.euler = {0.01, -0.03, 0.005};
    s.ego.translation = {0.25, 0.0, 0.1};
    return s;
}

SceneSpec dynamic_scene(std::uint64_t texture_seed) {
    SceneSpec s = ego_motion_scene(texture_seed);
    ObjectSpec o;
    o.u0 = 22;
    o.u1 = 37;
    o.v0 = 20;
    o.v1 = 33;
    o.depth = 4.0;
    o.translation = {0.0, 0.2, 0.0};
    s.objects.push_back(o);
    return s;
}

}  // namespace dmk::synth
