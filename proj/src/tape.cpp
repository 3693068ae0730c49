#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmk::ad {

// ---------------------------------------------------------------------------
// Var / Gradients

Shape Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::value() const { return tape_->value(id_); }

double Var::item() const {
    if (!shape().scalar()) throw ContractError("item() on a non-scalar node");
    return value()[0];
}

Field Var::to_field() const {
    auto v = value();
    return Field(shape().rows, shape().cols, std::vector<double>(v.begin(), v.end()));
}

std::span<const double> Gradients::of(const Var& leaf) const {
    return by_node_.at(std::size_t(leaf.id()));
}

Field Gradients::field_of(const Var& leaf) const {
    auto g = of(leaf);
    const Shape s = shapes_.at(std::size_t(leaf.id()));
    return Field(s.rows, s.cols, std::vector<double>(g.begin(), g.end()));
}

// ---------------------------------------------------------------------------
// Tape

namespace {

void require_finite(const char* op, std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(op, "non-finite value");
    }
}

}  // namespace

Var Tape::push(const char* op, Shape s, std::vector<double> value, Backward backward, bool leaf) {
    if (s.rows < 1 || s.cols < 1) throw DimensionError(std::string(op) + ": empty shape");
    if (value.size() != s.size()) throw DimensionError(std::string(op) + ": value size does not match shape");
    require_finite(op, value);
    nodes_.push_back(Node{op, s, std::move(value), std::move(backward), leaf});
    return Var(this, int(nodes_.size()) - 1);
}

Var Tape::leaf(const Field& f) { return push("leaf", {f.rows, f.cols}, f.data, nullptr, true); }
Var Tape::leaf(Shape s, std::vector<double> values) { return push("leaf", s, std::move(values), nullptr, true); }
Var Tape::leaf(double v) { return push("leaf", {1, 1}, {v}, nullptr, true); }

Var Tape::constant(const Field& f) { return push("const", {f.rows, f.cols}, f.data, nullptr, false); }
Var Tape::constant(Shape s, double fill) {
    return push("const", s, std::vector<double>(s.size(), fill), nullptr, false);
}
Var Tape::constant(Shape s, std::vector<double> values) {
    return push("const", s, std::move(values), nullptr, false);
}
Var Tape::constant(double v) { return push("const", {1, 1}, {v}, nullptr, false); }

Var Tape::grid_u(Shape s) {
    std::vector<double> g(s.size());
    for (int r = 0; r < s.rows; ++r)
        for (int c = 0; c < s.cols; ++c) g[std::size_t(r) * s.cols + c] = c;
    return push("grid_u", s, std::move(g), nullptr, false);
}

Var Tape::grid_v(Shape s) {
    std::vector<double> g(s.size());
    for (int r = 0; r < s.rows; ++r)
        for (int c = 0; c < s.cols; ++c) g[std::size_t(r) * s.cols + c] = r;
    return push("grid_v", s, std::move(g), nullptr, false);
}

Var Tape::record(const char* op, Shape s, std::vector<double> value, Backward backward) {
    return push(op, s, std::move(value), std::move(backward), false);
}

std::span<double> Tape::grad_buffer(int id) {
    auto& g = grads_[std::size_t(id)];
    if (g.empty()) g.assign(nodes_[std::size_t(id)].value.size(), 0.0);
    return g;
}

Gradients Tape::backward(const Var& loss) {
    if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    if (!loss.shape().scalar()) throw ContractError("backward: loss must be a scalar node");

    grads_.assign(nodes_.size(), {});
    grad_buffer(loss.id())[0] = 1.0;
    for (int id = loss.id(); id >= 0; --id) {
        const auto& node = nodes_[std::size_t(id)];
        if (!node.backward || grads_[std::size_t(id)].empty()) continue;
        // The buffer of `id` is never resized by its own callback, which only
        // writes into earlier nodes.
        std::span<const double> g = grads_[std::size_t(id)];
        node.backward(*this, g);
    }

    Gradients out;
    out.by_node_.resize(nodes_.size());
    out.shapes_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        out.shapes_[i] = nodes_[i].shape;
        if (!nodes_[i].leaf) continue;
        if (grads_[i].empty())
            out.by_node_[i].assign(nodes_[i].value.size(), 0.0);
        else
            out.by_node_[i] = std::move(grads_[i]);
    }
    grads_.clear();
    return out;
}

void Tape::clear() {
    nodes_.clear();
    grads_.clear();
}

// ---------------------------------------------------------------------------
// Elementwise helpers

namespace {

Tape& tape_of(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid()) throw ContractError("operation on an empty Var");
    if (a.tape() != b.tape()) throw ContractError("operands belong to different tapes");
    return *a.tape();
}

Shape broadcast(const char* op, Shape a, Shape b) {
    if (a == b) return a;
    if (a.scalar()) return b;
    if (b.scalar()) return a;
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols));
}

// f(x, y) -> z; dfx(x, y, z), dfy(x, y, z) are the partial derivatives.
template <class F, class DX, class DY>
Var binary(const char* op, Var a, Var b, F f, DX dfx, DY dfy) {
    Tape& t = tape_of(a, b);
    const Shape s = broadcast(op, a.shape(), b.shape());
    const bool sa = a.shape().scalar() && !s.scalar();
    const bool sb = b.shape().scalar() && !s.scalar();
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);

    const int ia = a.id(), ib = b.id();
    return t.record(op, s, std::move(out),
                    [ia, ib, sa, sb, out_id = int(t.size()), dfx, dfy](Tape& tp, std::span<const double> g) {
                        auto x = tp.value(ia);
                        auto y = tp.value(ib);
                        auto z = tp.value(out_id);
                        auto gx = tp.grad_buffer(ia);
                        auto gy = tp.grad_buffer(ib);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const std::size_t i_a = sa ? 0 : i, i_b = sb ? 0 : i;
                            gx[i_a] += g[i] * dfx(x[i_a], y[i_b], z[i]);
                            gy[i_b] += g[i] * dfy(x[i_a], y[i_b], z[i]);
                        }
                    });
}

template <class F, class DF>
Var unary(const char* op, Var a, F f, DF df) {
    if (!a.valid()) throw ContractError(std::string(op) + ": empty Var");
    Tape& t = *a.tape();
    auto av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    const int ia = a.id();
    return t.record(op, a.shape(), std::move(out),
                    [ia, out_id = int(t.size()), df](Tape& tp, std::span<const double> g) {
                        auto x = tp.value(ia);
                        auto z = tp.value(out_id);
                        auto gx = tp.grad_buffer(ia);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(x[i], z[i]);
                    });
}

double guard_denominator(double b) {
    if (std::abs(b) >= kEpsDenom) return b;
    return b < 0.0 ? -kEpsDenom : kEpsDenom;
}

Var scalar_const(const Var& like, double v) { return like.tape()->constant(v); }

}  // namespace

Var add(Var a, Var b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / guard_denominator(y); },
        [](double, double y, double) { return 1.0 / guard_denominator(y); },
        [](double, double y, double z) { return -z / guard_denominator(y); });
}

Var min(Var a, Var b) {
    return binary(
        "min", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
        [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var max(Var a, Var b) {
    return binary(
        "max", a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
        [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var add(Var a, double b) { return add(a, scalar_const(a, b)); }
Var sub(Var a, double b) { return sub(a, scalar_const(a, b)); }
Var sub(double a, Var b) { return sub(scalar_const(b, a), b); }
Var mul(Var a, double b) { return mul(a, scalar_const(a, b)); }
Var div(Var a, double b) { return div(a, scalar_const(a, b)); }
Var div(double a, Var b) { return div(scalar_const(b, a), b); }
Var min(Var a, double b) { return min(a, scalar_const(a, b)); }
Var max(Var a, double b) { return max(a, scalar_const(a, b)); }

Var neg(Var a) {
    return unary(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var sqrt(Var a) {
    return unary(
        "sqrt", a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
        [](double x, double z) { return x > 0.0 ? 0.5 / z : 0.0; });
}

Var abs_smooth(Var a, double eps) {
    const double e2 = eps * eps;
    return unary(
        "abs_smooth", a, [e2](double x) { return std::sqrt(x * x + e2); },
        [](double x, double z) { return x / z; });
}

Var abs(Var a) {
    return unary(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double z) { return z; });
}

Var log(Var a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sin(Var a) {
    return unary(
        "sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
    return unary(
        "cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var softplus(Var a) {
    return unary(
        "softplus", a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Var clamp(Var a, double lo, double hi) {
    return unary(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var detach(Var a) {
    auto v = a.value();
    return a.tape()->constant(a.shape(), std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var f) {
    Tape& t = *f.tape();
    double acc = 0.0;
    for (double x : f.value()) acc += x;
    const int id = f.id();
    return t.record("sum", {1, 1}, {acc}, [id](Tape& tp, std::span<const double> g) {
        for (double& x : tp.grad_buffer(id)) x += g[0];
    });
}

Var mean(Var f) {
    Tape& t = *f.tape();
    const auto v = f.value();
    if (v.empty()) throw ContractError("mean: empty field");
    double acc = 0.0;
    for (double x : v) acc += x;
    const double inv_n = 1.0 / double(v.size());
    const int id = f.id();
    return t.record("mean", {1, 1}, {acc * inv_n}, [id, inv_n](Tape& tp, std::span<const double> g) {
        for (double& x : tp.grad_buffer(id)) x += g[0] * inv_n;
    });
}

Var pick(Var f, int index) {
    Tape& t = *f.tape();
    if (index < 0 || std::size_t(index) >= f.shape().size()) throw DimensionError("pick: index out of range");
    const int id = f.id();
    return t.record("pick", {1, 1}, {f.value()[std::size_t(index)]},
                    [id, index](Tape& tp, std::span<const double> g) { tp.grad_buffer(id)[std::size_t(index)] += g[0]; });
}

// ---------------------------------------------------------------------------
// Spatial operators

Var spatial_diff(Var f, Axis axis) {
    Tape& t = *f.tape();
    const Shape s = f.shape();
    const bool along_u = axis == Axis::u;
    if ((along_u ? s.cols : s.rows) < 2) throw DimensionError("spatial_diff: axis length must be at least 2");

    const auto x = f.value();
    std::vector<double> out(s.size(), 0.0);
    const std::size_t step = along_u ? 1 : std::size_t(s.cols);
    const int last_r = along_u ? s.rows : s.rows - 1;
    const int last_c = along_u ? s.cols - 1 : s.cols;
    for (int r = 0; r < last_r; ++r)
        for (int c = 0; c < last_c; ++c) {
            const std::size_t i = std::size_t(r) * s.cols + c;
            out[i] = x[i + step] - x[i];
        }

    const int id = f.id();
    return t.record("spatial_diff", s, std::move(out),
                    [id, s, step, last_r, last_c](Tape& tp, std::span<const double> g) {
                        auto gx = tp.grad_buffer(id);
                        for (int r = 0; r < last_r; ++r)
                            for (int c = 0; c < last_c; ++c) {
                                const std::size_t i = std::size_t(r) * s.cols + c;
                                gx[i + step] += g[i];
                                gx[i] -= g[i];
                            }
                    });
}

Var box_filter3(Var f) {
    Tape& t = *f.tape();
    const Shape s = f.shape();
    const auto x = f.value();
    std::vector<double> out(s.size());
    for (int r = 0; r < s.rows; ++r)
        for (int c = 0; c < s.cols; ++c) {
            double acc = 0.0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= s.rows || cc < 0 || cc >= s.cols) continue;
                    acc += x[std::size_t(rr) * s.cols + cc];
                    ++n;
                }
            out[std::size_t(r) * s.cols + c] = acc / n;
        }

    const int id = f.id();
    return t.record("box_filter3", s, std::move(out), [id, s](Tape& tp, std::span<const double> g) {
        auto gx = tp.grad_buffer(id);
        for (int r = 0; r < s.rows; ++r)
            for (int c = 0; c < s.cols; ++c) {
                const int r0 = std::max(r - 1, 0), r1 = std::min(r + 1, s.rows - 1);
                const int c0 = std::max(c - 1, 0), c1 = std::min(c + 1, s.cols - 1);
                const double share = g[std::size_t(r) * s.cols + c] / double((r1 - r0 + 1) * (c1 - c0 + 1));
                for (int rr = r0; rr <= r1; ++rr)
                    for (int cc = c0; cc <= c1; ++cc) gx[std::size_t(rr) * s.cols + cc] += share;
            }
    });
}

namespace {

// Interpolation stencil for one sample point.
struct Stencil {
    std::size_t i00, i01, i10, i11;
    double fu, fv;
};

// Returns false when (u, v) is outside [0, W-1] x [0, H-1]. Integer
// coordinates on the last row/column use the cell to their left/above with
// weight 1, so an identity grid is valid everywhere.
bool make_stencil(double u, double v, Shape s, Stencil& st) {
    if (!(u >= 0.0 && u <= s.cols - 1 && v >= 0.0 && v <= s.rows - 1)) return false;
    int c0 = s.cols >= 2 ? std::min(int(std::floor(u)), s.cols - 2) : 0;
    int r0 = s.rows >= 2 ? std::min(int(std::floor(v)), s.rows - 2) : 0;
    const int c1 = s.cols >= 2 ? c0 + 1 : c0;
    const int r1 = s.rows >= 2 ? r0 + 1 : r0;
    st.fu = s.cols >= 2 ? u - c0 : 0.0;
    st.fv = s.rows >= 2 ? v - r0 : 0.0;
    st.i00 = std::size_t(r0) * s.cols + c0;
    st.i01 = std::size_t(r0) * s.cols + c1;
    st.i10 = std::size_t(r1) * s.cols + c0;
    st.i11 = std::size_t(r1) * s.cols + c1;
    return true;
}

}  // namespace

Sampled bilinear_sample(Var f, Var u, Var v) {
    Tape& t = tape_of(f, u);
    tape_of(f, v);
    const Shape out_shape = u.shape();
    if (!(v.shape() == out_shape)) throw DimensionError("bilinear_sample: coordinate fields differ in shape");

    const Shape src = f.shape();
    const auto fv = f.value();
    const auto uv = u.value();
    const auto vv = v.value();
    for (std::size_t i = 0; i < uv.size(); ++i)
        if (!std::isfinite(uv[i]) || !std::isfinite(vv[i]))
            throw NumericError("bilinear_sample", "non-finite coordinate");

    Field mask(out_shape.rows, out_shape.cols, 0.0);
    std::vector<double> out(out_shape.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        Stencil st{};
        if (!make_stencil(uv[i], vv[i], src, st)) continue;
        mask.data[i] = 1.0;
        const double top = (1.0 - st.fu) * fv[st.i00] + st.fu * fv[st.i01];
        const double bottom = (1.0 - st.fu) * fv[st.i10] + st.fu * fv[st.i11];
        out[i] = (1.0 - st.fv) * top + st.fv * bottom;
    }

    const int idf = f.id(), idu = u.id(), idv = v.id();
    Var value = t.record("bilinear_sample", out_shape, std::move(out),
                         [idf, idu, idv, src](Tape& tp, std::span<const double> g) {
                             const auto fv = tp.value(idf);
                             const auto uv = tp.value(idu);
                             const auto vv = tp.value(idv);
                             auto gf = tp.grad_buffer(idf);
                             auto gu = tp.grad_buffer(idu);
                             auto gv = tp.grad_buffer(idv);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (g[i] == 0.0) continue;
                                 Stencil st{};
                                 if (!make_stencil(uv[i], vv[i], src, st)) continue;
                                 const double a = 1.0 - st.fu, b = st.fu, c = 1.0 - st.fv, d = st.fv;
                                 gf[st.i00] += g[i] * a * c;
                                 gf[st.i01] += g[i] * b * c;
                                 gf[st.i10] += g[i] * a * d;
                                 gf[st.i11] += g[i] * b * d;
                                 if (src.cols >= 2)
                                     gu[i] += g[i] * (c * (fv[st.i01] - fv[st.i00]) + d * (fv[st.i11] - fv[st.i10]));
                                 if (src.rows >= 2)
                                     gv[i] += g[i] * (a * (fv[st.i10] - fv[st.i00]) + b * (fv[st.i11] - fv[st.i01]));
                             }
                         });
    return {value, std::move(mask)};
}

}  // namespace dmk::ad
