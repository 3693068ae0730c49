#pragma once

// Reverse-mode differentiation over dense H x W fields.
//
// Every node on a Tape is a whole field (or a 1x1 scalar); primitives are
// vectorised over pixels and record one closure each for the backward pass.
// Nodes are appended in evaluation order, so the record is topologically
// sorted by construction and backward() is a single reverse sweep.

#include <array>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "field.hpp"

namespace dmk::ad {

// Smooth absolute value: sqrt(x^2 + kEpsAbs^2).
inline constexpr double kEpsAbs = 1e-6;
// Denominator guard for div.
inline constexpr double kEpsDenom = 1e-12;

struct Shape {
    int rows = 1;
    int cols = 1;

    std::size_t size() const noexcept { return std::size_t(rows) * cols; }
    bool scalar() const noexcept { return rows == 1 && cols == 1; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

class Tape;

// Lightweight handle to a node on a Tape. Copying a Var never copies data.
class Var {
public:
    Var() = default;

    bool valid() const noexcept { return tape_ != nullptr; }
    Tape* tape() const noexcept { return tape_; }
    int id() const noexcept { return id_; }
    Shape shape() const;
    std::span<const double> value() const;
    // Value of a 1x1 node.
    double item() const;
    // Copy of the node value as a plain field.
    Field to_field() const;

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

using VarField3 = std::array<Var, 3>;

// Gradient buffers produced by one backward pass, one per leaf.
class Gradients {
public:
    std::span<const double> of(const Var& leaf) const;
    Field field_of(const Var& leaf) const;

private:
    friend class Tape;
    std::vector<std::vector<double>> by_node_;
    std::vector<Shape> shapes_;
};

class Tape {
public:
    // Called during backward with the accumulated output gradient.
    using Backward = std::function<void(Tape&, std::span<const double>)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Trainable inputs. Gradients are reported for leaves only.
    Var leaf(const Field& f);
    Var leaf(Shape s, std::vector<double> values);
    Var leaf(double v);

    // Inputs that never receive gradients.
    Var constant(const Field& f);
    Var constant(Shape s, double fill);
    Var constant(Shape s, std::vector<double> values);
    Var constant(double v);

    // Pixel coordinate grids: u = column index, v = row index.
    Var grid_u(Shape s);
    Var grid_v(Shape s);

    // Appends a primitive. `value` must already be computed; it is checked
    // for finiteness and a NumericError naming `op` is raised otherwise.
    Var record(const char* op, Shape s, std::vector<double> value, Backward backward);

    Gradients backward(const Var& loss);

    // Accumulates into the gradient buffer of node `id`; valid only inside a
    // Backward callback.
    std::span<double> grad_buffer(int id);

    std::span<const double> value(int id) const { return nodes_[std::size_t(id)].value; }
    Shape shape(int id) const { return nodes_[std::size_t(id)].shape; }
    const char* op(int id) const { return nodes_[std::size_t(id)].op; }
    std::size_t size() const noexcept { return nodes_.size(); }
    void clear();

private:
    struct Node {
        const char* op;
        Shape shape;
        std::vector<double> value;
        Backward backward;
        bool leaf;
    };

    Var push(const char* op, Shape s, std::vector<double> value, Backward backward, bool leaf);

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

// ---------------------------------------------------------------------------
// Elementwise primitives. Binary ops accept equal shapes or one 1x1 operand.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a / b with |b| floored at kEpsDenom (sign preserved).
Var div(Var a, Var b);
Var min(Var a, Var b);
Var max(Var a, Var b);

Var add(Var a, double b);
Var sub(Var a, double b);
Var sub(double a, Var b);
Var mul(Var a, double b);
Var div(Var a, double b);
Var div(double a, Var b);
Var min(Var a, double b);
Var max(Var a, double b);

Var neg(Var a);
// sqrt(max(x, 0)); zero gradient where the argument is clamped.
Var sqrt(Var a);
Var abs_smooth(Var a, double eps = kEpsAbs);
// Exact |x| with subgradient 0 at 0.
Var abs(Var a);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var cos(Var a);
// log(1 + e^x), evaluated stably.
Var softplus(Var a);
Var clamp(Var a, double lo, double hi);
// Copy of the value with no gradient path.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator+(Var a, double b) { return add(a, b); }
inline Var operator+(double a, Var b) { return add(b, a); }
inline Var operator-(Var a, double b) { return sub(a, b); }
inline Var operator-(double a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double b) { return mul(a, b); }
inline Var operator*(double a, Var b) { return mul(b, a); }
inline Var operator/(Var a, double b) { return div(a, b); }
inline Var operator/(double a, Var b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Reductions and spatial operators.

Var mean(Var f);
Var sum(Var f);
// Element `index` of a node, as a scalar.
Var pick(Var f, int index);

enum class Axis { u, v };

// Forward difference f[i+1] - f[i] along the axis; the last column (u) or
// row (v) is zero so the output keeps the input shape.
Var spatial_diff(Var f, Axis axis);

// Mean over the 3x3 neighbourhood, restricted to in-image neighbours.
Var box_filter3(Var f);

struct Sampled {
    Var value;
    // 1 where (u, v) lies inside [0, W-1] x [0, H-1], else 0.
    Field mask;
};

// Bilinear interpolation of `f` at column coordinates `u` and row
// coordinates `v` (both shaped like the output). Out-of-image samples read 0
// and carry no gradient. Gradients flow to f, u and v.
Sampled bilinear_sample(Var f, Var u, Var v);

}  // namespace dmk::ad
