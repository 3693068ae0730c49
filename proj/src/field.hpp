#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace dmk {

// Plain row-major H x W grid of doubles. Row index is v, column index is u.
struct Field {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Field() = default;
    Field(int r, int c, double fill = 0.0) : rows(r), cols(c), data(std::size_t(r) * c, fill) {
        if (r < 1 || c < 1) throw DimensionError("field dimensions must be positive");
    }
    Field(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (r < 1 || c < 1) throw DimensionError("field dimensions must be positive");
        if (data.size() != std::size_t(r) * c) throw DimensionError("field value count does not match shape");
    }

    std::size_t size() const noexcept { return data.size(); }
    double& at(int v, int u) { return data[std::size_t(v) * cols + u]; }
    double at(int v, int u) const { return data[std::size_t(v) * cols + u]; }
    bool same_shape(const Field& o) const noexcept { return rows == o.rows && cols == o.cols; }
};

// Three components (x, y, z) of a per-pixel 3-vector, or (r, g, b) of an image.
using Field3 = std::array<Field, 3>;
using RgbImage = Field3;

inline Field3 make_field3(int rows, int cols, double fill = 0.0) {
    return {Field(rows, cols, fill), Field(rows, cols, fill), Field(rows, cols, fill)};
}

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

}  // namespace dmk
