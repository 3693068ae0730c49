#include "render.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace dmk::render {

namespace {

constexpr Vec3 kStops[] = {
    {0.02, 0.01, 0.06}, {0.35, 0.07, 0.50}, {0.80, 0.15, 0.30}, {0.98, 0.55, 0.10}, {1.00, 0.97, 0.70}};

}  // namespace

Vec3 ramp(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    const double x = t * 4.0;
    const int i = std::min(int(x), 3);
    const double w = x - i;
    Vec3 c{};
    for (std::size_t k = 0; k < 3; ++k) c[k] = (1.0 - w) * kStops[i][k] + w * kStops[i + 1][k];
    return c;
}

RgbImage disparity_image(const Field& depth) {
    double hi = 0.0;
    for (double d : depth.data) {
        if (!(d > 0.0)) throw ContractError("disparity_image: depth must be positive");
        hi = std::max(hi, 1.0 / d);
    }
    RgbImage out = make_field3(depth.rows, depth.cols);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const Vec3 c = ramp((1.0 / depth.data[i]) / hi);
        for (std::size_t k = 0; k < 3; ++k) out[k].data[i] = c[k];
    }
    return out;
}

RgbImage motion_image(const Field3& t) {
    Field mag(t[0].rows, t[0].cols, 0.0);
    double hi = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        mag.data[i] = std::sqrt(t[0].data[i] * t[0].data[i] + t[1].data[i] * t[1].data[i] + t[2].data[i] * t[2].data[i]);
        hi = std::max(hi, mag.data[i]);
    }
    if (hi > 0.0)
        for (double& m : mag.data) m /= hi;
    return {mag, mag, mag};
}

}  // namespace dmk::render
