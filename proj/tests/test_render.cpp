#include <doctest.h>

#include "render.hpp"

using namespace dmk;
using namespace dmk::render;
using doctest::Approx;

TEST_CASE("ramp endpoints and clamping") {
    const Vec3 lo = ramp(0.0), hi = ramp(1.0);
    CHECK(lo[0] < 0.05);
    CHECK(hi[0] == 1.0);
    CHECK(ramp(-3.0) == lo);
    CHECK(ramp(7.0) == hi);
    const Vec3 mid = ramp(0.5);
    CHECK(mid[0] == Approx(0.80));
    CHECK(mid[1] == Approx(0.15));
    CHECK(mid[2] == Approx(0.30));
    // Brightness grows along the ramp.
    double last = -1.0;
    for (int i = 0; i <= 20; ++i) {
        const Vec3 c = ramp(i / 20.0);
        const double lum = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
        CHECK(lum >= last);
        last = lum;
    }
}

TEST_CASE("zero motion renders black") {
    const RgbImage img = motion_image(make_field3(4, 5));
    for (const auto& c : img)
        for (double x : c.data) CHECK(x == 0.0);
}

TEST_CASE("motion magnitude is normalised grey") {
    Field3 t = make_field3(1, 3);
    t[0].data = {0.0, 3.0, 0.0};
    t[1].data = {0.0, 4.0, 0.0};
    t[2].data = {0.0, 0.0, 2.5};
    const RgbImage img = motion_image(t);
    CHECK(img[0].data == std::vector<double>{0.0, 1.0, 0.5});
    CHECK(img[1].data == img[0].data);
    CHECK(img[2].data == img[0].data);
}

TEST_CASE("constant disparity renders one colour") {
    const RgbImage img = disparity_image(Field(3, 4, 7.0));
    for (const auto& c : img)
        for (double x : c.data) CHECK(x == c.data[0]);
    CHECK(img[0].data[0] == ramp(1.0)[0]);
}

TEST_CASE("nearer surfaces render brighter") {
    const RgbImage img = disparity_image(Field(1, 2, std::vector<double>{2.0, 8.0}));
    CHECK(img[0].data[0] > img[0].data[1]);
    CHECK(img[1].data[0] > img[1].data[1]);
}
