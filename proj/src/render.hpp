#pragma once

#include "field.hpp"

namespace dmk::render {

// Colour ramp on [0, 1] through five stops: near-black (0.00), purple (0.25),
// red (0.50), orange (0.75), pale yellow (1.00), linear in between. Inputs
// outside [0, 1] are clamped.
Vec3 ramp(double t);

// Disparity 1/D normalised by its maximum, mapped through ramp().
RgbImage disparity_image(const Field& depth);

// Per-pixel ||T|| normalised by its maximum as grey levels; zero is black and
// an all-zero field renders black.
RgbImage motion_image(const Field3& t);

}  // namespace dmk::render
