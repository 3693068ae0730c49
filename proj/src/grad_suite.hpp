#pragma once

// Named finite-difference checks over random inputs for each objective term.

#include <cstdint>
#include <string>
#include <vector>

#include "grad_check.hpp"

namespace dmk::loss {

// group_smooth, sparsity, depth_smooth, cycle, photometric, pair_total.
const std::vector<std::string>& grad_suite_names();

// Tolerance the named check is held to: 5e-3 when the loss samples through a
// bilinear warp, 1e-3 otherwise.
double grad_suite_tolerance(const std::string& name);

// Draws random leaves of the given resolution from `seed` and compares the
// analytic gradient of the named loss against central differences.
// Unknown names raise InputError.
ad::GradReport grad_suite_check(const std::string& name, int rows, int cols, std::uint64_t seed);

}  // namespace dmk::loss
