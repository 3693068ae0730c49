#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tape.hpp"

namespace dmk::ad {

struct GradCheckOptions {
    double eps = 1e-5;
    // Coordinates checked per leaf; 0 checks every coordinate.
    int samples_per_leaf = 0;
    std::uint64_t seed = 0;
    // Floor of the relative-error denominator |a-n| / max(|a|, |n|, floor).
    double denom_floor = 1e-8;
    // Skip coordinates whose one-sided difference quotients disagree, i.e.
    // points sitting on a kink (bilinear cell edge, mask flip) within eps.
    bool skip_kinks = false;
};

struct LeafError {
    std::string name;
    double max_rel_error = 0.0;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    int checked = 0;
    int skipped = 0;
};

struct GradReport {
    std::vector<LeafError> leaves;
    double max_rel_error = 0.0;
    std::string worst_leaf;
    int worst_index = -1;
};

struct NamedLeaf {
    std::string name;
    Field value;
};

// Builds the loss on a fresh tape from the given leaf handles.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

double relative_error(double analytic, double numeric, double floor);

// Compares backward() against central differences (f(x+e) - f(x-e)) / 2e.
// Throws ContractError if two evaluations at the same point disagree.
GradReport grad_check(const LossBuilder& build, const std::vector<NamedLeaf>& leaves,
                      const GradCheckOptions& options = {});

}  // namespace dmk::ad
