#include "grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dmk::ad {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& build, const std::vector<NamedLeaf>& leaves) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const auto& l : leaves) vars.push_back(tape.leaf(l.value));
    Var loss = build(tape, vars);
    return loss.item();
}

}  // namespace

GradReport grad_check(const LossBuilder& build, const std::vector<NamedLeaf>& leaves,
                      const GradCheckOptions& options) {
    std::vector<std::vector<double>> analytic;
    double base = 0.0;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& l : leaves) vars.push_back(tape.leaf(l.value));
        Var loss = build(tape, vars);
        base = loss.item();
        Gradients g = tape.backward(loss);
        for (const auto& v : vars) {
            auto s = g.of(v);
            analytic.emplace_back(s.begin(), s.end());
        }
    }
    if (evaluate(build, leaves) != base)
        throw ContractError("grad_check: loss builder is not deterministic");

    std::mt19937_64 rng(options.seed);
    std::vector<NamedLeaf> work = leaves;
    GradReport report;
    for (std::size_t li = 0; li < work.size(); ++li) {
        LeafError le;
        le.name = work[li].name;
        const std::size_t n = work[li].value.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (options.samples_per_leaf > 0 && std::size_t(options.samples_per_leaf) < n) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(std::size_t(options.samples_per_leaf));
            std::sort(idx.begin(), idx.end());
        }

        for (std::size_t k : idx) {
            double& x = work[li].value.data[k];
            const double x0 = x;
            x = x0 + options.eps;
            const double fp = evaluate(build, work);
            x = x0 - options.eps;
            const double fm = evaluate(build, work);
            x = x0;

            if (options.skip_kinks) {
                const double fwd = (fp - base) / options.eps;
                const double bwd = (base - fm) / options.eps;
                const double scale = std::max({std::abs(fwd), std::abs(bwd), options.denom_floor});
                if (std::abs(fwd - bwd) > 1e-2 * scale) {
                    ++le.skipped;
                    continue;
                }
            }

            const double numeric = (fp - fm) / (2.0 * options.eps);
            const double a = analytic[li][k];
            const double err = relative_error(a, numeric, options.denom_floor);
            ++le.checked;
            if (err > le.max_rel_error || le.worst_index < 0) {
                le.max_rel_error = err;
                le.worst_index = int(k);
                le.analytic = a;
                le.numeric = numeric;
            }
        }

        if (le.max_rel_error > report.max_rel_error || report.worst_leaf.empty()) {
            report.max_rel_error = le.max_rel_error;
            report.worst_leaf = le.name;
            report.worst_index = le.worst_index;
        }
        report.leaves.push_back(std::move(le));
    }
    return report;
}

}  // namespace dmk::ad
