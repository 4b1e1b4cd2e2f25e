#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lingo/optim.hpp"

namespace lingo {

// Central finite-difference gradient verification, 64-bit only. The loss
// callable takes with_grad: when true it must also accumulate analytic
// gradients into the checked parameters (grads are zeroed here first).
struct FiniteDiffReport {
    struct PerParam {
        std::string name;
        double max_rel_error = 0.0;
        std::size_t entries = 0;
        std::size_t over_soft = 0;
    };
    std::vector<PerParam> params;
    double max_rel_error = 0.0;
    std::size_t total_entries = 0;
    std::size_t over_soft_total = 0;

    double fraction_within_soft() const {
        if (total_entries == 0) return 1.0;
        return 1.0 - static_cast<double>(over_soft_total) / static_cast<double>(total_entries);
    }
};

// rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); the floor
// keeps finite-difference roundoff on near-zero gradients from registering as
// large relative errors.
template <typename F>
FiniteDiffReport finite_diff_check(const std::vector<ParamTensor<double>*>& params, F&& loss_fn,
                                   double h = 1e-5, double soft_tol = 1e-4) {
    for (ParamTensor<double>* p : params) p->zero_grad();
    (void)loss_fn(/*with_grad=*/true);
    std::vector<Matrix<double>> analytic;
    analytic.reserve(params.size());
    for (ParamTensor<double>* p : params) analytic.push_back(p->grad);

    FiniteDiffReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamTensor<double>* p = params[pi];
        FiniteDiffReport::PerParam stat;
        stat.name = p->name;
        stat.entries = p->value.data.size();
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double original = p->value.data[i];
            p->value.data[i] = original + h;
            const double plus = loss_fn(/*with_grad=*/false);
            p->value.data[i] = original - h;
            const double minus = loss_fn(/*with_grad=*/false);
            p->value.data[i] = original;
            const double numeric = (plus - minus) / (2.0 * h);
            const double a = analytic[pi].data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            const double rel = std::abs(a - numeric) / denom;
            stat.max_rel_error = std::max(stat.max_rel_error, rel);
            if (rel >= soft_tol) ++stat.over_soft;
        }
        report.max_rel_error = std::max(report.max_rel_error, stat.max_rel_error);
        report.total_entries += stat.entries;
        report.over_soft_total += stat.over_soft;
        report.params.push_back(std::move(stat));
    }
    return report;
}

}  // namespace lingo
