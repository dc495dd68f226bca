#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "txlr/numerics/parameter.hpp"
#include "txlr/numerics/rng.hpp"

namespace txlr {

struct GradCheckOptions {
    double epsilon = 1e-3;
    double tolerance = 1e-3;
    // Entries per parameter to probe; 0 probes every entry. The largest
    // analytic-gradient entries are always included, the rest are random.
    std::size_t max_entries = 0;
    std::size_t top_entries = 4;
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-8;
    // An entry that fails at `epsilon` is probed again with steps shrunk by
    // 10x, up to this many times; a ReLU kink inside the step shows up as a
    // mismatch that vanishes at smaller steps, a wrong gradient does not.
    std::size_t refine_steps = 0;
    std::uint64_t seed = 0;
};

struct ParamCheck {
    std::string name;
    std::size_t entries_checked = 0;
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
    std::size_t refined = 0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    double max_rel_error = 0.0;
    bool pass = false;
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences. `f` must be deterministic (dropout off).
template <typename T>
GradCheckReport grad_check(const std::function<Var<T>()>& f, ParameterSet<T>& params,
                           const GradCheckOptions& opts = {}) {
    params.zero_grad();
    Var<T> loss = f();
    if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("grad_check: non-finite loss");
    backward(loss);

    Rng rng("grad_check", opts.seed);
    GradCheckReport report;
    for (auto& p : params.all()) {
        if (!p.trainable) continue;
        const Tensor<T> analytic = p.var.grad();
        if (!analytic.all_finite()) throw NumericError("grad_check: non-finite gradient in parameter '" + p.name + "'");
        const std::size_t n = analytic.size();

        std::vector<std::size_t> entries(n);
        std::iota(entries.begin(), entries.end(), std::size_t{0});
        if (opts.max_entries != 0 && opts.max_entries < n) {
            std::vector<std::size_t> by_mag = entries;
            const std::size_t top = std::min(opts.top_entries, opts.max_entries);
            std::partial_sort(by_mag.begin(), by_mag.begin() + static_cast<std::ptrdiff_t>(top), by_mag.end(),
                              [&](std::size_t a, std::size_t b) {
                                  return std::abs(analytic[a]) > std::abs(analytic[b]);
                              });
            std::vector<std::size_t> chosen(by_mag.begin(), by_mag.begin() + static_cast<std::ptrdiff_t>(top));
            std::shuffle(entries.begin(), entries.end(), rng.engine());
            for (std::size_t e : entries) {
                if (chosen.size() >= opts.max_entries) break;
                if (std::find(chosen.begin(), chosen.end(), e) == chosen.end()) chosen.push_back(e);
            }
            entries = std::move(chosen);
        }

        ParamCheck check{p.name, entries.size(), 0.0, 0.0, 0};
        auto& values = p.var.mutable_value();
        auto rel_error = [&](std::size_t e, double eps) {
            const T saved = values[e];
            values[e] = saved + static_cast<T>(eps);
            const double plus = static_cast<double>(f().item());
            values[e] = saved - static_cast<T>(eps);
            const double minus = static_cast<double>(f().item());
            values[e] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                throw NumericError("grad_check: non-finite loss while perturbing parameter '" + p.name + "'");
            }
            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = static_cast<double>(analytic[e]);
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
            return std::abs(a - numeric) / denom;
        };
        for (std::size_t e : entries) {
            double err = rel_error(e, opts.epsilon);
            double eps = opts.epsilon;
            for (std::size_t k = 0; k < opts.refine_steps && err > opts.tolerance; ++k) {
                eps /= 10.0;
                err = std::min(err, rel_error(e, eps));
                if (k == 0) ++check.refined;
            }
            check.max_rel_error = std::max(check.max_rel_error, err);
            check.max_abs_grad = std::max(check.max_abs_grad, std::abs(static_cast<double>(analytic[e])));
        }
        report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
        report.params.push_back(std::move(check));
    }
    report.pass = report.max_rel_error <= opts.tolerance;
    params.zero_grad();
    return report;
}

}  // namespace txlr
