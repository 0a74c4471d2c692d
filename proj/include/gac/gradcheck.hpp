#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "gac/tensor.hpp"

namespace gac {

struct GradCheckReport {
    double max_rel_dev = 0.0;
    size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;

    bool ok(double rtol) const { return max_rel_dev <= rtol; }
};

// Compares the analytic gradient of a scalar-valued function against central
// finite differences, coordinate by coordinate. The relative deviation uses a
// floor of eps in the denominator so that near-zero gradient pairs are judged
// on an absolute scale.
//
// `f` must be deterministic and rebuild its graph on every call.
template <typename F>
GradCheckReport grad_check(F&& f, Tensor& x, double eps = 1e-4, double rtol = 1e-3) {
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor loss = f(x);
    if (loss.numel() != 1) {
        throw std::invalid_argument("grad_check: f must return a scalar, got shape " +
                                    shape_to_string(loss.shape()));
    }
    if (!std::isfinite(loss.item())) {
        throw std::runtime_error("grad_check: non-finite loss value");
    }
    backward(loss);
    std::vector<double> analytic = x.has_grad() ? x.grad() : std::vector<double>(x.numel(), 0.0);

    GradCheckReport report;
    auto& xv = x.data();
    for (size_t i = 0; i < xv.size(); ++i) {
        const double saved = xv[i];
        double fp, fm;
        {
            NoGradGuard ng;
            xv[i] = saved + eps;
            fp = f(x).item();
            xv[i] = saved - eps;
            fm = f(x).item();
            xv[i] = saved;
        }
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("grad_check: non-finite value at coordinate " +
                                     std::to_string(i));
        }
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), eps});
        const double dev = std::fabs(analytic[i] - numeric) / denom;
        if (dev > report.max_rel_dev) {
            report.max_rel_dev = dev;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    return report;
}

}  // namespace gac
