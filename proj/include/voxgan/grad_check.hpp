#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxgan/rng.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::int64_t checked = 0;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passes(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// Central finite-difference check of d(f)/d(point) against reverse-mode
// gradients, in 64-bit. `f` must rebuild the scalar loss from the current
// contents of `point` on every call. When `coords` is non-null only those
// flat indices are probed (full networks are too wide to probe exhaustively
// in test budgets); the analytic gradient always comes from one full
// backward pass.
//
// The per-coordinate relative error divides by max(|analytic|, |numeric|,
// 1e-4); the floor keeps finite-difference round-off on near-zero
// coordinates from registering as large relative errors while still flagging
// any wrong gradient of meaningful magnitude.
template <typename F>
GradCheckReport grad_check(F&& f, Tensor<double>& point, double h = 1e-5,
                           const std::vector<std::int64_t>* coords = nullptr) {
    point.set_requires_grad(true);
    point.zero_grad();
    Tensor<double> loss = f();
    loss.backward();
    std::vector<double> analytic = point.grad();

    GradCheckReport report;
    double* xv = point.data();
    auto probe = [&](std::int64_t i) {
        NoGradGuard off;
        double orig = xv[i];
        xv[i] = orig + h;
        double fp = f().item();
        xv[i] = orig - h;
        double fm = f().item();
        xv[i] = orig;
        double numeric = (fp - fm) / (2.0 * h);
        double a = analytic[static_cast<std::size_t>(i)];
        double abs_err = std::fabs(a - numeric);
        double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
        double rel_err = abs_err / denom;
        if (abs_err > report.max_abs_err) report.max_abs_err = abs_err;
        if (rel_err > report.max_rel_err) {
            report.max_rel_err = rel_err;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
        ++report.checked;
    };

    if (coords) {
        for (std::int64_t i : *coords) probe(i);
    } else {
        for (std::int64_t i = 0; i < point.numel(); ++i) probe(i);
    }
    return report;
}

// Deterministic sample of distinct flat indices, used to probe a few
// coordinates of large tensors.
inline std::vector<std::int64_t> sample_coords(std::int64_t numel, std::int64_t n,
                                               RngStream& rng) {
    if (n >= numel) {
        std::vector<std::int64_t> all(static_cast<std::size_t>(numel));
        for (std::int64_t i = 0; i < numel; ++i) all[static_cast<std::size_t>(i)] = i;
        return all;
    }
    std::vector<std::int64_t> picked;
    picked.reserve(static_cast<std::size_t>(n));
    while (static_cast<std::int64_t>(picked.size()) < n) {
        std::int64_t c = rng.uniform_int(0, numel - 1);
        bool dup = false;
        for (std::int64_t p : picked)
            if (p == c) { dup = true; break; }
        if (!dup) picked.push_back(c);
    }
    return picked;
}

}  // namespace voxgan
