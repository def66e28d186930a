#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsgtf/tensor.hpp"

namespace dsgtf {

struct NamedParam {
    std::string name;
    Tensor* tensor = nullptr;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> tensors;
    double max_rel_err = 0.0;
    std::string worst_tensor;
    std::size_t worst_coord = 0;
    double tolerance = 0.0;

    bool pass() const { return max_rel_err < tolerance; }
};

// Central-difference check of analytic gradients. `loss_fn` evaluates the
// loss at the parameters' current values (they are perturbed in place and
// restored). Relative error per coordinate is
//   |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
// max_coords_per_tensor = 0 checks every coordinate. Throws NumericError,
// naming the coordinate, if a probe produces a non-finite loss.
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<const NamedParam> params,
                                  std::span<const Tensor> analytic_grads, double eps,
                                  double tolerance, std::size_t max_coords_per_tensor = 0);

std::string format_report(const GradCheckReport& report);

}  // namespace dsgtf
