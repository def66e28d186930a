#include "dsgtf/gradcheck.hpp"

#include <cmath>
#include <cstdio>

namespace dsgtf {

GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<const NamedParam> params,
                                  std::span<const Tensor> analytic_grads, double eps,
                                  double tolerance, std::size_t max_coords_per_tensor) {
    if (params.size() != analytic_grads.size())
        throw ShapeError("finite_diff_check: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(analytic_grads.size()) + " gradients");

    GradCheckReport report;
    report.tolerance = tolerance;

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi].tensor;
        const Tensor& g = analytic_grads[pi];
        ensure_same_shape(p, g, "finite_diff_check");

        GradCheckEntry entry;
        entry.name = params[pi].name;
        const std::size_t count = max_coords_per_tensor == 0
                                      ? p.size()
                                      : std::min(p.size(), max_coords_per_tensor);
        // Evenly strided coordinate sample when not checking everything.
        const std::size_t stride = count == 0 ? 1 : std::max<std::size_t>(1, p.size() / count);

        for (std::size_t c = 0, idx = 0; c < count; ++c, idx += stride) {
            const double saved = p[idx];
            p[idx] = saved + eps;
            const double up = loss_fn();
            p[idx] = saved - eps;
            const double down = loss_fn();
            p[idx] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("finite_diff_check: non-finite loss probing " + entry.name + "[" +
                                   std::to_string(idx) + "]");

            const double fd = (up - down) / (2.0 * eps);
            const double ad = g[idx];
            const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
            entry.coords_checked += 1;
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_tensor = entry.name;
                report.worst_coord = idx;
            }
        }
        report.tensors.push_back(std::move(entry));
    }
    return report;
}

std::string format_report(const GradCheckReport& report) {
    char line[256];
    std::string out;
    for (const GradCheckEntry& e : report.tensors) {
        std::snprintf(line, sizeof line, "%-40s coords=%zu max_rel_err=%.3e\n", e.name.c_str(),
                      e.coords_checked, e.max_rel_err);
        out += line;
    }
    std::snprintf(line, sizeof line, "max relative error %.3e (%s[%zu]), tolerance %.1e: %s\n",
                  report.max_rel_err, report.worst_tensor.c_str(), report.worst_coord,
                  report.tolerance, report.pass() ? "pass" : "FAIL");
    out += line;
    return out;
}

}  // namespace dsgtf
