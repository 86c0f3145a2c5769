#include "spaconet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace spaconet {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::size_t GradCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.checked;
  return n;
}

std::size_t GradCheckReport::skipped() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.skipped;
  return n;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double()>& loss, const std::function<void()>& backward,
                           std::span<const NamedParameter> params, double eps, std::size_t max_per_param,
                           double kink_tolerance, double scale_floor) {
  const double base = loss();
  if (!std::isfinite(base)) fail(ErrorKind::numeric, "grad_check: loss is not finite at the base point");
  backward();

  GradCheckReport report;
  for (const auto& [name, param] : params) {
    // Snapshot the analytic gradient; loss() calls may clobber grad slots.
    const Tensor analytic = param->grad;
    GradCheckEntry entry{name};
    double largest = 0.0;
    for (double g : analytic.values()) largest = std::max(largest, std::abs(g));
    const double floor = std::max(1e-8, scale_floor * largest);
    const std::size_t n = param->value.size();
    const std::size_t stride = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      double& w = param->value[i];
      const double saved = w;
      w = saved + eps;
      const double up = loss();
      w = saved - eps;
      const double down = loss();
      w = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        fail(ErrorKind::numeric, "grad_check: non-finite loss while perturbing " + name + "[" +
                                     std::to_string(i) + "]");
      }
      const double right = (up - base) / eps, left = (base - down) / eps;
      if (std::abs(right - left) > kink_tolerance * std::max({std::abs(right), std::abs(left), 1e-6})) {
        ++entry.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[i], numeric, floor);
      if (err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.worst_analytic = analytic[i];
        entry.worst_numeric = numeric;
      }
      ++entry.checked;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace spaconet
