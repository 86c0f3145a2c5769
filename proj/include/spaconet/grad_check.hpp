#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spaconet/tensor.hpp"

namespace spaconet {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes whose +/- eps interval straddles a kink
  // The probe that set max_rel_error.
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  std::size_t checked() const;
  std::size_t skipped() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

/// |a - b| / max(|a|, |b|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Compares analytic gradients against central differences
/// (f(w + eps) - f(w - eps)) / 2eps for every element of every parameter.
///
/// `loss` evaluates the objective at the current parameter values and must be
/// deterministic. `backward` must leave dL/dw in each parameter's grad slot.
/// With `max_per_param` > 0 only an evenly strided subset of that many
/// elements is probed per parameter.
///
/// ReLU and max have kinks. A probe is skipped (and counted) when the two
/// one-sided slopes (f(w+eps) - f(w)) / eps and (f(w) - f(w-eps)) / eps
/// disagree by more than `kink_tolerance` relative to their size: the central
/// difference is then meaningless. A wrong analytic gradient does not produce
/// such asymmetry, so skipping cannot mask one.
///
/// Rounding puts a floor of roughly 1e-16 |f| / eps under every central
/// difference, so an element whose true gradient is many orders below the
/// rest of its tensor cannot be resolved relatively. The relative-error
/// denominator is therefore floored at max(1e-8, scale_floor * max |analytic|)
/// over the tensor: such elements are held to an absolute bound instead.
GradCheckReport grad_check(const std::function<double()>& loss, const std::function<void()>& backward,
                           std::span<const NamedParameter> params, double eps = 1e-5,
                           std::size_t max_per_param = 0, double kink_tolerance = 1e-3, double scale_floor = 1e-3);

}  // namespace spaconet
