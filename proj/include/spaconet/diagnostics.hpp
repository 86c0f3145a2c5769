#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spaconet/grad_check.hpp"

namespace spaconet {

struct GradSuiteOptions {
  std::size_t channels = 16;
  std::size_t objects = 4;
  std::size_t classes = 4;
  std::size_t heads = 2;
  std::size_t samples = 2;  // batch size for the stage-2 loss check
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double eps = 1e-5;
  std::size_t max_per_param = 0;  // 0 probes every element

  void validate() const;
};

struct ModuleCheck {
  std::string module;
  GradCheckReport report;
  bool passed = false;
};

/// Gradient checks for every parameterized op on random inputs, then the
/// batch-mean stage-2 loss of the full model (train-mode dropout with a fixed
/// mask). A module fails when its error exceeds the tolerance or when more
/// than 5% of its probes had to be skipped at kinks.
std::vector<ModuleCheck> run_grad_suite(const GradSuiteOptions& options);

}  // namespace spaconet
