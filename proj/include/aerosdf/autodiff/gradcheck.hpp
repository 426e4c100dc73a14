#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aerosdf/autodiff/tape.hpp"

namespace aerosdf::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<input>[<index>]: analytic=<a> numeric=<n>"
  std::size_t retried = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Entries checked per tensor; 0 checks every entry, otherwise evenly spaced entries.
  std::size_t max_entries = 0;
  /// Entries whose error exceeds `retry_above` are re-estimated with each of
  /// these steps and keep the smallest error. Empty disables retries.
  std::vector<double> retry_epsilons;
  double retry_above = 1e-4;
};

/// Compares analytic gradients to central differences of `loss` as each entry of
/// `params` is perturbed in place. Error per entry: |a - n| / (|a| + 1e-8).
GradCheckResult compare_gradients(const std::vector<Tensor<double>*>& params, const std::vector<std::string>& names,
                                  const std::vector<Tensor<double>>& analytic, const std::function<double()>& loss,
                                  const GradCheckOptions& options = {});

using GraphFn = std::function<Var<double>(const std::vector<Var<double>>& inputs)>;

/// Builds `fn` on a fresh tape over leaves holding `inputs`, runs backward and
/// checks every input gradient.
GradCheckResult gradcheck(const GraphFn& fn, std::vector<Tensor<double>> inputs, const GradCheckOptions& options = {});

}  // namespace aerosdf::ad
