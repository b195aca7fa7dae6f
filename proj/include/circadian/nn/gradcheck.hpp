#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

namespace circadian::nn {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::size_t exceedances = 0;
  double tolerance = 1e-4;

  bool passed() const { return exceedances == 0; }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that entries whose true
  /// gradient is zero are judged on absolute error.
  double floor = 1e-6;
  /// Probe every entry when 0, otherwise an evenly strided subset.
  std::size_t max_probes = 0;
};

/// Compares `analytic` against central differences of `loss` with respect to
/// `values`. Each probed entry is perturbed in place and restored.
/// Relative error of one entry: |a - n| / max(|a|, |n|, floor).
GradCheckReport finite_difference_check(std::string name, const std::function<double()>& loss,
                                        std::span<double> values, std::span<const double> analytic,
                                        const GradCheckOptions& opt = {});

}  // namespace circadian::nn
