#include "circadian/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace circadian::nn {

GradCheckReport finite_difference_check(std::string name, const std::function<double()>& loss,
                                        std::span<double> values, std::span<const double> analytic,
                                        const GradCheckOptions& opt) {
  if (values.size() != analytic.size())
    throw std::invalid_argument("finite_difference_check: gradient size mismatch for " + name);
  GradCheckReport report;
  report.name = std::move(name);
  report.tolerance = opt.tolerance;
  const std::size_t n = values.size();
  const std::size_t stride = opt.max_probes == 0 || opt.max_probes >= n ? 1 : n / opt.max_probes;
  for (std::size_t i = 0; i < n; i += stride) {
    const double saved = values[i];
    values[i] = saved + opt.step;
    const double up = loss();
    values[i] = saved - opt.step;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    if (!(rel < opt.tolerance)) ++report.exceedances;
    ++report.probes;
  }
  return report;
}

}  // namespace circadian::nn
