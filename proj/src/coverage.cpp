#include "failcast/coverage.hpp"

#include <algorithm>
#include <stdexcept>

namespace failcast {

double variance_coverage(const std::vector<std::array<double, 2>>& positions) {
  if (positions.empty()) throw std::invalid_argument("variance_coverage: empty sequence");
  double mx = 0.0, my = 0.0;
  for (const auto& p : positions) {
    if (p[0] < 0.0 || p[0] > 1.0 || p[1] < 0.0 || p[1] > 1.0)
      throw std::invalid_argument("variance_coverage: positions must lie in [0,1]^2");
    mx += p[0];
    my += p[1];
  }
  const double n = static_cast<double>(positions.size());
  mx /= n;
  my /= n;
  double acc = 0.0;
  for (const auto& p : positions) {
    const double dx = p[0] - mx;
    const double dy = p[1] - my;
    acc += dx * dx + dy * dy;
  }
  return acc / n;
}

double range_coverage(const std::vector<double>& signal) {
  if (signal.empty()) throw std::invalid_argument("range_coverage: empty signal");
  const auto [lo, hi] = std::minmax_element(signal.begin(), signal.end());
  return *hi - *lo;
}

}  // namespace failcast
