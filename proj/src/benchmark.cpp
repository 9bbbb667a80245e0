#include "failcast/benchmark.hpp"

#include "failcast/coverage.hpp"

namespace failcast {

double BicycleBenchmark::coverage(const EnvPoint& z) const {
  const Rollout r = simulate_model(z, DisturbanceLevel{}, 0, params_, weights_);
  const auto it = r.aux.find("steer");
  if (it == r.aux.end() || it->second.empty()) return 0.0;
  return range_coverage(it->second);
}

}  // namespace failcast
