#pragma once

#include <array>
#include <vector>

namespace failcast {

// Mean squared deviation of a planar track from its centroid, deviations
// summed over both coordinates. Positions must be normalized to [0,1]^2.
double variance_coverage(const std::vector<std::array<double, 2>>& positions);

// max - min of a scalar signal.
double range_coverage(const std::vector<double>& signal);

}  // namespace failcast
