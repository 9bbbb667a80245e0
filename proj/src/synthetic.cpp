#include "failcast/synthetic.hpp"

#include <cmath>
#include <random>

#include "failcast/rng.hpp"

namespace failcast {

double SyntheticSpec::model_risk(const EnvPoint& z) const {
  const double dx = z[0] - model_center[0];
  const double dy = z[1] - model_center[1];
  return model_amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * model_sigma * model_sigma));
}

double SyntheticSpec::gap(const EnvPoint& z) const {
  const double sx = std::max(0.0, gap_corner[0] - z[0]);
  const double sy = std::max(0.0, gap_corner[1] - z[1]);
  return gap_amplitude * std::exp(-(sx * sx + sy * sy) / (2.0 * gap_falloff * gap_falloff));
}

double SyntheticSpec::noisy_model_risk(const EnvPoint& z, const DisturbanceLevel& d,
                                       std::uint64_t seed) const {
  if (d.is_zero()) return model_risk(z);
  const double n1 = std::log(d.sigma1 / box.sigma1_min) / std::log(box.sigma1_max / box.sigma1_min);
  const double n2 = std::log(d.sigma2 / box.sigma2_min) / std::log(box.sigma2_max / box.sigma2_min);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double amp = noise_floor + noise_gain1 * n1 + noise_gain2 * n2;
  return model_risk(z) + amp * std::abs(gauss(gen));
}

double SyntheticSpec::coverage(const EnvPoint& z) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < bounds.dim(); ++j)
    acc += (z[j] - bounds.lo[j]) / (bounds.hi[j] - bounds.lo[j]);
  return acc / static_cast<double>(bounds.dim());
}

}  // namespace failcast
