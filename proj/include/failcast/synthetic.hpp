#pragma once

#include <array>
#include <cstdint>

#include "failcast/types.hpp"

namespace failcast {

// Closed-form benchmark with a known gap between its model-side and
// true-side risk surfaces. The true failure set is decidable exactly, so
// end-to-end runs can be scored against ground truth.
struct SyntheticSpec {
  Bounds bounds{{0.0, 0.0}, {10.0, 10.0}};

  // Model risk: one Gaussian bump.
  std::array<double, 2> model_center{2.5, 2.5};
  double model_sigma = 1.8;
  double model_amplitude = 2.0;

  // Injected gap: smooth plateau on {z1 >= corner1, z2 >= corner2} with
  // Gaussian falloff outside. Added to the true risk only.
  std::array<double, 2> gap_corner{5.5, 3.0};
  double gap_falloff = 0.8;
  double gap_amplitude = 1.5;

  // Disturbance response of the model side: additive half-normal kick with
  // amplitude floor + gains on log-normalized sigma levels.
  double noise_floor = 0.05;
  double noise_gain1 = 0.3;
  double noise_gain2 = 0.15;
  DisturbanceBox box{1e-4, 1.0, 1e-5, 1e-3};

  double risk_threshold = 1.0;
  double coverage_threshold = 0.5;

  double model_risk(const EnvPoint& z) const;
  double gap(const EnvPoint& z) const;
  double true_risk(const EnvPoint& z) const { return model_risk(z) + gap(z); }

  // Model risk under a disturbance level; deterministic given the seed.
  double noisy_model_risk(const EnvPoint& z, const DisturbanceLevel& d, std::uint64_t seed) const;

  // Coverage stand-in: mean of the per-axis normalized coordinates.
  double coverage(const EnvPoint& z) const;

  // Exact membership in the analytic true failure set.
  bool true_failure(const EnvPoint& z) const { return true_risk(z) > risk_threshold; }
  bool model_failure(const EnvPoint& z) const { return model_risk(z) > risk_threshold; }
};

}  // namespace failcast
