#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "failcast/lqr.hpp"
#include "failcast/types.hpp"

namespace failcast {

// Planar path y = width * sin(2*pi*x / wavelength), sampled along x and
// ordered by arclength. The goal is the last sample.
struct SinePath {
  double width = 0.0;
  double wavelength = 10.0;
  double total_length = 20.0;  // extent along x, meters
  double sample_spacing = 0.05;

  std::vector<double> xs, ys;      // samples
  std::vector<double> headings;    // tangent angle at each sample
  std::vector<double> curvatures;  // signed curvature at each sample
  std::array<double, 2> goal{};

  static SinePath build(double width, double wavelength = 10.0, double total_length = 20.0,
                        double sample_spacing = 0.05);

  // Nearest sample to (x, y), scanning forward from `hint` (monotone
  // progress along the path). Returns the sample index.
  std::size_t nearest(double x, double y, std::size_t hint) const;

  double distance_to(double x, double y, std::size_t idx) const;
};

struct BicycleParams {
  double wheelbase = 0.33;   // m
  double dt = 0.1;           // control period, s
  int horizon = 400;         // steps
  double steer_limit = 0.8;  // rad
  double accel_limit = 2.0;  // m/s^2
  int substeps = 5;          // physics substeps per control period

  // True-system extras (slip-augmented plant)
  double cornering_stiffness_front = 90.0;  // N/rad
  double cornering_stiffness_rear = 110.0;  // N/rad
  double mass = 3.74;                       // kg
  double yaw_inertia = 0.047;               // kg m^2
  double actuator_lag = 0.08;               // first-order steering lag constant, s

  double split_front = 0.48;  // fraction of wheelbase ahead of the CG

  void validate() const;
};

struct LqrWeights {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(5, 5);
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(2, 2);
};

// Gain for the error-state linearization
// [lateral error, its rate, heading error, its rate, speed error]
// of the kinematic bicycle at speed v_ref.
LqrResult lqr_gain(double v_ref, const BicycleParams& params, const LqrWeights& weights);

// Discrete error-state matrices the gain is designed for (exposed for tests).
void lqr_error_dynamics(double v_ref, const BicycleParams& params, Eigen::MatrixXd& A,
                        Eigen::MatrixXd& B);

// Kinematic bicycle under LQR speed+steering tracking of SinePath(w) at
// v_ref, with N(0, sigma1^2 I) added to the state after each control step
// and N(0, sigma2^2 I) added to the measurement fed to the policy.
// z = [path width, reference speed].
Rollout simulate_model(const EnvPoint& z, const DisturbanceLevel& d, std::uint64_t seed,
                       const BicycleParams& params, const LqrWeights& weights);

// Slip-augmented plant (linear tire forces, first-order steering actuator)
// driven by the same LQR policy designed for the kinematic model.
Rollout simulate_true(const EnvPoint& z, std::uint64_t seed, const BicycleParams& params,
                      const LqrWeights& weights);

// R = 20*R_mean + R_max + 10*R_final over distances to the path and goal.
double path_tracking_risk(const Rollout& rollout, const SinePath& path);

}  // namespace failcast
