#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "failcast/flow.hpp"
#include "failcast/types.hpp"

namespace failcast {

// Coverage of the zero-noise model rollout at z.
using CoverageFn = std::function<double(const EnvPoint& z)>;

struct SamplerConfig {
  int chains = 4;
  int steps = 20000;
  int burn_in = 5000;
  int thin = 10;
  double proposal_std = 0.0;   // <= 0: tune by pilot run
  double radius = 0.0;         // <= 0: radius holding `radius_mass` of the prior
  double radius_mass = 0.95;
  int pilot_steps = 500;
};

struct PosteriorSpec {
  const CouplingFlow* flow = nullptr;
  const LatentMixture* mixture = nullptr;
  CoverageFn coverage;
  Bounds bounds;
  double coverage_threshold = 0.0;  // -inf disables the coverage/bounds terms
  Eigen::VectorXd center;           // projection center, the class-2 latent mean
  double radius = 0.0;

  // Replaces the posterior density entirely when set (chain targets the
  // override; no coverage post-filter). Used by invariance tests.
  std::function<double(const Eigen::VectorXd&)> log_density_override;

  bool coverage_disabled() const {
    return coverage_threshold == -std::numeric_limits<double>::infinity();
  }
};

struct CoverageSet {
  std::vector<EnvPoint> points;
  std::vector<double> coverage_values;
  double acceptance_rate = 0.0;
  std::uint64_t projections_applied = 0;
  std::uint64_t chain_length = 0;
  bool low_acceptance_warning = false;
  // raw post-burn-in latent samples, kept for diagnostics/moment checks
  std::vector<Eigen::VectorXd> latent_samples;
};

// Radial projection onto the ball of radius r around c; identity inside.
Eigen::VectorXd project(const Eigen::VectorXd& w, const Eigen::VectorXd& c, double r);

// log p2(w) minus the hinge coverage penalty at z = flow_forward(w);
// -inf when z leaves the search box.
double posterior_log_density(const Eigen::VectorXd& w, const PosteriorSpec& spec);

// Radius containing `mass` of an isotropic unit Gaussian in `dim` dims.
double gaussian_mass_radius(int dim, double mass);

// Random-walk Metropolis-Hastings over the latent space, proposals
// projected into the ball before evaluation. Post-filtered samples must
// pass both the coverage threshold and the class-2 test.
CoverageSet mh_chain(const PosteriorSpec& spec, const SamplerConfig& config,
                     std::uint64_t run_seed);

// k-means(N1) representatives of the coverage set, one member per centroid.
std::vector<EnvPoint> select_initial(const CoverageSet& zcov, int n1, std::uint64_t run_seed);

// One budgeted true-system rollout per selected point.
using TrueRiskFn = std::function<double(const EnvPoint& z, std::uint64_t seed)>;
std::vector<RiskSample> run_initial_demos(const TrueRiskFn& true_risk, Budget& budget,
                                          const std::vector<EnvPoint>& z1, std::uint64_t run_seed);

void write_coverage_csv(const CoverageSet& zcov, const std::string& path);
void write_points_csv(const std::vector<EnvPoint>& pts, const std::string& path);
std::vector<EnvPoint> read_points_csv(const std::string& path);

}  // namespace failcast
