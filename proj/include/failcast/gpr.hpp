#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "failcast/types.hpp"

namespace failcast {

// (Z, R) pairs; points are columns.
struct GpDataset {
  Eigen::MatrixXd Z;
  Eigen::VectorXd R;

  std::size_t size() const { return static_cast<std::size_t>(R.size()); }
  static GpDataset from_samples(const std::vector<RiskSample>& samples);
  void append(const EnvPoint& z, double risk);
};

// Log-space hyperparameters: [log signal variance, log lengthscale per
// axis, log noise variance].
struct GprHyper {
  Eigen::VectorXd theta;

  int dim() const { return static_cast<int>(theta.size()) - 2; }
  double signal_var() const { return std::exp(theta(0)); }
  double lengthscale(int j) const { return std::exp(theta(1 + j)); }
  double noise_var() const { return std::exp(theta(theta.size() - 1)); }

  static GprHyper make(int dim, double signal_var, double lengthscale, double noise_var);
};

struct GprConfig {
  int starts = 8;
  int iters = 500;
  double grad_tol = 1e-6;
  double learning_rate = 0.05;
  double noise_floor = 1e-8;  // variance units
  double prior_mean = 0.0;    // raw risk units; predictions revert here
};

// Anisotropic RBF marginal log likelihood; jitter escalates
// 1e-10 -> 1e-6 before giving up on a non-PD kernel matrix.
double gp_mll(const GpDataset& data, const GprHyper& hyper);
Eigen::VectorXd gp_mll_grad(const GpDataset& data, const GprHyper& hyper);

// Sum of two independent marginal log likelihoods under shared
// hyperparameters; an empty dataset contributes zero.
double joint_mll(const GpDataset& d1, const GpDataset& d2, const GprHyper& hyper);
Eigen::VectorXd joint_mll_grad(const GpDataset& d1, const GpDataset& d2, const GprHyper& hyper);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

class GprModel {
 public:
  GprModel() = default;
  // Conditions on the pooled data with the given hyperparameters.
  GprModel(GpDataset pooled, GprHyper hyper, double target_scale, double prior_mean);

  Prediction predict(const EnvPoint& z) const;
  const GprHyper& hyper() const { return hyper_; }
  const GpDataset& data() const { return data_; }
  double target_scale() const { return target_scale_; }
  double prior_mean() const { return prior_mean_; }

 private:
  GpDataset data_;
  GprHyper hyper_;
  double target_scale_ = 1.0;
  double prior_mean_ = 0.0;
  Eigen::MatrixXd chol_;    // lower factor of K + nv I
  Eigen::VectorXd alpha_;
};

struct FitResult {
  GprModel model;
  double objective = 0.0;                // joint mll at the fitted point
  std::vector<double> start_objectives;  // joint mll at each initialization
  GprHyper hyper;
};

// Multi-start adaptive gradient ascent on joint_mll in log space. Targets
// are scaled to unit variance internally; predictions undo the scaling and
// revert to the configured prior mean away from data.
FitResult fit_gpr(const GpDataset& d1, const GpDataset& d2, const GprConfig& config,
                  std::uint64_t run_seed, std::uint64_t fit_index = 0);

class EmptySafeRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grid points whose predicted mean risk is below the threshold.
std::vector<EnvPoint> safe_region(const GprModel& model, const std::vector<EnvPoint>& grid,
                                  double risk_threshold);

// Candidate set for one refinement step: the k-means centroids of the safe
// region (k shrinks to the region size when it is smaller than n2).
std::vector<EnvPoint> refine_candidates(const std::vector<EnvPoint>& region, int n2,
                                        std::uint64_t run_seed, std::uint64_t step_index);

// The candidate maximizing the minimum squared distance to all previous
// demo points. Ties break toward lexicographically smaller coordinates.
EnvPoint next_point(const std::vector<EnvPoint>& candidates,
                    const std::vector<EnvPoint>& previous);

struct GridPrediction {
  EnvPoint z;
  double mean = 0.0;
  double variance = 0.0;
  bool fail = false;
};

std::vector<GridPrediction> predict_grid(const GprModel& model, const std::vector<EnvPoint>& grid,
                                         double risk_threshold);

using TrueRiskQuery = std::function<double(const EnvPoint& z, std::uint64_t seed)>;

struct RefineStep {
  EnvPoint z;
  double risk = 0.0;
  double objective = 0.0;
};

struct RefineResult {
  FitResult final_fit;
  std::vector<RefineStep> steps;
  std::vector<std::vector<GridPrediction>> grids;  // model k=0..N2
  std::string early_stop_reason;
};

// Sequential demonstration loop: predict, cluster the safe region, query
// the max-min point on the true system, refit. Runs n2 steps.
RefineResult sequential_refine(GpDataset d1, const GpDataset& d2,
                               const std::vector<EnvPoint>& grid, double risk_threshold, int n2,
                               Budget& budget, const TrueRiskQuery& true_risk,
                               const GprConfig& config, std::uint64_t run_seed);

void save_gpr(const GprModel& model, const std::string& path);
GprModel load_gpr(const std::string& path);

}  // namespace failcast
