#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "failcast/mlp.hpp"
#include "failcast/types.hpp"

namespace failcast {

struct FlowConfig {
  int layers = 6;
  int hidden = 32;
  int epochs = 2000;
  double learning_rate = 1e-3;
  double scale_cap = 5.0;      // |log-scale| soft bound inside each coupling
  double early_stop_tol = 1e-8;
  int early_stop_window = 50;
  double latent_mean = 3.0;    // class means at (+/-latent_mean, 0, ..., 0)
};

// Two-class isotropic Gaussian mixture in latent space. Class 1 holds the
// risk-labeled points, class 2 the rest. Means are fixed, not learned.
struct LatentMixture {
  Eigen::VectorXd mean1, mean2;
  double variance = 1.0;

  static LatentMixture standard(int dim, double latent_mean);

  double log_density(const Eigen::VectorXd& w, int cls) const;
};

// Affine coupling flow with alternating coordinate masks and an input
// whitening layer derived from the search-space bounds. The z -> w
// direction is `inverse`, matching the classifier's latent mapping.
class CouplingFlow {
 public:
  CouplingFlow() = default;
  CouplingFlow(const Bounds& bounds, const FlowConfig& config, std::uint64_t run_seed);

  int dim() const { return dim_; }
  int layers() const { return static_cast<int>(s_nets_.size()); }
  int hidden() const { return hidden_; }
  double scale_cap() const { return scale_cap_; }

  // w -> z
  Eigen::VectorXd forward(const Eigen::VectorXd& w) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& w) const;

  // z -> w with the log |Jacobian| of the map
  std::pair<Eigen::VectorXd, double> inverse(const Eigen::VectorXd& z) const;
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> inverse(const Eigen::MatrixXd& z) const;

  const std::vector<double>& whiten_shift() const { return shift_; }
  const std::vector<double>& whiten_scale() const { return scale_; }

  std::vector<Mlp>& scale_nets() { return s_nets_; }
  std::vector<Mlp>& translate_nets() { return t_nets_; }
  const std::vector<Mlp>& scale_nets() const { return s_nets_; }
  const std::vector<Mlp>& translate_nets() const { return t_nets_; }

  // Active coordinate j in layer l iff j % 2 == l % 2.
  bool active(int layer, int coord) const { return coord % 2 == layer % 2; }

  std::string to_json() const;
  static CouplingFlow from_json(const std::string& text);

 private:
  friend struct FlowTrainer;
  int dim_ = 0;
  int hidden_ = 0;
  double scale_cap_ = 5.0;
  std::vector<double> shift_, scale_;
  std::vector<Mlp> s_nets_, t_nets_;
};

struct FlowTrainResult {
  CouplingFlow flow;
  LatentMixture mixture;
  std::vector<double> epoch_losses;  // includes the initial loss at epoch 0
  int epochs_run = 0;
};

// Class-conditional latent negative log likelihood (weighted mean), the
// training objective. Exposed for gradient checks.
double flow_nll(const CouplingFlow& flow, const LatentMixture& mixture,
                const Eigen::MatrixXd& points, const std::vector<int>& classes,
                const std::vector<double>& class_weights);

// Analytic parameter gradient of flow_nll; layout matches visit order over
// (s_net, t_net) per layer. Exposed for gradient checks.
std::vector<double> flow_nll_gradient(const CouplingFlow& flow, const LatentMixture& mixture,
                                      const Eigen::MatrixXd& points,
                                      const std::vector<int>& classes,
                                      const std::vector<double>& class_weights);

// Supervised Flow-GMM training: full-batch adaptive gradient descent on
// flow_nll with inverse-frequency class weights.
FlowTrainResult train_flow(const std::vector<EnvPoint>& points, const std::vector<int>& classes,
                           const Bounds& bounds, const FlowConfig& config, std::uint64_t run_seed);

struct Classification {
  int cls = 1;  // 1 = risk, 2 = complement
  double log_posterior1 = 0.0;
  double log_posterior2 = 0.0;
};

// argmax of the class-conditional latent likelihoods; ties go to class 1.
Classification classify(const CouplingFlow& flow, const LatentMixture& mixture, const EnvPoint& z);

void save_flow(const CouplingFlow& flow, const LatentMixture& mixture, const std::string& path);
std::pair<CouplingFlow, LatentMixture> load_flow(const std::string& path);

}  // namespace failcast
