#include "failcast/mlp.hpp"

namespace failcast {

Mlp Mlp::zeros(int in, int hidden, int out) {
  Mlp m;
  m.W1 = Eigen::MatrixXd::Zero(hidden, in);
  m.b1 = Eigen::VectorXd::Zero(hidden);
  m.W2 = Eigen::MatrixXd::Zero(hidden, hidden);
  m.b2 = Eigen::VectorXd::Zero(hidden);
  m.W3 = Eigen::MatrixXd::Zero(out, hidden);
  m.b3 = Eigen::VectorXd::Zero(out);
  return m;
}

Mlp Mlp::zero_output_init(int in, int hidden, int out, std::mt19937_64& gen) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mlp m = zeros(in, hidden, out);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int i = 0; i < m.W1.size(); ++i) m.W1.data()[i] = s1 * gauss(gen);
  for (int i = 0; i < m.W2.size(); ++i) m.W2.data()[i] = s2 * gauss(gen);
  return m;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X, Cache* cache) const {
  Eigen::MatrixXd h1 = ((W1 * X).colwise() + b1).array().tanh();
  Eigen::MatrixXd h2 = ((W2 * h1).colwise() + b2).array().tanh();
  Eigen::MatrixXd y = (W3 * h2).colwise() + b3;
  if (cache) {
    cache->X = X;
    cache->H1 = std::move(h1);
    cache->H2 = std::move(h2);
    return y;
  }
  return y;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& dY, const Cache& cache, Mlp& grads) const {
  grads.W3 += dY * cache.H2.transpose();
  grads.b3 += dY.rowwise().sum();
  Eigen::MatrixXd dH2 =
      (W3.transpose() * dY).array() * (1.0 - cache.H2.array().square());
  grads.W2 += dH2 * cache.H1.transpose();
  grads.b2 += dH2.rowwise().sum();
  Eigen::MatrixXd dH1 =
      (W2.transpose() * dH2).array() * (1.0 - cache.H1.array().square());
  grads.W1 += dH1 * cache.X.transpose();
  grads.b1 += dH1.rowwise().sum();
  return W1.transpose() * dH1;
}

std::size_t Mlp::param_count() const {
  return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size() + W3.size() +
                                  b3.size());
}

}  // namespace failcast
