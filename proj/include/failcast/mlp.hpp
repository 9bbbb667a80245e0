#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace failcast {

// Dense net: two tanh hidden layers, linear output. Batched columns.
struct Mlp {
  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;

  struct Cache {
    Eigen::MatrixXd X, H1, H2;
  };

  static Mlp zeros(int in, int hidden, int out);

  // Random hidden layers, zero output layer, so the net starts as the
  // constant-zero function.
  static Mlp zero_output_init(int in, int hidden, int out, std::mt19937_64& gen);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Cache* cache = nullptr) const;

  // Accumulates parameter gradients into `grads`; returns gradient w.r.t. X.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dY, const Cache& cache, Mlp& grads) const;

  std::size_t param_count() const;

  template <typename F>
  void visit(F&& f) {
    f(W1);
    f(b1);
    f(W2);
    f(b2);
    f(W3);
    f(b3);
  }
  template <typename F>
  void visit(F&& f) const {
    f(W1);
    f(b1);
    f(W2);
    f(b2);
    f(W3);
    f(b3);
  }
};

}  // namespace failcast
