#pragma once

#include <Eigen/Dense>

namespace failcast {

struct LqrResult {
  Eigen::MatrixXd gain;      // K, u = -K x
  Eigen::MatrixXd solution;  // Riccati fixed point P
  double residual = 0.0;     // max-abs change at the last iteration
  int iterations = 0;
};

// Discrete-time Riccati recursion iterated to a fixed point
// (residual < tol, at most max_iter sweeps). Throws on non-convergence.
LqrResult solve_dlqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, double tol = 1e-9,
                     int max_iter = 1000);

}  // namespace failcast
