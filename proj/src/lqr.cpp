#include "failcast/lqr.hpp"

#include <stdexcept>
#include <string>

namespace failcast {

LqrResult solve_dlqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, double tol,
                     int max_iter) {
  Eigen::MatrixXd P = Q;
  double residual = 0.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    Eigen::MatrixXd BtP = B.transpose() * P;
    Eigen::MatrixXd S = R + BtP * B;
    Eigen::MatrixXd Pn =
        Q + A.transpose() * P * A - A.transpose() * P * B * S.ldlt().solve(BtP * A);
    residual = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (residual < tol) break;
  }
  if (residual >= tol)
    throw std::runtime_error("solve_dlqr: Riccati recursion did not converge, residual=" +
                             std::to_string(residual));
  Eigen::MatrixXd S = R + B.transpose() * P * B;
  LqrResult out;
  out.gain = S.ldlt().solve(B.transpose() * P * A);
  out.solution = P;
  out.residual = residual;
  out.iterations = it + 1;
  return out;
}

}  // namespace failcast
