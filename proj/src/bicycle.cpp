#include "failcast/bicycle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace failcast {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

double clamp(double v, double lim) { return std::max(-lim, std::min(lim, v)); }

bool finite_state(const std::vector<double>& s) {
  for (double v : s)
    if (!std::isfinite(v)) return false;
  return std::abs(s[0]) < 1e6 && std::abs(s[1]) < 1e6;
}

}  // namespace

void BicycleParams::validate() const {
  if (wheelbase <= 0 || dt <= 0 || horizon <= 0 || steer_limit <= 0 || accel_limit <= 0 ||
      substeps <= 0 || cornering_stiffness_front <= 0 || cornering_stiffness_rear <= 0 ||
      mass <= 0 || yaw_inertia <= 0 || actuator_lag <= 0 || split_front <= 0 ||
      split_front >= 1)
    throw std::invalid_argument("BicycleParams: all physical parameters must be positive");
}

SinePath SinePath::build(double width, double wavelength, double total_length,
                         double sample_spacing) {
  if (wavelength <= 0 || total_length <= 0 || sample_spacing <= 0)
    throw std::invalid_argument("SinePath: wavelength/length/spacing must be positive");
  SinePath p;
  p.width = width;
  p.wavelength = wavelength;
  p.total_length = total_length;
  p.sample_spacing = sample_spacing;
  const double k = 2.0 * kPi / wavelength;
  const int n = static_cast<int>(std::floor(total_length / sample_spacing)) + 1;
  p.xs.reserve(n);
  p.ys.reserve(n);
  p.headings.reserve(n);
  p.curvatures.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = std::min(i * sample_spacing, total_length);
    const double y = width * std::sin(k * x);
    const double dy = width * k * std::cos(k * x);
    const double ddy = -width * k * k * std::sin(k * x);
    p.xs.push_back(x);
    p.ys.push_back(y);
    p.headings.push_back(std::atan2(dy, 1.0));
    p.curvatures.push_back(ddy / std::pow(1.0 + dy * dy, 1.5));
  }
  p.goal = {p.xs.back(), p.ys.back()};
  return p;
}

std::size_t SinePath::nearest(double x, double y, std::size_t hint) const {
  const std::size_t n = xs.size();
  const std::size_t lo = hint > 8 ? hint - 8 : 0;
  const std::size_t hi = std::min(n, hint + 80);
  std::size_t best = lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = lo; i < hi; ++i) {
    const double dx = x - xs[i];
    const double dy = y - ys[i];
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

double SinePath::distance_to(double x, double y, std::size_t idx) const {
  return std::hypot(x - xs[idx], y - ys[idx]);
}

void lqr_error_dynamics(double v_ref, const BicycleParams& params, Eigen::MatrixXd& A,
                        Eigen::MatrixXd& B) {
  A = Eigen::MatrixXd::Zero(5, 5);
  A(0, 0) = 1.0;
  A(0, 1) = params.dt;
  A(1, 2) = v_ref;
  A(2, 2) = 1.0;
  A(2, 3) = params.dt;
  A(4, 4) = 1.0;
  B = Eigen::MatrixXd::Zero(5, 2);
  B(3, 0) = v_ref / params.wheelbase;
  B(4, 1) = params.dt;
}

LqrResult lqr_gain(double v_ref, const BicycleParams& params, const LqrWeights& weights) {
  if (!(v_ref > 0)) throw std::invalid_argument("lqr_gain: v_ref must be positive");
  params.validate();
  Eigen::MatrixXd A, B;
  lqr_error_dynamics(v_ref, params, A, B);
  return solve_dlqr(A, B, weights.Q, weights.R);
}

namespace {

// Shared closed-loop driver. The plant is a callable advancing the physical
// state over one control period given (state, steer_cmd, accel_cmd).
template <typename PlantStep, typename Measure>
Rollout run_closed_loop(const EnvPoint& z, const DisturbanceLevel& d, std::uint64_t seed,
                        const BicycleParams& params, const LqrWeights& weights,
                        std::vector<double> state, PlantStep plant_step, Measure measure,
                        RolloutSource source) {
  const double width = z[0];
  const double v_ref = z[1];
  const SinePath path = SinePath::build(width);
  const Eigen::MatrixXd K = lqr_gain(v_ref, params, weights).gain;

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Rollout out;
  out.disturbance = d;
  out.seed = seed;
  out.source = source;
  out.states.push_back(state);
  out.aux["steer"] = {};
  out.aux["accel"] = {};

  std::size_t track_idx = 0;
  double prev_e = 0.0, prev_th_e = 0.0;
  const std::size_t last = path.xs.size() - 1;

  for (int t = 0; t < params.horizon; ++t) {
    // measurement fed to the policy
    std::vector<double> y = measure(state);
    if (d.sigma2 > 0.0) {
      for (double& v : y) v += d.sigma2 * gauss(gen);
    }

    track_idx = path.nearest(y[0], y[1], track_idx);
    const double th_p = path.headings[track_idx];
    const double e = -(y[0] - path.xs[track_idx]) * std::sin(th_p) +
                     (y[1] - path.ys[track_idx]) * std::cos(th_p);
    const double th_e = wrap_angle(y[2] - th_p);

    Eigen::VectorXd err(5);
    err << e, (e - prev_e) / params.dt, th_e, (th_e - prev_th_e) / params.dt, y[3] - v_ref;
    prev_e = e;
    prev_th_e = th_e;

    const Eigen::VectorXd u_star = -K * err;
    const double ff = std::atan2(params.wheelbase * path.curvatures[track_idx], 1.0);
    const double steer = clamp(ff + wrap_angle(u_star(0)), params.steer_limit);
    const double accel = clamp(u_star(1), params.accel_limit);

    std::vector<double> next = plant_step(state, steer, accel);
    if (d.sigma1 > 0.0) {
      for (double& v : next) v += d.sigma1 * gauss(gen);
    }
    if (!finite_state(next)) {
      out.diverged = true;
      break;
    }

    out.inputs.push_back({steer, accel});
    out.aux["steer"].push_back(steer);
    out.aux["accel"].push_back(accel);
    out.states.push_back(next);
    state = std::move(next);

    // stop once the end of the path is reached
    const double gx = state[0] - path.goal[0];
    const double gy = state[1] - path.goal[1];
    if (track_idx == last) {
      const double along = gx * std::cos(path.headings[last]) + gy * std::sin(path.headings[last]);
      if (along >= 0.0 || std::hypot(gx, gy) < 0.3) break;
    }
  }
  return out;
}

}  // namespace

Rollout simulate_model(const EnvPoint& z, const DisturbanceLevel& d, std::uint64_t seed,
                       const BicycleParams& params, const LqrWeights& weights) {
  params.validate();
  const SinePath path = SinePath::build(z[0]);
  std::vector<double> x0 = {path.xs[0], path.ys[0], path.headings[0], z[1]};

  const double h = params.dt / params.substeps;
  const double lr = (1.0 - params.split_front) * params.wheelbase;
  // kinematic bicycle referenced at the CG, with body sideslip
  auto deriv = [&, lr](const std::vector<double>& s, double steer, double accel) {
    const double beta = std::atan(lr / params.wheelbase * std::tan(steer));
    return std::vector<double>{s[3] * std::cos(s[2] + beta), s[3] * std::sin(s[2] + beta),
                               s[3] * std::cos(beta) * std::tan(steer) / params.wheelbase,
                               accel};
  };
  auto plant = [&, h](const std::vector<double>& s, double steer, double accel) {
    std::vector<double> cur = s;
    for (int k = 0; k < params.substeps; ++k) {
      // RK4
      auto k1 = deriv(cur, steer, accel);
      std::vector<double> tmp(4);
      for (int j = 0; j < 4; ++j) tmp[j] = cur[j] + 0.5 * h * k1[j];
      auto k2 = deriv(tmp, steer, accel);
      for (int j = 0; j < 4; ++j) tmp[j] = cur[j] + 0.5 * h * k2[j];
      auto k3 = deriv(tmp, steer, accel);
      for (int j = 0; j < 4; ++j) tmp[j] = cur[j] + h * k3[j];
      auto k4 = deriv(tmp, steer, accel);
      for (int j = 0; j < 4; ++j)
        cur[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    return cur;
  };
  auto measure = [](const std::vector<double>& s) { return s; };
  return run_closed_loop(z, d, seed, params, weights, std::move(x0), plant, measure,
                         RolloutSource::Model);
}

Rollout simulate_true(const EnvPoint& z, std::uint64_t seed, const BicycleParams& params,
                      const LqrWeights& weights) {
  params.validate();
  const SinePath path = SinePath::build(z[0]);
  const double lf = params.split_front * params.wheelbase;
  const double lr = params.wheelbase - lf;
  const double v0 = z[1];
  // steady-turn initial internals at the path start
  std::vector<double> x0 = {path.xs[0],
                            path.ys[0],
                            path.headings[0],
                            v0,
                            0.0,
                            v0 * path.curvatures[0],
                            std::atan(params.wheelbase * path.curvatures[0])};

  const double h = params.dt / (4 * params.substeps);
  auto deriv = [&](const std::vector<double>& s, double steer_cmd, double accel) {
    const double psi = s[2], vx = s[3], vy = s[4], omega = s[5], steer = s[6];
    const double vx_safe = std::max(vx, 0.1);
    const double alpha_f = steer - std::atan2(vy + lf * omega, vx_safe);
    const double alpha_r = -std::atan2(vy - lr * omega, vx_safe);
    const double fyf = params.cornering_stiffness_front * alpha_f;
    const double fyr = params.cornering_stiffness_rear * alpha_r;
    return std::vector<double>{
        vx * std::cos(psi) - vy * std::sin(psi),
        vx * std::sin(psi) + vy * std::cos(psi),
        omega,
        accel + vy * omega - fyf * std::sin(steer) / params.mass,
        (fyf * std::cos(steer) + fyr) / params.mass - vx * omega,
        (lf * fyf * std::cos(steer) - lr * fyr) / params.yaw_inertia,
        (steer_cmd - steer) / params.actuator_lag};
  };
  auto plant = [&, h](const std::vector<double>& s, double steer, double accel) {
    std::vector<double> cur = s;
    std::vector<double> tmp(7);
    for (int k = 0; k < 4 * params.substeps; ++k) {
      auto k1 = deriv(cur, steer, accel);
      for (int j = 0; j < 7; ++j) tmp[j] = cur[j] + 0.5 * h * k1[j];
      auto k2 = deriv(tmp, steer, accel);
      for (int j = 0; j < 7; ++j) tmp[j] = cur[j] + 0.5 * h * k2[j];
      auto k3 = deriv(tmp, steer, accel);
      for (int j = 0; j < 7; ++j) tmp[j] = cur[j] + h * k3[j];
      auto k4 = deriv(tmp, steer, accel);
      for (int j = 0; j < 7; ++j)
        cur[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    return cur;
  };
  auto measure = [](const std::vector<double>& s) {
    return std::vector<double>{s[0], s[1], s[2], std::hypot(s[3], s[4])};
  };
  return run_closed_loop(z, DisturbanceLevel{}, seed, params, weights, std::move(x0), plant,
                         measure, RolloutSource::True);
}

double path_tracking_risk(const Rollout& rollout, const SinePath& path) {
  if (rollout.states.empty()) throw std::invalid_argument("path_tracking_risk: empty rollout");
  if (rollout.diverged) return std::numeric_limits<double>::max();
  const std::size_t n = path.xs.size();
  double sum = 0.0, mx = 0.0;
  double goal_min = std::numeric_limits<double>::infinity();
  for (const auto& s : rollout.states) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = s[0] - path.xs[i];
      const double dy = s[1] - path.ys[i];
      best = std::min(best, dx * dx + dy * dy);
    }
    const double d = std::sqrt(best);
    sum += d;
    mx = std::max(mx, d);
    goal_min = std::min(goal_min, std::hypot(s[0] - path.goal[0], s[1] - path.goal[1]));
  }
  const double mean = sum / static_cast<double>(rollout.states.size());
  return 20.0 * mean + mx + 10.0 * goal_min;
}

}  // namespace failcast
