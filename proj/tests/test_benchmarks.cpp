#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "failcast/benchmark.hpp"
#include "failcast/bicycle.hpp"
#include "failcast/synthetic.hpp"

using namespace failcast;

namespace {

double mean_path_distance(const Rollout& r, const SinePath& path) {
  double sum = 0.0;
  for (const auto& s : r.states) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < path.xs.size(); ++i)
      best = std::min(best, std::hypot(s[0] - path.xs[i], s[1] - path.ys[i]));
    sum += best;
  }
  return sum / r.states.size();
}

}  // namespace

TEST_CASE("lqr_gain: Riccati fixed point, stability, scale invariance") {
  BicycleParams params;
  LqrWeights weights;
  for (double v : {0.5, 2.0, 6.5}) {
    const LqrResult res = lqr_gain(v, params, weights);
    CHECK(res.residual < 1e-9);

    Eigen::MatrixXd A, B;
    lqr_error_dynamics(v, params, A, B);
    const Eigen::MatrixXd closed = A - B * res.gain;
    const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(closed).eigenvalues();
    CHECK(eig.cwiseAbs().maxCoeff() < 1.0);

    LqrWeights doubled;
    doubled.Q = 2.0 * weights.Q;
    doubled.R = 2.0 * weights.R;
    const LqrResult res2 = lqr_gain(v, params, doubled);
    CHECK((res2.gain - res.gain).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK_THROWS_AS(lqr_gain(0.0, params, weights), std::invalid_argument);
}

TEST_CASE("simulate_model: zero-noise rollouts are deterministic in z") {
  BicycleParams params;
  LqrWeights weights;
  const EnvPoint z({2.0, 3.0});
  const Rollout a = simulate_model(z, {0.0, 0.0}, 123, params, weights);
  const Rollout b = simulate_model(z, {0.0, 0.0}, 9999, params, weights);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i)
    for (std::size_t j = 0; j < a.states[i].size(); ++j)
      CHECK(a.states[i][j] == b.states[i][j]);
  CHECK(a.consistent());
}

TEST_CASE("simulate_model: zero-width path tracks the straight line") {
  BicycleParams params;
  LqrWeights weights;
  const Rollout r = simulate_model(EnvPoint({0.0, 2.0}), {0.0, 0.0}, 0, params, weights);
  CHECK_FALSE(r.diverged);
  CHECK(mean_path_distance(r, SinePath::build(0.0)) < 0.05);
}

TEST_CASE("simulate_model: inputs saturate at the configured limits") {
  BicycleParams params;
  LqrWeights weights;
  for (const auto& z : {EnvPoint({4.5, 6.5}), EnvPoint({3.0, 1.0})}) {
    for (const DisturbanceLevel& d :
         {DisturbanceLevel{0.0, 0.0}, DisturbanceLevel{1.0, 1e-3}}) {
      const Rollout r = simulate_model(z, d, 77, params, weights);
      for (const auto& u : r.inputs) {
        CHECK(std::abs(u[0]) <= params.steer_limit);
        CHECK(std::abs(u[1]) <= params.accel_limit);
      }
      const auto& steer = r.aux.at("steer");
      for (double s : steer) CHECK(std::abs(s) <= 0.8);
    }
  }
}

TEST_CASE("simulate_true: deterministic and close to the model at low speed") {
  BicycleParams params;
  LqrWeights weights;
  const EnvPoint z({0.5, 0.5});
  const Rollout a = simulate_true(z, 5, params, weights);
  const Rollout b = simulate_true(z, 5, params, weights);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i)
    CHECK(a.states[i] == b.states[i]);

  const SinePath path = SinePath::build(z[0]);
  const double r_true = path_tracking_risk(a, path);
  const double r_model =
      path_tracking_risk(simulate_model(z, {0.0, 0.0}, 5, params, weights), path);
  CHECK(std::abs(r_true - r_model) < 0.2);
}

TEST_CASE("path_tracking_risk: frozen arithmetic cases") {
  // straight path along x, goal placed 0.1 m laterally off the end so that
  // an offset rollout terminates exactly at the goal
  SinePath path = SinePath::build(0.0, 10.0, 10.0, 0.1);
  path.goal = {10.0, 0.1};

  Rollout on_path;
  for (int i = 0; i <= 100; ++i) on_path.states.push_back({i * 0.1, 0.0});
  on_path.states.push_back({10.0, 0.1});  // touch the goal
  on_path.inputs.resize(on_path.states.size() - 1, {0.0, 0.0});
  // R_mean=~0, R_max=0.1 from the final state, R_final=0
  const double r0 = path_tracking_risk(on_path, path);
  CHECK(r0 == doctest::Approx(20.0 * (0.1 / 102.0) + 0.1 + 0.0).epsilon(1e-12));

  Rollout offset;
  for (int i = 0; i <= 100; ++i) offset.states.push_back({i * 0.1, 0.1});
  offset.inputs.resize(offset.states.size() - 1, {0.0, 0.0});
  CHECK(path_tracking_risk(offset, path) == doctest::Approx(2.1).epsilon(1e-12));

  // doubling the offset doubles the mean and max contributions
  Rollout offset2;
  for (int i = 0; i <= 100; ++i) offset2.states.push_back({i * 0.1, 0.2});
  offset2.inputs.resize(offset2.states.size() - 1, {0.0, 0.0});
  SinePath goal_on_end = path;
  goal_on_end.goal = {10.0, 0.0};
  const double r1 = path_tracking_risk(offset, goal_on_end);
  const double r2 = path_tracking_risk(offset2, goal_on_end);
  CHECK(r2 - 10.0 * 0.2 == doctest::Approx(2.0 * (r1 - 10.0 * 0.1)).epsilon(1e-9));

  Rollout diverged = offset;
  diverged.diverged = true;
  CHECK(path_tracking_risk(diverged, path) == std::numeric_limits<double>::max());
}

TEST_CASE("synthetic: gap region, continuity, noise monotonicity") {
  SyntheticSpec spec;
  // inside the injected-gap plateau
  const EnvPoint gap_pt({8.0, 8.0});
  CHECK(spec.true_risk(gap_pt) > spec.model_risk(gap_pt));
  CHECK(spec.gap(gap_pt) == doctest::Approx(spec.gap_amplitude).epsilon(1e-12));
  CHECK(spec.true_failure(gap_pt));
  CHECK_FALSE(spec.model_failure(gap_pt));

  // model bump fails on both sides
  const EnvPoint bump({2.5, 2.5});
  CHECK(spec.model_failure(bump));
  CHECK(spec.true_failure(bump));

  // continuity under 1e-6 perturbation
  for (const auto& z : {EnvPoint({2.5, 2.5}), EnvPoint({6.0, 3.5}), EnvPoint({5.0, 5.0})}) {
    const EnvPoint zh({z[0] + 1e-6, z[1] - 1e-6});
    CHECK(std::abs(spec.model_risk(zh) - spec.model_risk(z)) < 1e-4);
    CHECK(std::abs(spec.true_risk(zh) - spec.true_risk(z)) < 1e-4);
  }

  // disturbances only ever add risk, deterministically per seed
  const DisturbanceLevel lvl{1e-2, 1e-4};
  const EnvPoint z({3.0, 3.0});
  const double noisy = spec.noisy_model_risk(z, lvl, 42);
  CHECK(noisy >= spec.model_risk(z));
  CHECK(spec.noisy_model_risk(z, lvl, 42) == noisy);
  CHECK(spec.noisy_model_risk(z, {0.0, 0.0}, 42) == spec.model_risk(z));
}

TEST_CASE("synthetic benchmark wrapper: coverage and risks") {
  SyntheticSpec spec;
  SyntheticBenchmark bench(spec);
  const EnvPoint z({5.0, 5.0});
  CHECK(bench.coverage(z) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bench.true_risk(z, 0) == spec.true_risk(z));
  CHECK(bench.model_risk(z, {0.0, 0.0}, 0) == spec.model_risk(z));
}

TEST_CASE("synthetic: failure-set membership agrees with the risk test") {
  SyntheticSpec spec;
  const RiskSpec rs{spec.risk_threshold, std::nullopt};
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  std::size_t model_fails = 0, true_fails = 0;
  for (int i = 0; i < 500; ++i) {
    const EnvPoint z({uni(gen), uni(gen)});
    CHECK(spec.true_failure(z) == is_failure(spec.true_risk(z), rs));
    CHECK(spec.model_failure(z) == is_failure(spec.model_risk(z), rs));
    model_fails += spec.model_failure(z);
    true_fails += spec.true_failure(z);
  }
  // the gap only ever adds risk, so the true failure set contains the
  // model failure set
  CHECK(true_fails >= model_fails);
  CHECK(true_fails > 0);
}
