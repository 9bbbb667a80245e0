#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "failcast/flow.hpp"

using namespace failcast;

namespace {

const Bounds kBox{{0.0, 0.0}, {10.0, 10.0}};

Eigen::MatrixXd random_in_bounds(const Bounds& b, int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Eigen::MatrixXd z(b.dim(), n);
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b.dim(); ++j)
      z(j, i) = b.lo[j] + (b.hi[j] - b.lo[j]) * uni(gen);
  return z;
}

// two separable blobs: class 1 near (2,2), class 2 near (8,8)
void blob_fixture(std::vector<EnvPoint>& pts, std::vector<int>& classes, int per_class,
                  std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss(0.0, 0.6);
  for (int i = 0; i < per_class; ++i) {
    pts.emplace_back(std::vector<double>{2.0 + gauss(gen), 2.0 + gauss(gen)});
    classes.push_back(1);
  }
  for (int i = 0; i < per_class; ++i) {
    pts.emplace_back(std::vector<double>{8.0 + gauss(gen), 8.0 + gauss(gen)});
    classes.push_back(2);
  }
}

double fd_loss(CouplingFlow& flow, const LatentMixture& mix, const Eigen::MatrixXd& Z,
               const std::vector<int>& classes, const std::vector<double>& weights, double* p,
               double h) {
  const double orig = *p;
  *p = orig + h;
  const double up = flow_nll(flow, mix, Z, classes, weights);
  *p = orig - h;
  const double down = flow_nll(flow, mix, Z, classes, weights);
  *p = orig;
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("fresh flow is the whitening affine; logdet is the analytic constant") {
  FlowConfig cfg;
  CouplingFlow flow(kBox, cfg, 1);
  const Eigen::VectorXd z = (Eigen::VectorXd(2) << 7.0, 3.0).finished();
  const auto [w, logdet] = flow.inverse(z);
  CHECK(w(0) == doctest::Approx((7.0 - 5.0) / 5.0).epsilon(1e-15));
  CHECK(w(1) == doctest::Approx((3.0 - 5.0) / 5.0).epsilon(1e-15));
  CHECK(logdet == doctest::Approx(-2.0 * std::log(5.0)).epsilon(1e-15));

  const Eigen::VectorXd back = flow.forward(w);
  CHECK(back(0) == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(back(1) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("round trip stays below 1e-6 before and after training") {
  std::vector<EnvPoint> pts;
  std::vector<int> classes;
  blob_fixture(pts, classes, 60, 5);

  FlowConfig cfg;
  cfg.epochs = 0;
  const FlowTrainResult fresh = train_flow(pts, classes, kBox, cfg, 3);
  cfg.epochs = 300;
  const FlowTrainResult trained = train_flow(pts, classes, kBox, cfg, 3);

  const Eigen::MatrixXd Z = random_in_bounds(kBox, 200, 17);
  for (const CouplingFlow* flow : {&fresh.flow, &trained.flow}) {
    const auto [w, logdet] = flow->inverse(Z);
    const Eigen::MatrixXd back = flow->forward(w);
    CHECK((back - Z).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("analytic gradient matches central differences on every parameter") {
  std::vector<EnvPoint> pts;
  std::vector<int> classes;
  blob_fixture(pts, classes, 10, 21);
  Eigen::MatrixXd Z(2, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Z(0, i) = pts[i][0];
    Z(1, i) = pts[i][1];
  }
  const std::vector<double> weights = {1.0, 1.0};

  FlowConfig cfg;
  cfg.layers = 3;
  cfg.hidden = 6;
  for (int epochs : {0, 60}) {
    cfg.epochs = epochs;
    FlowTrainResult tr = train_flow(pts, classes, kBox, cfg, 33);
    const std::vector<double> grad =
        flow_nll_gradient(tr.flow, tr.mixture, Z, classes, weights);

    std::vector<double*> ptrs;
    for (int l = 0; l < tr.flow.layers(); ++l) {
      tr.flow.scale_nets()[l].visit([&](auto& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k) ptrs.push_back(m.data() + k);
      });
      tr.flow.translate_nets()[l].visit([&](auto& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k) ptrs.push_back(m.data() + k);
      });
    }
    REQUIRE(ptrs.size() == grad.size());
    double worst = 0.0;
    for (std::size_t p = 0; p < ptrs.size(); ++p) {
      const double fd =
          fd_loss(tr.flow, tr.mixture, Z, classes, weights, ptrs[p], 1e-5);
      const double err =
          std::abs(grad[p] - fd) / std::max({1e-6, std::abs(grad[p]), std::abs(fd)});
      worst = std::max(worst, err);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero epochs returns the initialized model; reweighting cannot change it") {
  std::vector<EnvPoint> pts;
  std::vector<int> classes;
  blob_fixture(pts, classes, 30, 9);
  FlowConfig cfg;
  cfg.epochs = 0;
  const FlowTrainResult a = train_flow(pts, classes, kBox, cfg, 11);
  const CouplingFlow init(kBox, cfg, 11);

  const Eigen::MatrixXd probe = random_in_bounds(kBox, 50, 2);
  CHECK((a.flow.inverse(probe).first - init.inverse(probe).first).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.epoch_losses.size() == 1);

  // duplicating one class's points changes the weights but not the model
  std::vector<EnvPoint> pts2 = pts;
  std::vector<int> classes2 = classes;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (classes[i] == 1) {
      pts2.push_back(pts[i]);
      classes2.push_back(1);
    }
  const FlowTrainResult b = train_flow(pts2, classes2, kBox, cfg, 11);
  CHECK((b.flow.inverse(probe).first - init.inverse(probe).first).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training separates two blobs and the loss trends down") {
  std::vector<EnvPoint> pts;
  std::vector<int> classes;
  blob_fixture(pts, classes, 100, 41);
  FlowConfig cfg;
  cfg.epochs = 800;
  const FlowTrainResult tr = train_flow(pts, classes, kBox, cfg, 13);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    correct += classify(tr.flow, tr.mixture, pts[i]).cls == classes[i];
  CHECK(static_cast<double>(correct) / pts.size() >= 0.95);

  CHECK(tr.epoch_losses.back() < tr.epoch_losses.front());
  for (std::size_t k = 1; k < tr.epoch_losses.size(); ++k) {
    const double prev = tr.epoch_losses[k - 1];
    CHECK(tr.epoch_losses[k] <= prev + 0.01 * (1.0 + std::abs(prev)));
  }
}

TEST_CASE("train_flow rejects single-class input") {
  std::vector<EnvPoint> pts;
  std::vector<int> classes;
  for (int i = 0; i < 10; ++i) {
    pts.emplace_back(std::vector<double>{1.0 + 0.1 * i, 2.0});
    classes.push_back(1);
  }
  FlowConfig cfg;
  CHECK_THROWS_AS(train_flow(pts, classes, kBox, cfg, 1), std::invalid_argument);
}

TEST_CASE("classify: latent means map to their classes, midpoint ties to class 1") {
  FlowConfig cfg;
  CouplingFlow flow(kBox, cfg, 19);
  const LatentMixture mix = LatentMixture::standard(2, cfg.latent_mean);

  const Eigen::VectorXd z2 = flow.forward(mix.mean2);
  CHECK(classify(flow, mix, EnvPoint({z2(0), z2(1)})).cls == 2);
  const Eigen::VectorXd z1 = flow.forward(mix.mean1);
  CHECK(classify(flow, mix, EnvPoint({z1(0), z1(1)})).cls == 1);

  const Eigen::VectorXd mid = flow.forward(
      Eigen::VectorXd(0.5 * (mix.mean1 + mix.mean2)));
  const Classification c = classify(flow, mix, EnvPoint({mid(0), mid(1)}));
  CHECK(c.cls == 1);
  CHECK(c.log_posterior1 == doctest::Approx(c.log_posterior2).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip reproduces the flow exactly") {
  std::vector<EnvPoint> pts;
  std::vector<int> classes;
  blob_fixture(pts, classes, 40, 6);
  FlowConfig cfg;
  cfg.epochs = 120;
  const FlowTrainResult tr = train_flow(pts, classes, kBox, cfg, 77);

  const std::string path = "test_flow_ckpt.json";
  save_flow(tr.flow, tr.mixture, path);
  const auto [flow2, mix2] = load_flow(path);
  std::remove(path.c_str());

  const Eigen::MatrixXd probe = random_in_bounds(kBox, 100, 4);
  const auto [w1, ld1] = tr.flow.inverse(probe);
  const auto [w2, ld2] = flow2.inverse(probe);
  CHECK((w1 - w2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ld1 - ld2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mix2.mean1 == tr.mixture.mean1);
  CHECK(mix2.variance == tr.mixture.variance);
}
