#include "failcast/gpr.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "failcast/kmeans.hpp"
#include "failcast/rng.hpp"

namespace failcast {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const GprHyper& hyper) {
  const double sv = hyper.signal_var();
  Eigen::MatrixXd K(A.cols(), B.cols());
  for (Eigen::Index i = 0; i < A.cols(); ++i) {
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      double q = 0.0;
      for (Eigen::Index k = 0; k < A.rows(); ++k) {
        const double d = (A(k, i) - B(k, j)) / hyper.lengthscale(static_cast<int>(k));
        q += d * d;
      }
      K(i, j) = sv * std::exp(-0.5 * q);
    }
  }
  return K;
}

// Cholesky of K + (nv + jitter) I with jitter escalation.
Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& K, double nv) {
  const Eigen::MatrixXd base =
      K + nv * Eigen::MatrixXd::Identity(K.rows(), K.cols());
  Eigen::LLT<Eigen::MatrixXd> llt(base);
  if (llt.info() == Eigen::Success) return llt;
  for (double jitter = 1e-10; jitter <= 1e-6; jitter *= 100.0) {
    llt.compute(base + jitter * Eigen::MatrixXd::Identity(K.rows(), K.cols()));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw std::runtime_error("gpr: kernel matrix not positive definite after jitter escalation");
}

}  // namespace

GpDataset GpDataset::from_samples(const std::vector<RiskSample>& samples) {
  GpDataset d;
  if (samples.empty()) return d;
  const std::size_t dim = samples[0].z.dim();
  d.Z.resize(dim, samples.size());
  d.R.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) d.Z(j, i) = samples[i].z[j];
    d.R(i) = samples[i].risk;
  }
  return d;
}

void GpDataset::append(const EnvPoint& z, double risk) {
  if (R.size() == 0) {
    Z.resize(z.dim(), 1);
    for (std::size_t j = 0; j < z.dim(); ++j) Z(j, 0) = z[j];
    R.resize(1);
    R(0) = risk;
    return;
  }
  Z.conservativeResize(Eigen::NoChange, Z.cols() + 1);
  for (std::size_t j = 0; j < z.dim(); ++j) Z(j, Z.cols() - 1) = z[j];
  R.conservativeResize(R.size() + 1);
  R(R.size() - 1) = risk;
}

GprHyper GprHyper::make(int dim, double signal_var, double lengthscale, double noise_var) {
  GprHyper h;
  h.theta.resize(dim + 2);
  h.theta(0) = std::log(signal_var);
  for (int j = 0; j < dim; ++j) h.theta(1 + j) = std::log(lengthscale);
  h.theta(dim + 1) = std::log(noise_var);
  return h;
}

double gp_mll(const GpDataset& data, const GprHyper& hyper) {
  const Eigen::Index n = data.R.size();
  if (n < 1) throw std::invalid_argument("gp_mll: need at least one point");
  const Eigen::MatrixXd K = rbf_kernel(data.Z, data.Z, hyper);
  const auto llt = chol_with_jitter(K, hyper.noise_var());
  const Eigen::VectorXd alpha = llt.solve(data.R);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  logdet *= 2.0;
  return -0.5 * data.R.dot(alpha) - 0.5 * logdet - 0.5 * n * kLog2Pi;
}

Eigen::VectorXd gp_mll_grad(const GpDataset& data, const GprHyper& hyper) {
  const Eigen::Index n = data.R.size();
  if (n < 1) throw std::invalid_argument("gp_mll_grad: need at least one point");
  const int d = static_cast<int>(data.Z.rows());
  const Eigen::MatrixXd K = rbf_kernel(data.Z, data.Z, hyper);
  const auto llt = chol_with_jitter(K, hyper.noise_var());
  const Eigen::VectorXd alpha = llt.solve(data.R);
  const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;

  Eigen::VectorXd grad(d + 2);
  // d/d log signal_var: dK = K (noise excluded)
  grad(0) = 0.5 * (W.array() * K.array()).sum();
  // d/d log lengthscale_j
  for (int j = 0; j < d; ++j) {
    const double lj = hyper.lengthscale(j);
    double acc = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        const double diff = (data.Z(j, a) - data.Z(j, b)) / lj;
        acc += W(a, b) * K(a, b) * diff * diff;
      }
    }
    grad(1 + j) = 0.5 * acc;
  }
  // d/d log noise_var: dK = nv I
  grad(d + 1) = 0.5 * hyper.noise_var() * W.trace();
  return grad;
}

double joint_mll(const GpDataset& d1, const GpDataset& d2, const GprHyper& hyper) {
  if (d1.size() == 0 && d2.size() == 0)
    throw std::invalid_argument("joint_mll: both datasets empty");
  double v = 0.0;
  if (d1.size() > 0) v += gp_mll(d1, hyper);
  if (d2.size() > 0) v += gp_mll(d2, hyper);
  return v;
}

Eigen::VectorXd joint_mll_grad(const GpDataset& d1, const GpDataset& d2, const GprHyper& hyper) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(hyper.theta.size());
  if (d1.size() > 0) g += gp_mll_grad(d1, hyper);
  if (d2.size() > 0) g += gp_mll_grad(d2, hyper);
  return g;
}

GprModel::GprModel(GpDataset pooled, GprHyper hyper, double target_scale, double prior_mean)
    : data_(std::move(pooled)),
      hyper_(std::move(hyper)),
      target_scale_(target_scale),
      prior_mean_(prior_mean) {
  const Eigen::MatrixXd K = rbf_kernel(data_.Z, data_.Z, hyper_);
  const auto llt = chol_with_jitter(K, hyper_.noise_var());
  chol_ = llt.matrixL();
  const Eigen::VectorXd scaled = (data_.R.array() - prior_mean_) / target_scale_;
  alpha_ = llt.solve(scaled);
}

Prediction GprModel::predict(const EnvPoint& z) const {
  Eigen::MatrixXd zq(data_.Z.rows(), 1);
  for (Eigen::Index j = 0; j < data_.Z.rows(); ++j) zq(j, 0) = z[static_cast<std::size_t>(j)];
  const Eigen::MatrixXd ks = rbf_kernel(data_.Z, zq, hyper_);  // n x 1
  Prediction p;
  p.mean = prior_mean_ + target_scale_ * ks.col(0).dot(alpha_);
  const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(ks.col(0));
  const double var_scaled = hyper_.signal_var() - v.squaredNorm();
  p.variance = target_scale_ * target_scale_ * std::max(0.0, var_scaled);
  return p;
}

FitResult fit_gpr(const GpDataset& d1, const GpDataset& d2, const GprConfig& config,
                  std::uint64_t run_seed, std::uint64_t fit_index) {
  const std::size_t n = d1.size() + d2.size();
  if (n < 2) throw std::invalid_argument("fit_gpr: need at least two points");
  const int d = static_cast<int>(d1.size() > 0 ? d1.Z.rows() : d2.Z.rows());

  // pooled raw targets; fitting runs on targets scaled to unit spread
  GpDataset pooled;
  pooled.Z.resize(d, n);
  pooled.R.resize(n);
  Eigen::Index col = 0;
  for (const GpDataset* src : {&d1, &d2}) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(src->size()); ++i, ++col) {
      pooled.Z.col(col) = src->Z.col(i);
      pooled.R(col) = src->R(i);
    }
  }
  const Eigen::VectorXd centered = pooled.R.array() - config.prior_mean;
  double scale = std::sqrt(centered.squaredNorm() / static_cast<double>(n));
  if (!(scale > 1e-12)) scale = 1.0;

  auto scaled = [&](const GpDataset& src) {
    GpDataset out = src;
    if (out.size() > 0) out.R = (out.R.array() - config.prior_mean) / scale;
    return out;
  };
  const GpDataset s1 = scaled(d1), s2 = scaled(d2);

  // data spans per axis for initialization ranges
  Eigen::VectorXd span(d);
  for (int j = 0; j < d; ++j) {
    const double mn = pooled.Z.row(j).minCoeff();
    const double mx = pooled.Z.row(j).maxCoeff();
    span(j) = std::max(mx - mn, 1e-6);
  }

  auto gen = rng::stream(run_seed, rng::Stage::GprFit, fit_index);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const double log_floor = std::log(config.noise_floor);
  auto clamp_theta = [&](GprHyper& h) {
    h.theta(0) = std::min(std::max(h.theta(0), -14.0), 14.0);
    for (int j = 0; j < d; ++j) {
      const double base = std::log(span(j));
      h.theta(1 + j) = std::min(std::max(h.theta(1 + j), base - 7.0), base + 3.0);
    }
    h.theta(d + 1) = std::min(std::max(h.theta(d + 1), log_floor), std::log(1e2));
  };

  FitResult result;
  double best_obj = -std::numeric_limits<double>::infinity();
  GprHyper best_hyper;

  for (int s = 0; s < config.starts; ++s) {
    GprHyper h;
    h.theta.resize(d + 2);
    if (s == 0) {
      h = GprHyper::make(d, 1.0, 1.0, 1e-4);
      for (int j = 0; j < d; ++j) h.theta(1 + j) = std::log(0.2 * span(j));
    } else {
      h.theta(0) = std::log(std::exp(std::log(0.5) + uni(gen) * std::log(8.0)));
      for (int j = 0; j < d; ++j)
        h.theta(1 + j) = std::log(span(j)) + std::log(0.05) + uni(gen) * std::log(12.0);
      h.theta(d + 1) = std::log(1e-6) + uni(gen) * std::log(1e4);
    }
    clamp_theta(h);

    double obj;
    try {
      obj = joint_mll(s1, s2, h);
    } catch (const std::exception&) {
      result.start_objectives.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    result.start_objectives.push_back(obj);
    if (obj > best_obj) {
      best_obj = obj;
      best_hyper = h;
    }

    Eigen::VectorXd m = Eigen::VectorXd::Zero(d + 2);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d + 2);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (int it = 0; it < config.iters; ++it) {
      Eigen::VectorXd g;
      try {
        g = joint_mll_grad(s1, s2, h);
      } catch (const std::exception&) {
        break;
      }
      if (g.cwiseAbs().maxCoeff() < config.grad_tol) break;
      const double t = it + 1;
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      const Eigen::VectorXd mhat = m / (1.0 - std::pow(beta1, t));
      const Eigen::VectorXd vhat = v / (1.0 - std::pow(beta2, t));
      // ascent
      h.theta += config.learning_rate *
                 (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
      clamp_theta(h);
      try {
        obj = joint_mll(s1, s2, h);
      } catch (const std::exception&) {
        break;
      }
      if (obj > best_obj) {
        best_obj = obj;
        best_hyper = h;
      }
    }
  }
  if (!std::isfinite(best_obj))
    throw std::runtime_error("fit_gpr: every start failed the Cholesky factorization");

  result.objective = best_obj;
  result.hyper = best_hyper;
  result.model = GprModel(std::move(pooled), best_hyper, scale, config.prior_mean);
  return result;
}

std::vector<EnvPoint> safe_region(const GprModel& model, const std::vector<EnvPoint>& grid,
                                  double risk_threshold) {
  std::vector<EnvPoint> out;
  for (const auto& z : grid)
    if (model.predict(z).mean < risk_threshold) out.push_back(z);
  if (out.empty())
    throw EmptySafeRegion("safe_region: no grid point predicted below threshold " +
                          std::to_string(risk_threshold));
  return out;
}

std::vector<EnvPoint> refine_candidates(const std::vector<EnvPoint>& region, int n2,
                                        std::uint64_t run_seed, std::uint64_t step_index) {
  if (region.empty()) throw std::invalid_argument("refine_candidates: empty region");
  const int k = std::min<int>(n2, static_cast<int>(region.size()));
  const std::size_t d = region[0].dim();
  Eigen::MatrixXd pts(d, region.size());
  for (std::size_t i = 0; i < region.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) pts(j, i) = region[i][j];

  auto gen = rng::stream(run_seed, rng::Stage::Refine, step_index);
  const KMeansResult km = kmeans(pts, k, gen, 50);
  std::vector<EnvPoint> out;
  out.reserve(k);
  for (Eigen::Index c = 0; c < km.centroids.cols(); ++c)
    out.emplace_back(std::vector<double>(km.centroids.col(c).data(),
                                         km.centroids.col(c).data() + km.centroids.rows()));
  return out;
}

EnvPoint next_point(const std::vector<EnvPoint>& candidates,
                    const std::vector<EnvPoint>& previous) {
  if (candidates.empty()) throw std::invalid_argument("next_point: no candidates");
  if (previous.empty()) throw std::invalid_argument("next_point: previous demos required");
  const std::size_t d = candidates[0].dim();

  auto lex_less = [d](const EnvPoint& a, const EnvPoint& b) {
    for (std::size_t j = 0; j < d; ++j) {
      if (a[j] != b[j]) return a[j] < b[j];
    }
    return false;
  };

  double best_score = -1.0;
  const EnvPoint* best = &candidates[0];
  for (const auto& cand : candidates) {
    double score = std::numeric_limits<double>::infinity();
    for (const auto& q : previous) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = cand[j] - q[j];
        acc += diff * diff;
      }
      score = std::min(score, acc);
    }
    if (score > best_score || (score == best_score && lex_less(cand, *best))) {
      best_score = score;
      best = &cand;
    }
  }
  return *best;
}

std::vector<GridPrediction> predict_grid(const GprModel& model, const std::vector<EnvPoint>& grid,
                                         double risk_threshold) {
  std::vector<GridPrediction> out;
  out.reserve(grid.size());
  for (const auto& z : grid) {
    const Prediction p = model.predict(z);
    out.push_back(GridPrediction{z, p.mean, p.variance, p.mean > risk_threshold});
  }
  return out;
}

RefineResult sequential_refine(GpDataset d1, const GpDataset& d2,
                               const std::vector<EnvPoint>& grid, double risk_threshold, int n2,
                               Budget& budget, const TrueRiskQuery& true_risk,
                               const GprConfig& config, std::uint64_t run_seed) {
  if (budget.remaining() < n2)
    throw BudgetExhausted("sequential_refine: budget has " + std::to_string(budget.remaining()) +
                          " queries left, need " + std::to_string(n2));
  RefineResult out;
  std::vector<EnvPoint> previous;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d1.size()); ++i) {
    previous.emplace_back(
        std::vector<double>(d1.Z.col(i).data(), d1.Z.col(i).data() + d1.Z.rows()));
  }

  FitResult fit = fit_gpr(d1, d2, config, run_seed, 0);
  out.grids.push_back(predict_grid(fit.model, grid, risk_threshold));

  for (int k = 1; k <= n2; ++k) {
    std::vector<EnvPoint> region;
    try {
      region = safe_region(fit.model, grid, risk_threshold);
    } catch (const EmptySafeRegion& e) {
      out.early_stop_reason = e.what();
      break;
    }
    const EnvPoint zk = next_point(
        refine_candidates(region, n2, run_seed, static_cast<std::uint64_t>(k)), previous);
    budget.consume(1);
    const double risk = true_risk(
        zk, rng::substream_seed(run_seed, static_cast<std::uint64_t>(rng::Stage::Refine),
                                (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(k)));
    d1.append(zk, risk);
    previous.push_back(zk);

    fit = fit_gpr(d1, d2, config, run_seed, static_cast<std::uint64_t>(k));
    out.steps.push_back(RefineStep{zk, risk, fit.objective});
    out.grids.push_back(predict_grid(fit.model, grid, risk_threshold));
  }
  out.final_fit = std::move(fit);
  return out;
}

void save_gpr(const GprModel& model, const std::string& path) {
  nlohmann::json j;
  j["theta"] = std::vector<double>(model.hyper().theta.data(),
                                   model.hyper().theta.data() + model.hyper().theta.size());
  j["target_scale"] = model.target_scale();
  j["prior_mean"] = model.prior_mean();
  nlohmann::json pts = nlohmann::json::array();
  const GpDataset& d = model.data();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.size()); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < d.Z.rows(); ++k) row.push_back(d.Z(k, i));
    row.push_back(d.R(i));
    pts.push_back(std::move(row));
  }
  j["data"] = std::move(pts);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_gpr: cannot open " + path);
  out << j.dump(2) << '\n';
}

GprModel load_gpr(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_gpr: cannot open " + path);
  nlohmann::json j;
  in >> j;
  GprHyper hyper;
  const auto theta = j.at("theta").get<std::vector<double>>();
  hyper.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
  const auto& pts = j.at("data");
  const std::size_t n = pts.size();
  const std::size_t cols = n ? pts[0].size() : 0;
  if (n == 0 || cols < 2) throw std::runtime_error("load_gpr: empty model data");
  GpDataset d;
  d.Z.resize(cols - 1, n);
  d.R.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k + 1 < cols; ++k) d.Z(k, i) = pts[i][k].get<double>();
    d.R(i) = pts[i][cols - 1].get<double>();
  }
  return GprModel(std::move(d), std::move(hyper), j.at("target_scale").get<double>(),
                  j.at("prior_mean").get<double>());
}

}  // namespace failcast
