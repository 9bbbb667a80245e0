#include "failcast/flow.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "failcast/rng.hpp"

namespace failcast {

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;

// Net inputs see the passive coordinates only; active rows are zeroed.
Eigen::MatrixXd zero_active_rows(const CouplingFlow& flow, int layer, const Eigen::MatrixXd& v) {
  Eigen::MatrixXd out = v;
  for (int j = 0; j < flow.dim(); ++j) {
    if (flow.active(layer, j)) out.row(j).setZero();
  }
  return out;
}

}  // namespace

LatentMixture LatentMixture::standard(int dim, double latent_mean) {
  LatentMixture m;
  m.mean1 = Eigen::VectorXd::Zero(dim);
  m.mean2 = Eigen::VectorXd::Zero(dim);
  m.mean1(0) = latent_mean;
  m.mean2(0) = -latent_mean;
  m.variance = 1.0;
  return m;
}

double LatentMixture::log_density(const Eigen::VectorXd& w, int cls) const {
  const Eigen::VectorXd& mu = cls == 1 ? mean1 : mean2;
  const double d = static_cast<double>(w.size());
  return -0.5 * (w - mu).squaredNorm() / variance - 0.5 * d * std::log(kTwoPi * variance);
}

CouplingFlow::CouplingFlow(const Bounds& bounds, const FlowConfig& config, std::uint64_t run_seed) {
  bounds.validate();
  if (bounds.dim() < 2)
    throw std::invalid_argument("CouplingFlow: alternating masks need dimension >= 2");
  if (config.layers < 1 || config.hidden < 1)
    throw std::invalid_argument("CouplingFlow: layers and hidden width must be positive");
  dim_ = static_cast<int>(bounds.dim());
  hidden_ = config.hidden;
  scale_cap_ = config.scale_cap;
  shift_.resize(dim_);
  scale_.resize(dim_);
  for (int j = 0; j < dim_; ++j) {
    shift_[j] = 0.5 * (bounds.lo[j] + bounds.hi[j]);
    scale_[j] = 0.5 * (bounds.hi[j] - bounds.lo[j]);
  }
  s_nets_.reserve(config.layers);
  t_nets_.reserve(config.layers);
  for (int l = 0; l < config.layers; ++l) {
    auto gs = rng::stream(run_seed, rng::Stage::FlowInit, 2 * l);
    auto gt = rng::stream(run_seed, rng::Stage::FlowInit, 2 * l + 1);
    s_nets_.push_back(Mlp::zero_output_init(dim_, hidden_, dim_, gs));
    t_nets_.push_back(Mlp::zero_output_init(dim_, hidden_, dim_, gt));
  }
}

Eigen::MatrixXd CouplingFlow::forward(const Eigen::MatrixXd& w) const {
  Eigen::MatrixXd v = w;
  for (int l = layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd p = zero_active_rows(*this, l, v);
    Eigen::MatrixXd s_raw = s_nets_[l].forward(p);
    Eigen::MatrixXd t = t_nets_[l].forward(p);
    for (int j = 0; j < dim_; ++j) {
      if (!active(l, j)) continue;
      const RowArray s = scale_cap_ * (s_raw.row(j).array() / scale_cap_).tanh();
      v.row(j) = (v.row(j).array() - t.row(j).array()) * (-s).exp();
    }
  }
  for (int j = 0; j < dim_; ++j) v.row(j) = v.row(j).array() * scale_[j] + shift_[j];
  return v;
}

Eigen::VectorXd CouplingFlow::forward(const Eigen::VectorXd& w) const {
  return forward(Eigen::MatrixXd(w)).col(0);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> CouplingFlow::inverse(const Eigen::MatrixXd& z) const {
  Eigen::MatrixXd v = z;
  double whiten_logdet = 0.0;
  for (int j = 0; j < dim_; ++j) {
    v.row(j) = (v.row(j).array() - shift_[j]) / scale_[j];
    whiten_logdet -= std::log(scale_[j]);
  }
  Eigen::VectorXd logdet = Eigen::VectorXd::Constant(z.cols(), whiten_logdet);
  for (int l = 0; l < layers(); ++l) {
    const Eigen::MatrixXd p = zero_active_rows(*this, l, v);
    Eigen::MatrixXd s_raw = s_nets_[l].forward(p);
    Eigen::MatrixXd t = t_nets_[l].forward(p);
    for (int j = 0; j < dim_; ++j) {
      if (!active(l, j)) continue;
      const RowArray s = scale_cap_ * (s_raw.row(j).array() / scale_cap_).tanh();
      v.row(j) = v.row(j).array() * s.exp() + t.row(j).array();
      logdet.array() += s.transpose();
    }
  }
  return {std::move(v), std::move(logdet)};
}

std::pair<Eigen::VectorXd, double> CouplingFlow::inverse(const Eigen::VectorXd& z) const {
  auto [w, logdet] = inverse(Eigen::MatrixXd(z));
  return {w.col(0), logdet(0)};
}

namespace {

struct LayerCache {
  Eigen::MatrixXd v_in;  // pre-coupling values
  Eigen::MatrixXd s;     // capped log-scales (active rows meaningful)
  Mlp::Cache s_cache, t_cache;
};

struct ForwardPass {
  Eigen::MatrixXd w;
  Eigen::VectorXd logdet;
  std::vector<LayerCache> layers;
};

ForwardPass run_inverse_cached(const CouplingFlow& flow, const Eigen::MatrixXd& z) {
  const int d = flow.dim();
  ForwardPass fp;
  Eigen::MatrixXd v = z;
  double whiten_logdet = 0.0;
  for (int j = 0; j < d; ++j) {
    v.row(j) = (v.row(j).array() - flow.whiten_shift()[j]) / flow.whiten_scale()[j];
    whiten_logdet -= std::log(flow.whiten_scale()[j]);
  }
  fp.logdet = Eigen::VectorXd::Constant(z.cols(), whiten_logdet);
  fp.layers.resize(flow.layers());
  const double cap = flow.scale_cap();
  for (int l = 0; l < flow.layers(); ++l) {
    LayerCache& lc = fp.layers[l];
    lc.v_in = v;
    const Eigen::MatrixXd p = zero_active_rows(flow, l, v);
    Eigen::MatrixXd s_raw = flow.scale_nets()[l].forward(p, &lc.s_cache);
    Eigen::MatrixXd t = flow.translate_nets()[l].forward(p, &lc.t_cache);
    lc.s = Eigen::MatrixXd::Zero(d, z.cols());
    for (int j = 0; j < d; ++j) {
      if (!flow.active(l, j)) continue;
      lc.s.row(j) = cap * (s_raw.row(j).array() / cap).tanh();
      v.row(j) = v.row(j).array() * lc.s.row(j).array().exp() + t.row(j).array();
      fp.logdet.array() += lc.s.row(j).transpose().array();
    }
  }
  fp.w = std::move(v);
  return fp;
}

double weighted_nll(const ForwardPass& fp, const LatentMixture& mixture,
                    const std::vector<int>& classes, const std::vector<double>& class_weights,
                    Eigen::MatrixXd* dw, Eigen::VectorXd* lambda) {
  const int n = static_cast<int>(fp.w.cols());
  const int d = static_cast<int>(fp.w.rows());
  const double inv_n = 1.0 / static_cast<double>(n);
  const double var = mixture.variance;
  const double const_term = 0.5 * d * std::log(kTwoPi * var);
  double loss = 0.0;
  if (dw) dw->setZero(d, n);
  if (lambda) lambda->setZero(n);
  for (int i = 0; i < n; ++i) {
    const double wgt = class_weights[classes[i] - 1];
    const Eigen::VectorXd& mu = classes[i] == 1 ? mixture.mean1 : mixture.mean2;
    const Eigen::VectorXd diff = fp.w.col(i) - mu;
    loss += wgt * inv_n * (0.5 * diff.squaredNorm() / var + const_term - fp.logdet(i));
    if (dw) dw->col(i) = wgt * inv_n * diff / var;
    if (lambda) (*lambda)(i) = wgt * inv_n;
  }
  return loss;
}

// Reverse sweep; accumulates parameter grads layer by layer.
void run_backward(const CouplingFlow& flow, const ForwardPass& fp, const Eigen::MatrixXd& dw_top,
                  const Eigen::VectorXd& lambda, std::vector<Mlp>& s_grads,
                  std::vector<Mlp>& t_grads) {
  const int d = flow.dim();
  const int n = static_cast<int>(dw_top.cols());
  const double cap = flow.scale_cap();
  Eigen::MatrixXd dv = dw_top;
  for (int l = flow.layers() - 1; l >= 0; --l) {
    const LayerCache& lc = fp.layers[l];
    Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(d, n);
    Eigen::MatrixXd dt = Eigen::MatrixXd::Zero(d, n);
    Eigen::MatrixXd dv_in = dv;  // passive rows pass through; active fixed below
    for (int j = 0; j < d; ++j) {
      if (!flow.active(l, j)) continue;
      const RowArray es = lc.s.row(j).array().exp();
      const RowArray dvj = dv.row(j).array();
      dv_in.row(j) = dvj * es;
      // d(loss)/ds: chain through v_out = v_in*exp(s)+t, plus the -logdet term
      const RowArray ds_j =
          dvj * lc.v_in.row(j).array() * es - lambda.transpose().array();
      // cap derivative: s = cap*tanh(raw/cap)
      ds.row(j) = ds_j * (1.0 - (lc.s.row(j).array() / cap).square());
      dt.row(j) = dvj;
    }
    Eigen::MatrixXd dp_s = flow.scale_nets()[l].backward(ds, lc.s_cache, s_grads[l]);
    Eigen::MatrixXd dp_t = flow.translate_nets()[l].backward(dt, lc.t_cache, t_grads[l]);
    Eigen::MatrixXd dp = zero_active_rows(flow, l, dp_s + dp_t);
    dv = dv_in + dp;
  }
}

std::vector<double> flatten_grads(const std::vector<Mlp>& s_grads,
                                  const std::vector<Mlp>& t_grads) {
  std::vector<double> out;
  for (std::size_t l = 0; l < s_grads.size(); ++l) {
    s_grads[l].visit([&](const auto& m) {
      out.insert(out.end(), m.data(), m.data() + m.size());
    });
    t_grads[l].visit([&](const auto& m) {
      out.insert(out.end(), m.data(), m.data() + m.size());
    });
  }
  return out;
}

std::vector<Mlp> zero_like(const std::vector<Mlp>& nets) {
  std::vector<Mlp> out;
  out.reserve(nets.size());
  for (const auto& net : nets)
    out.push_back(Mlp::zeros(static_cast<int>(net.W1.cols()), static_cast<int>(net.W1.rows()),
                             static_cast<int>(net.W3.rows())));
  return out;
}

}  // namespace

double flow_nll(const CouplingFlow& flow, const LatentMixture& mixture,
                const Eigen::MatrixXd& points, const std::vector<int>& classes,
                const std::vector<double>& class_weights) {
  const ForwardPass fp = run_inverse_cached(flow, points);
  return weighted_nll(fp, mixture, classes, class_weights, nullptr, nullptr);
}

std::vector<double> flow_nll_gradient(const CouplingFlow& flow, const LatentMixture& mixture,
                                      const Eigen::MatrixXd& points,
                                      const std::vector<int>& classes,
                                      const std::vector<double>& class_weights) {
  const ForwardPass fp = run_inverse_cached(flow, points);
  Eigen::MatrixXd dw;
  Eigen::VectorXd lambda;
  weighted_nll(fp, mixture, classes, class_weights, &dw, &lambda);
  std::vector<Mlp> s_grads = zero_like(flow.scale_nets());
  std::vector<Mlp> t_grads = zero_like(flow.translate_nets());
  run_backward(flow, fp, dw, lambda, s_grads, t_grads);
  return flatten_grads(s_grads, t_grads);
}

FlowTrainResult train_flow(const std::vector<EnvPoint>& points, const std::vector<int>& classes,
                           const Bounds& bounds, const FlowConfig& config,
                           std::uint64_t run_seed) {
  if (points.size() != classes.size() || points.empty())
    throw std::invalid_argument("train_flow: points/classes size mismatch");
  std::size_t n1 = 0, n2 = 0;
  for (int c : classes) {
    if (c == 1)
      ++n1;
    else if (c == 2)
      ++n2;
    else
      throw std::invalid_argument("train_flow: classes must be 1 or 2");
  }
  if (n1 == 0 || n2 == 0)
    throw std::invalid_argument("train_flow: both classes must be present");

  const int d = static_cast<int>(points[0].dim());
  Eigen::MatrixXd Z(d, points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (int j = 0; j < d; ++j) Z(j, i) = points[i][j];

  FlowTrainResult res;
  res.flow = CouplingFlow(bounds, config, run_seed);
  res.mixture = LatentMixture::standard(d, config.latent_mean);

  const double n = static_cast<double>(points.size());
  const std::vector<double> class_weights = {n / (2.0 * n1), n / (2.0 * n2)};

  // flattened parameter views, visit order matches flow_nll_gradient
  std::vector<double*> param_ptr;
  std::vector<std::size_t> param_len;
  for (int l = 0; l < res.flow.layers(); ++l) {
    res.flow.scale_nets()[l].visit([&](auto& m) {
      param_ptr.push_back(m.data());
      param_len.push_back(static_cast<std::size_t>(m.size()));
    });
    res.flow.translate_nets()[l].visit([&](auto& m) {
      param_ptr.push_back(m.data());
      param_len.push_back(static_cast<std::size_t>(m.size()));
    });
  }
  std::size_t total = 0;
  for (auto len : param_len) total += len;

  std::vector<double> adam_m(total, 0.0), adam_v(total, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  bool stepped = false;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const ForwardPass fp = run_inverse_cached(res.flow, Z);
    Eigen::MatrixXd dw;
    Eigen::VectorXd lambda;
    const double loss = weighted_nll(fp, res.mixture, classes, class_weights, &dw, &lambda);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_flow: loss diverged at epoch " + std::to_string(epoch));
    res.epoch_losses.push_back(loss);
    stepped = false;

    if (loss < best - config.early_stop_tol) {
      best = loss;
      stale = 0;
    } else if (++stale >= config.early_stop_window) {
      break;
    }

    std::vector<Mlp> s_grads = zero_like(res.flow.scale_nets());
    std::vector<Mlp> t_grads = zero_like(res.flow.translate_nets());
    run_backward(res.flow, fp, dw, lambda, s_grads, t_grads);
    const std::vector<double> grad = flatten_grads(s_grads, t_grads);

    const double t = static_cast<double>(epoch + 1);
    const double corr1 = 1.0 - std::pow(beta1, t);
    const double corr2 = 1.0 - std::pow(beta2, t);
    std::size_t offset = 0;
    for (std::size_t b = 0; b < param_ptr.size(); ++b) {
      double* p = param_ptr[b];
      for (std::size_t k = 0; k < param_len[b]; ++k) {
        const std::size_t idx = offset + k;
        adam_m[idx] = beta1 * adam_m[idx] + (1.0 - beta1) * grad[idx];
        adam_v[idx] = beta2 * adam_v[idx] + (1.0 - beta2) * grad[idx] * grad[idx];
        p[k] -= config.learning_rate * (adam_m[idx] / corr1) /
                (std::sqrt(adam_v[idx] / corr2) + eps);
      }
      offset += param_len[b];
    }
    res.epochs_run = epoch + 1;
    stepped = true;
  }
  // loss at the final parameters, unless already recorded
  if (stepped || res.epoch_losses.empty())
    res.epoch_losses.push_back(flow_nll(res.flow, res.mixture, Z, classes, class_weights));
  return res;
}

Classification classify(const CouplingFlow& flow, const LatentMixture& mixture,
                        const EnvPoint& z) {
  Eigen::VectorXd zv(flow.dim());
  for (int j = 0; j < flow.dim(); ++j) zv(j) = z[j];
  const auto [w, logdet] = flow.inverse(zv);
  (void)logdet;  // class-independent, cancels in the posterior
  const double l1 = mixture.log_density(w, 1);
  const double l2 = mixture.log_density(w, 2);
  const double m = std::max(l1, l2);
  const double lse = m + std::log(std::exp(l1 - m) + std::exp(l2 - m));
  Classification out;
  out.cls = l1 >= l2 ? 1 : 2;
  out.log_posterior1 = l1 - lse;
  out.log_posterior2 = l2 - lse;
  return out;
}

namespace {

nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

nlohmann::json net_to_json(const Mlp& net) {
  return nlohmann::json{{"W1", mat_to_json(net.W1)}, {"b1", mat_to_json(net.b1)},
                        {"W2", mat_to_json(net.W2)}, {"b2", mat_to_json(net.b2)},
                        {"W3", mat_to_json(net.W3)}, {"b3", mat_to_json(net.b3)}};
}

Mlp net_from_json(const nlohmann::json& j) {
  Mlp net;
  net.W1 = mat_from_json(j.at("W1"));
  net.b1 = mat_from_json(j.at("b1"));
  net.W2 = mat_from_json(j.at("W2"));
  net.b2 = mat_from_json(j.at("b2"));
  net.W3 = mat_from_json(j.at("W3"));
  net.b3 = mat_from_json(j.at("b3"));
  return net;
}

}  // namespace

std::string CouplingFlow::to_json() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["hidden"] = hidden_;
  j["scale_cap"] = scale_cap_;
  j["whiten_shift"] = shift_;
  j["whiten_scale"] = scale_;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < s_nets_.size(); ++l)
    layers.push_back(nlohmann::json{{"scale", net_to_json(s_nets_[l])},
                                    {"translate", net_to_json(t_nets_[l])}});
  j["layers"] = std::move(layers);
  return j.dump();
}

CouplingFlow CouplingFlow::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  CouplingFlow f;
  f.dim_ = j.at("dim").get<int>();
  f.hidden_ = j.at("hidden").get<int>();
  f.scale_cap_ = j.at("scale_cap").get<double>();
  f.shift_ = j.at("whiten_shift").get<std::vector<double>>();
  f.scale_ = j.at("whiten_scale").get<std::vector<double>>();
  for (const auto& layer : j.at("layers")) {
    f.s_nets_.push_back(net_from_json(layer.at("scale")));
    f.t_nets_.push_back(net_from_json(layer.at("translate")));
  }
  return f;
}

void save_flow(const CouplingFlow& flow, const LatentMixture& mixture, const std::string& path) {
  nlohmann::json j;
  j["flow"] = nlohmann::json::parse(flow.to_json());
  j["mixture"] = {{"mean1", std::vector<double>(mixture.mean1.data(),
                                                mixture.mean1.data() + mixture.mean1.size())},
                  {"mean2", std::vector<double>(mixture.mean2.data(),
                                                mixture.mean2.data() + mixture.mean2.size())},
                  {"variance", mixture.variance}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_flow: cannot open " + path);
  out << j.dump(2) << '\n';
}

std::pair<CouplingFlow, LatentMixture> load_flow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_flow: cannot open " + path);
  nlohmann::json j;
  in >> j;
  CouplingFlow flow = CouplingFlow::from_json(j.at("flow").dump());
  LatentMixture mix;
  const auto m1 = j.at("mixture").at("mean1").get<std::vector<double>>();
  const auto m2 = j.at("mixture").at("mean2").get<std::vector<double>>();
  mix.mean1 = Eigen::Map<const Eigen::VectorXd>(m1.data(), m1.size());
  mix.mean2 = Eigen::Map<const Eigen::VectorXd>(m2.data(), m2.size());
  mix.variance = j.at("mixture").at("variance").get<double>();
  return {std::move(flow), mix};
}

}  // namespace failcast
