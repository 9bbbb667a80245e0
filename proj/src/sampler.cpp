#include "failcast/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "failcast/csvio.hpp"
#include "failcast/kmeans.hpp"
#include "failcast/rng.hpp"

namespace failcast {

Eigen::VectorXd project(const Eigen::VectorXd& w, const Eigen::VectorXd& c, double r) {
  const double dist = (w - c).norm();
  // the rounding slack keeps re-projection of a projected point exact
  if (dist <= r * (1.0 + 64.0 * std::numeric_limits<double>::epsilon())) return w;
  return c + r * (w - c) / dist;
}

namespace {

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

struct QuantizedPoint {
  std::vector<std::int64_t> q;
  bool operator==(const QuantizedPoint& o) const { return q == o.q; }
};

struct QuantizedPointHash {
  std::size_t operator()(const QuantizedPoint& p) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto v : p.q) {
      h ^= static_cast<std::size_t>(v);
      h *= 1099511628211ULL;
    }
    return h;
  }
};

QuantizedPoint quantize(const Eigen::VectorXd& z) {
  QuantizedPoint p;
  p.q.resize(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j)
    p.q[j] = static_cast<std::int64_t>(std::llround(z(j) * 1e9));
  return p;
}

}  // namespace

double gaussian_mass_radius(int dim, double mass) {
  if (dim < 1 || mass <= 0.0 || mass >= 1.0)
    throw std::invalid_argument("gaussian_mass_radius: need dim >= 1 and mass in (0,1)");
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(0.5 * dim, 0.5 * mid * mid) < mass)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double posterior_log_density(const Eigen::VectorXd& w, const PosteriorSpec& spec) {
  const double prior = spec.mixture->log_density(w, 2);
  if (spec.coverage_disabled()) return prior;
  const Eigen::VectorXd zv = spec.flow->forward(w);
  std::vector<double> coords(zv.data(), zv.data() + zv.size());
  if (!spec.bounds.contains(coords)) return -std::numeric_limits<double>::infinity();
  const double cov = spec.coverage(EnvPoint(std::move(coords)));
  const double penalty = std::max(0.0, spec.coverage_threshold - cov);
  return prior - penalty;
}

namespace {

struct CachingDensity {
  const PosteriorSpec& spec;
  std::unordered_map<QuantizedPoint, double, QuantizedPointHash> coverage_cache;

  double coverage_at(const Eigen::VectorXd& zv) {
    const QuantizedPoint key = quantize(zv);
    auto it = coverage_cache.find(key);
    if (it != coverage_cache.end()) return it->second;
    const double cov = spec.coverage(EnvPoint(std::vector<double>(zv.data(), zv.data() + zv.size())));
    coverage_cache.emplace(key, cov);
    return cov;
  }

  double operator()(const Eigen::VectorXd& w) {
    if (spec.log_density_override) return spec.log_density_override(w);
    const double prior = spec.mixture->log_density(w, 2);
    if (spec.coverage_disabled()) return prior;
    const Eigen::VectorXd zv = spec.flow->forward(w);
    std::vector<double> coords(zv.data(), zv.data() + zv.size());
    if (!spec.bounds.contains(coords)) return -std::numeric_limits<double>::infinity();
    const double penalty = std::max(0.0, spec.coverage_threshold - coverage_at(zv));
    return prior - penalty;
  }
};

double pilot_tune(const PosteriorSpec& spec, const SamplerConfig& config, std::uint64_t run_seed,
                  CachingDensity& density) {
  const int d = static_cast<int>(spec.center.size());
  const double base = spec.mixture ? std::sqrt(spec.mixture->variance) : 1.0;
  const std::vector<double> ladder = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2};
  double best_std = base;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < ladder.size(); ++c) {
    const double prop = ladder[c] * base;
    auto gen = rng::stream(run_seed, rng::Stage::SamplePilot, c);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Eigen::VectorXd w = spec.center;
    double logp = density(w);
    int accepted = 0;
    for (int t = 0; t < config.pilot_steps; ++t) {
      Eigen::VectorXd prop_w(d);
      for (int j = 0; j < d; ++j) prop_w(j) = w(j) + prop * gauss(gen);
      prop_w = project(prop_w, spec.center, spec.radius);
      const double lp = density(prop_w);
      if (std::log(uni(gen)) < lp - logp) {
        w = prop_w;
        logp = lp;
        ++accepted;
      }
    }
    const double rate = static_cast<double>(accepted) / config.pilot_steps;
    const double gap = std::abs(rate - 0.3);
    if (gap < best_gap) {
      best_gap = gap;
      best_std = prop;
    }
  }
  return best_std;
}

}  // namespace

CoverageSet mh_chain(const PosteriorSpec& spec, const SamplerConfig& config,
                     std::uint64_t run_seed) {
  const bool filtered = !spec.coverage_disabled() && !spec.log_density_override;
  if (spec.mixture == nullptr && !spec.log_density_override)
    throw std::invalid_argument("mh_chain: mixture required");
  if (filtered && (spec.flow == nullptr || !spec.coverage))
    throw std::invalid_argument("mh_chain: flow and coverage function required");
  if (!(spec.radius > 0.0)) throw std::invalid_argument("mh_chain: radius must be positive");
  if (config.steps <= config.burn_in)
    throw std::invalid_argument("mh_chain: chain length must exceed burn-in");

  const int d = static_cast<int>(spec.center.size());
  CachingDensity density{spec, {}};
  const double prop_std = config.proposal_std > 0.0
                              ? config.proposal_std
                              : pilot_tune(spec, config, run_seed, density);

  CoverageSet out;
  std::uint64_t post_accepted = 0, post_total = 0;
  for (int chain = 0; chain < config.chains; ++chain) {
    auto gen = rng::stream(run_seed, rng::Stage::Sample, static_cast<std::uint64_t>(chain));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    Eigen::VectorXd w(d);
    for (int j = 0; j < d; ++j) w(j) = spec.center(j) + prop_std * gauss(gen);
    w = project(w, spec.center, spec.radius);
    double logp = density(w);

    for (int t = 0; t < config.steps; ++t) {
      Eigen::VectorXd prop_w(d);
      for (int j = 0; j < d; ++j) prop_w(j) = w(j) + prop_std * gauss(gen);
      const Eigen::VectorXd projected = project(prop_w, spec.center, spec.radius);
      if ((projected - prop_w).squaredNorm() > 0.0) ++out.projections_applied;
      const double lp = density(projected);
      const bool accept = std::log(uni(gen)) < lp - logp;
      if (accept) {
        w = projected;
        logp = lp;
      }
      ++out.chain_length;
      if (t >= config.burn_in) {
        ++post_total;
        if (accept) ++post_accepted;
        if ((t - config.burn_in) % config.thin == 0) {
          out.latent_samples.push_back(w);
          if (filtered) {
            const Eigen::VectorXd zv = spec.flow->forward(w);
            std::vector<double> coords(zv.data(), zv.data() + zv.size());
            if (spec.bounds.contains(coords)) {
              const double cov = density.coverage_at(zv);
              EnvPoint z(std::move(coords));
              if (cov > spec.coverage_threshold &&
                  classify(*spec.flow, *spec.mixture, z).cls == 2) {
                out.points.push_back(std::move(z));
                out.coverage_values.push_back(cov);
              }
            }
          }
        }
      }
    }
  }
  out.acceptance_rate = post_total ? static_cast<double>(post_accepted) / post_total : 0.0;
  out.low_acceptance_warning = out.acceptance_rate < 0.01;
  if (filtered && out.points.empty())
    throw std::runtime_error(
        "mh_chain: no coverage-qualified samples found; lower the coverage threshold or "
        "enlarge the projection radius");
  return out;
}

std::vector<EnvPoint> select_initial(const CoverageSet& zcov, int n1, std::uint64_t run_seed) {
  const std::size_t n = zcov.points.size();
  if (n1 < 1 || static_cast<std::size_t>(n1) > n)
    throw std::invalid_argument("select_initial: need 1 <= N1 <= |Z_cov|, got N1=" +
                                std::to_string(n1) + " with |Z_cov|=" + std::to_string(n));
  const std::size_t d = zcov.points[0].dim();
  Eigen::MatrixXd pts(d, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) pts(j, i) = zcov.points[i][j];
  if (static_cast<std::size_t>(n1) == n) return zcov.points;

  auto gen = rng::stream(run_seed, rng::Stage::Cluster, 0);
  const KMeansResult km = kmeans(pts, n1, gen, 50);
  const std::vector<std::size_t> members = nearest_members(pts, km.centroids);
  std::vector<EnvPoint> out;
  out.reserve(members.size());
  for (std::size_t i : members) out.push_back(zcov.points[i]);
  return out;
}

std::vector<RiskSample> run_initial_demos(const TrueRiskFn& true_risk, Budget& budget,
                                          const std::vector<EnvPoint>& z1,
                                          std::uint64_t run_seed) {
  if (budget.remaining() < static_cast<int>(z1.size()))
    throw BudgetExhausted("run_initial_demos: budget has " + std::to_string(budget.remaining()) +
                          " queries left, need " + std::to_string(z1.size()));
  std::vector<RiskSample> out;
  out.reserve(z1.size());
  for (std::size_t i = 0; i < z1.size(); ++i) {
    budget.consume(1);
    const double r =
        true_risk(z1[i], rng::substream_seed(run_seed,
                                             static_cast<std::uint64_t>(rng::Stage::DemoInit), i));
    out.push_back(RiskSample{z1[i], r, RolloutSource::True});
  }
  return out;
}

void write_coverage_csv(const CoverageSet& zcov, const std::string& path) {
  csv::Writer w(path, {"z1", "z2", "coverage"});
  for (std::size_t i = 0; i < zcov.points.size(); ++i) {
    w.field(zcov.points[i][0]);
    w.field(zcov.points[i][1]);
    w.field(zcov.coverage_values[i]);
    w.end_row();
  }
}

void write_points_csv(const std::vector<EnvPoint>& pts, const std::string& path) {
  csv::Writer w(path, {"z1", "z2"});
  for (const auto& p : pts) {
    w.field(p[0]);
    w.field(p[1]);
    w.end_row();
  }
}

std::vector<EnvPoint> read_points_csv(const std::string& path) {
  const csv::Table t = csv::read(path);
  const std::size_t c1 = t.column("z1"), c2 = t.column("z2");
  std::vector<EnvPoint> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows)
    out.emplace_back(std::vector<double>{csv::parse_double(row[c1]), csv::parse_double(row[c2])});
  return out;
}

}  // namespace failcast
