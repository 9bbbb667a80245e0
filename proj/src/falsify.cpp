#include "failcast/falsify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "failcast/csvio.hpp"
#include "failcast/rng.hpp"

namespace failcast {

std::vector<EnvPoint> grid_samples(const Bounds& bounds, int n_per_axis) {
  bounds.validate();
  if (n_per_axis < 2) throw std::invalid_argument("grid_samples: need n_per_axis >= 2");
  const std::size_t d = bounds.dim();
  std::vector<std::vector<double>> axes(d);
  for (std::size_t j = 0; j < d; ++j) {
    axes[j].resize(n_per_axis);
    for (int i = 0; i < n_per_axis; ++i)
      axes[j][i] = bounds.lo[j] + (bounds.hi[j] - bounds.lo[j]) * i / (n_per_axis - 1);
    axes[j].front() = bounds.lo[j];
    axes[j].back() = bounds.hi[j];
  }
  std::size_t total = 1;
  for (std::size_t j = 0; j < d; ++j) total *= axes[j].size();
  std::vector<EnvPoint> out;
  out.reserve(total);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t c = 0; c < total; ++c) {
    std::vector<double> coords(d);
    for (std::size_t j = 0; j < d; ++j) coords[j] = axes[j][idx[j]];
    out.emplace_back(std::move(coords));
    for (std::size_t j = d; j-- > 0;) {
      if (++idx[j] < axes[j].size()) break;
      idx[j] = 0;
    }
  }
  return out;
}

std::vector<DisturbanceLevel> disturbance_grid(const DisturbanceBox& box, int levels_per_axis) {
  box.validate();
  if (levels_per_axis < 1) throw std::invalid_argument("disturbance_grid: need >= 1 level");
  auto log_axis = [levels_per_axis](double lo, double hi) {
    std::vector<double> v(levels_per_axis);
    if (levels_per_axis == 1) {
      v[0] = lo;
      return v;
    }
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < levels_per_axis; ++i)
      v[i] = std::exp(llo + (lhi - llo) * i / (levels_per_axis - 1));
    v.front() = lo;
    v.back() = hi;
    return v;
  };
  const auto a1 = log_axis(box.sigma1_min, box.sigma1_max);
  const auto a2 = log_axis(box.sigma2_min, box.sigma2_max);
  std::vector<DisturbanceLevel> out;
  out.reserve(1 + a1.size() * a2.size());
  out.push_back(DisturbanceLevel{0.0, 0.0});
  for (double s1 : a1)
    for (double s2 : a2) out.push_back(DisturbanceLevel{s1, s2});
  return out;
}

namespace {

RiskLabel derive_label(const std::vector<double>& row, double normalized_threshold) {
  if (row[0] > normalized_threshold) return RiskLabel::FailF;
  bool all_fail = row.size() > 1;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (!(row[j] > normalized_threshold)) {
      all_fail = false;
      break;
    }
  }
  return all_fail ? RiskLabel::NoiseFail : RiskLabel::Safe;
}

}  // namespace

FalsificationDataset label_grid(const ModelRiskFn& model_risk, const RiskSpec& spec,
                                std::vector<EnvPoint> grid, std::vector<DisturbanceLevel> levels,
                                std::uint64_t run_seed, int threads) {
  if (levels.empty() || !levels[0].is_zero())
    throw std::invalid_argument("label_grid: levels[0] must be the (0,0) entry");
  FalsificationDataset fd;
  fd.grid = std::move(grid);
  fd.levels = std::move(levels);
  fd.risk_spec = spec;
  const std::size_t n = fd.grid.size();
  const std::size_t L = fd.levels.size();
  fd.risk_table.assign(n, std::vector<double>(L, 0.0));

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        const std::uint64_t cell_seed = rng::substream_seed(
            run_seed, static_cast<std::uint64_t>(rng::Stage::Falsify), i * L + j);
        double raw;
        try {
          raw = model_risk(fd.grid[i], fd.levels[j], cell_seed);
        } catch (const std::exception&) {
          raw = std::numeric_limits<double>::max();
        }
        if (!std::isfinite(raw)) raw = std::numeric_limits<double>::max();
        fd.risk_table[i][j] = spec.normalize(raw);
      }
    }
  };

  int nthreads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min<int>(nthreads, static_cast<int>(n)));
  if (nthreads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  const double nth = spec.normalized_threshold();
  fd.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) fd.labels.push_back(derive_label(fd.risk_table[i], nth));
  return fd;
}

std::vector<RiskSample> extract_model_dataset(const FalsificationDataset& fd, std::size_t M,
                                              std::uint64_t run_seed) {
  const std::vector<std::size_t> risk_idx = fd.risk_indices();
  if (M > risk_idx.size())
    throw std::invalid_argument("extract_model_dataset: requested " + std::to_string(M) +
                                " samples but only " + std::to_string(risk_idx.size()) +
                                " risk-labeled points exist");
  std::vector<std::size_t> chosen = risk_idx;
  auto gen = rng::stream(run_seed, rng::Stage::Falsify, std::uint64_t{1} << 40);
  std::shuffle(chosen.begin(), chosen.end(), gen);
  chosen.resize(M);
  std::sort(chosen.begin(), chosen.end());

  std::vector<RiskSample> out;
  out.reserve(M);
  for (std::size_t i : chosen) {
    double risk;
    if (fd.labels[i] == RiskLabel::FailF) {
      risk = fd.risk_table[i][0];
    } else {
      risk = std::numeric_limits<double>::infinity();
      for (std::size_t j = 1; j < fd.levels.size(); ++j)
        risk = std::min(risk, fd.risk_table[i][j]);
    }
    out.push_back(RiskSample{fd.grid[i], risk, RolloutSource::Model});
  }
  return out;
}

void write_falsify_csv(const FalsificationDataset& fd, const std::string& path) {
  csv::Writer w(path, {"z1", "z2", "level", "sigma1", "sigma2", "risk", "label"});
  for (std::size_t i = 0; i < fd.grid.size(); ++i) {
    for (std::size_t j = 0; j < fd.levels.size(); ++j) {
      w.field(fd.grid[i][0]);
      w.field(fd.grid[i][1]);
      w.field(static_cast<int>(j));
      w.field(fd.levels[j].sigma1);
      w.field(fd.levels[j].sigma2);
      w.field(fd.risk_table[i][j]);
      w.field(to_string(fd.labels[i]));
      w.end_row();
    }
  }
}

FalsificationDataset read_falsify_csv(const std::string& path, const RiskSpec& spec) {
  const csv::Table t = csv::read(path);
  const std::size_t c_z1 = t.column("z1"), c_z2 = t.column("z2"), c_level = t.column("level");
  const std::size_t c_s1 = t.column("sigma1"), c_s2 = t.column("sigma2");
  const std::size_t c_risk = t.column("risk"), c_label = t.column("label");

  FalsificationDataset fd;
  fd.risk_spec = spec;
  for (const auto& row : t.rows) {
    const std::size_t level = static_cast<std::size_t>(std::stoul(row[c_level]));
    if (level == 0) {
      fd.grid.emplace_back(
          std::vector<double>{csv::parse_double(row[c_z1]), csv::parse_double(row[c_z2])});
      fd.labels.push_back(risk_label_from_string(row[c_label]));
      fd.risk_table.emplace_back();
    }
    if (fd.grid.size() == 1)
      fd.levels.push_back(
          DisturbanceLevel{csv::parse_double(row[c_s1]), csv::parse_double(row[c_s2])});
    fd.risk_table.back().push_back(csv::parse_double(row[c_risk]));
  }
  return fd;
}

void write_risk_samples_csv(const std::vector<RiskSample>& samples, const std::string& path) {
  csv::Writer w(path, {"z1", "z2", "risk", "source"});
  for (const auto& s : samples) {
    w.field(s.z[0]);
    w.field(s.z[1]);
    w.field(s.risk);
    w.field(s.source == RolloutSource::Model ? std::string("Model") : std::string("True"));
    w.end_row();
  }
}

std::vector<RiskSample> read_risk_samples_csv(const std::string& path) {
  const csv::Table t = csv::read(path);
  const std::size_t c_z1 = t.column("z1"), c_z2 = t.column("z2");
  const std::size_t c_risk = t.column("risk"), c_src = t.column("source");
  std::vector<RiskSample> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    RiskSample s;
    s.z = EnvPoint({csv::parse_double(row[c_z1]), csv::parse_double(row[c_z2])});
    s.risk = csv::parse_double(row[c_risk]);
    s.source = row[c_src] == "True" ? RolloutSource::True : RolloutSource::Model;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace failcast
