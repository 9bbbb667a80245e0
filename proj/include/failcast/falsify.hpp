#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "failcast/types.hpp"

namespace failcast {

// Raw risk of one model rollout at (z, disturbance), seeded per cell.
using ModelRiskFn =
    std::function<double(const EnvPoint& z, const DisturbanceLevel& d, std::uint64_t seed)>;

// Grid-times-levels risk sweep with per-point labels. risk_table holds
// normalized risks when the spec carries a normalizer.
struct FalsificationDataset {
  std::vector<EnvPoint> grid;
  std::vector<DisturbanceLevel> levels;  // levels[0] is the (0,0) entry
  std::vector<std::vector<double>> risk_table;  // [grid index][level index]
  std::vector<RiskLabel> labels;
  RiskSpec risk_spec;

  std::vector<std::size_t> risk_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != RiskLabel::Safe) idx.push_back(i);
    return idx;
  }
};

// Full Cartesian lattice over the box, endpoints included on every axis.
std::vector<EnvPoint> grid_samples(const Bounds& bounds, int n_per_axis);

// Log-uniformly spaced lattice over the disturbance box, with the
// distinguished (0,0) level prepended. Endpoints are exact.
std::vector<DisturbanceLevel> disturbance_grid(const DisturbanceBox& box, int levels_per_axis);

// One seeded rollout per (grid point, level); labels derived from the
// normalized risk table. Divergent rollouts enter as max-risk, never abort.
FalsificationDataset label_grid(const ModelRiskFn& model_risk, const RiskSpec& spec,
                                std::vector<EnvPoint> grid, std::vector<DisturbanceLevel> levels,
                                std::uint64_t run_seed, int threads = 0);

// M model-side samples drawn without replacement from the risk-labeled grid
// points. FailF points carry their zero-noise risk, NoiseFail points the
// minimum over nonzero levels.
std::vector<RiskSample> extract_model_dataset(const FalsificationDataset& fd, std::size_t M,
                                              std::uint64_t run_seed);

void write_falsify_csv(const FalsificationDataset& fd, const std::string& path);
FalsificationDataset read_falsify_csv(const std::string& path, const RiskSpec& spec);

void write_risk_samples_csv(const std::vector<RiskSample>& samples, const std::string& path);
std::vector<RiskSample> read_risk_samples_csv(const std::string& path);

}  // namespace failcast
