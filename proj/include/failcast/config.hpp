#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "failcast/benchmark.hpp"
#include "failcast/flow.hpp"
#include "failcast/gpr.hpp"
#include "failcast/sampler.hpp"
#include "failcast/types.hpp"

namespace failcast {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::string benchmark_id;  // "synthetic" or "bicycle"
  SyntheticSpec synthetic;
  BicycleParams bicycle;
  LqrWeights lqr_weights;

  Bounds bounds;
  int grid_per_axis = 30;

  DisturbanceBox disturbance_box;
  int disturbance_levels_per_axis = 5;

  double risk_threshold = 0.0;  // raw units
  bool sigmoid_normalize = false;
  double sigmoid_scale = 1.0;

  double coverage_threshold = 0.0;

  int budget_total = 0;
  int budget_initial = 0;

  int model_dataset_size = 50;  // M, clamped to the risk-set size

  FlowConfig flow;
  SamplerConfig sampler;
  GprConfig gpr;

  int n_test = 20;
  std::uint64_t seed = 0;
  std::string out_dir;

  // Risk spec applied to every raw simulator risk before storage.
  RiskSpec risk_spec() const {
    RiskSpec spec;
    spec.threshold = risk_threshold;
    if (sigmoid_normalize)
      spec.normalizer = SigmoidNormalizer{risk_threshold, sigmoid_scale};
    return spec;
  }

  // Threshold in stored (possibly normalized) units.
  double stored_threshold() const { return risk_spec().normalized_threshold(); }

  std::unique_ptr<Benchmark> make_benchmark() const;
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path,
                           std::optional<std::uint64_t> seed_override = std::nullopt,
                           std::optional<std::string> out_override = std::nullopt);

// FNV-1a over the canonical serialized form, including any overrides.
std::string config_hash(const PipelineConfig& config);

std::string serialize_config(const PipelineConfig& config);

}  // namespace failcast
