#pragma once

#include <cstdint>
#include <memory>

#include "failcast/bicycle.hpp"
#include "failcast/synthetic.hpp"
#include "failcast/types.hpp"

namespace failcast {

// What every pipeline stage needs from a closed-loop system pair: raw model
// risk under a disturbance, raw true-system risk, and a coverage score
// evaluated on the zero-noise model rollout.
class Benchmark {
 public:
  virtual ~Benchmark() = default;

  virtual const Bounds& bounds() const = 0;
  virtual double model_risk(const EnvPoint& z, const DisturbanceLevel& d,
                            std::uint64_t seed) const = 0;
  virtual double true_risk(const EnvPoint& z, std::uint64_t seed) const = 0;
  virtual double coverage(const EnvPoint& z) const = 0;
};

class BicycleBenchmark final : public Benchmark {
 public:
  BicycleBenchmark(Bounds bounds, BicycleParams params, LqrWeights weights)
      : bounds_(std::move(bounds)), params_(params), weights_(std::move(weights)) {
    bounds_.validate();
    params_.validate();
  }

  const Bounds& bounds() const override { return bounds_; }
  const BicycleParams& params() const { return params_; }

  double model_risk(const EnvPoint& z, const DisturbanceLevel& d,
                    std::uint64_t seed) const override {
    const Rollout r = simulate_model(z, d, seed, params_, weights_);
    return path_tracking_risk(r, SinePath::build(z[0]));
  }

  double true_risk(const EnvPoint& z, std::uint64_t seed) const override {
    const Rollout r = simulate_true(z, seed, params_, weights_);
    return path_tracking_risk(r, SinePath::build(z[0]));
  }

  // Steering-angle range of the zero-noise model rollout.
  double coverage(const EnvPoint& z) const override;

 private:
  Bounds bounds_;
  BicycleParams params_;
  LqrWeights weights_;
};

class SyntheticBenchmark final : public Benchmark {
 public:
  explicit SyntheticBenchmark(SyntheticSpec spec) : spec_(std::move(spec)) {
    spec_.bounds.validate();
  }

  const Bounds& bounds() const override { return spec_.bounds; }
  const SyntheticSpec& spec() const { return spec_; }

  double model_risk(const EnvPoint& z, const DisturbanceLevel& d,
                    std::uint64_t seed) const override {
    return spec_.noisy_model_risk(z, d, seed);
  }

  double true_risk(const EnvPoint& z, std::uint64_t) const override { return spec_.true_risk(z); }

  double coverage(const EnvPoint& z) const override { return spec_.coverage(z); }

 private:
  SyntheticSpec spec_;
};

}  // namespace failcast
