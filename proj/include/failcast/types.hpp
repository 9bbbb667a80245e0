#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace failcast {

// Axis-aligned closed box in R^d. All search-space points live inside one.
struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }

  bool contains(const std::vector<double>& coords) const {
    if (coords.size() != lo.size()) return false;
    for (std::size_t j = 0; j < coords.size(); ++j) {
      if (!(coords[j] >= lo[j] && coords[j] <= hi[j])) return false;
    }
    return true;
  }

  void validate() const {
    if (lo.empty() || lo.size() != hi.size())
      throw std::invalid_argument("Bounds: lo/hi must be nonempty and of equal dimension");
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (!(lo[j] < hi[j]))
        throw std::invalid_argument("Bounds: lo must be strictly below hi on every axis");
    }
  }
};

// Environment variable z. Constructors validate against the search box.
struct EnvPoint {
  std::vector<double> coords;

  EnvPoint() = default;
  explicit EnvPoint(std::vector<double> c) : coords(std::move(c)) {}
  EnvPoint(std::vector<double> c, const Bounds& b) : coords(std::move(c)) {
    if (!b.contains(coords)) throw std::invalid_argument("EnvPoint: coordinates out of bounds");
  }

  double operator[](std::size_t j) const { return coords[j]; }
  std::size_t dim() const { return coords.size(); }
};

// Per-rollout noise scales: sigma1 drives the dynamics disturbance,
// sigma2 the measurement disturbance fed to the policy.
struct DisturbanceLevel {
  double sigma1 = 0.0;
  double sigma2 = 0.0;

  bool is_zero() const { return sigma1 == 0.0 && sigma2 == 0.0; }
};

// Rectangular box of admissible nonzero disturbance scales.
struct DisturbanceBox {
  double sigma1_min = 0.0, sigma1_max = 0.0;
  double sigma2_min = 0.0, sigma2_max = 0.0;

  void validate() const {
    if (!(sigma1_min > 0.0 && sigma1_min <= sigma1_max))
      throw std::invalid_argument("DisturbanceBox: need 0 < sigma1_min <= sigma1_max");
    if (!(sigma2_min > 0.0 && sigma2_min <= sigma2_max))
      throw std::invalid_argument("DisturbanceBox: need 0 < sigma2_min <= sigma2_max");
  }

  bool contains(const DisturbanceLevel& d) const {
    return d.sigma1 >= sigma1_min && d.sigma1 <= sigma1_max && d.sigma2 >= sigma2_min &&
           d.sigma2 <= sigma2_max;
  }
};

enum class RolloutSource { Model, True };

// One simulated closed-loop trajectory.
struct Rollout {
  std::vector<std::vector<double>> states;  // length T+1
  std::vector<std::vector<double>> inputs;  // length T
  std::map<std::string, std::vector<double>> aux;  // named per-step channels, length T
  DisturbanceLevel disturbance;
  std::uint64_t seed = 0;
  RolloutSource source = RolloutSource::Model;
  bool diverged = false;

  std::size_t steps() const { return inputs.size(); }

  bool consistent() const {
    if (states.size() != inputs.size() + 1) return false;
    for (const auto& [name, chan] : aux) {
      (void)name;
      if (chan.size() != inputs.size()) return false;
    }
    return true;
  }
};

// Optional monotone squashing of raw risk values. Maps the configured
// center to exactly 0.5.
struct SigmoidNormalizer {
  double center = 0.0;
  double scale = 1.0;

  double operator()(double r) const { return 1.0 / (1.0 + std::exp(-(r - center) / scale)); }
};

struct RiskSpec {
  double threshold = 0.0;
  std::optional<SigmoidNormalizer> normalizer;

  double normalize(double r) const { return normalizer ? (*normalizer)(r) : r; }
  double normalized_threshold() const { return normalize(threshold); }
};

// Failure test: strict inequality, normalization applied to both sides.
bool is_failure(double risk, const RiskSpec& spec);

enum class RiskLabel { FailF, NoiseFail, Safe };

std::string to_string(RiskLabel label);
RiskLabel risk_label_from_string(const std::string& s);

struct RiskSample {
  EnvPoint z;
  double risk = 0.0;
  RolloutSource source = RolloutSource::Model;
};

class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// True-system query ledger. Training queries are capped at N; evaluation
// queries are counted separately and never debit the training budget.
class Budget {
 public:
  Budget(int total, int initial) : total_(total), initial_(initial) {
    if (total <= 0 || initial <= 0 || initial >= total)
      throw std::invalid_argument("Budget: need 0 < N1 < N");
  }

  int total() const { return total_; }
  int initial() const { return initial_; }
  int refine() const { return total_ - initial_; }

  int used() const {
    std::lock_guard<std::mutex> lk(mu_);
    return used_;
  }
  int eval_used() const {
    std::lock_guard<std::mutex> lk(mu_);
    return eval_used_;
  }
  int remaining() const {
    std::lock_guard<std::mutex> lk(mu_);
    return total_ - used_;
  }

  void consume(int n = 1) {
    std::lock_guard<std::mutex> lk(mu_);
    if (used_ + n > total_)
      throw BudgetExhausted("budget exhausted: " + std::to_string(used_) + "+" +
                            std::to_string(n) + " > N=" + std::to_string(total_));
    used_ += n;
  }

  void consume_eval(int n = 1) {
    std::lock_guard<std::mutex> lk(mu_);
    eval_used_ += n;
  }

  void restore(int used, int eval_used) {
    std::lock_guard<std::mutex> lk(mu_);
    used_ = used;
    eval_used_ = eval_used;
  }

 private:
  int total_;
  int initial_;
  int used_ = 0;
  int eval_used_ = 0;
  mutable std::mutex mu_;
};

}  // namespace failcast
