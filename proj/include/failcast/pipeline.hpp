#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "failcast/config.hpp"

namespace failcast {

class OrderingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stage names, in execution order.
const std::vector<std::string>& pipeline_stages();

struct StageOutcome {
  std::string stage;
  bool cached = false;
  double wall_seconds = 0.0;
  std::vector<std::string> artifacts;
};

// Runs one stage (or "all"), validating upstream artifacts against the
// manifest and reusing completed work unless force is set.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, const std::string& stage,
                                       bool force);

// Accuracy report produced by the evaluate stage.
struct EvalReport {
  int n_test = 0;
  int fail_count = 0;
  int not_fail_count = 0;
  double sim_fail_recall = 0.0;
  double sim_not_fail_accuracy = 0.0;
  double simexp_fail_recall = 0.0;
  double simexp_not_fail_accuracy = 0.0;
};

EvalReport read_eval_report(const std::string& run_dir);

}  // namespace failcast
