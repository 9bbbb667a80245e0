#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "failcast/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"failure discovery and risk prediction pipeline"};

  std::string config_path;
  std::string stage = "all";
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  app.add_option("--config", config_path, "pipeline config file (JSON)")->required();
  app.add_option("--stage", stage,
                 "stage to run: falsify, flow, sample, demo-init, refine, evaluate, report, all");
  app.add_flag("--force", force, "re-run the stage even if cached artifacts are current");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");
  std::string out_value;
  auto* out_opt = app.add_option("--out", out_value, "override the config output directory");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) seed = seed_value;
  if (*out_opt) out_dir = out_value;

  try {
    const failcast::PipelineConfig config = failcast::load_config(config_path, seed, out_dir);
    const auto outcomes = failcast::run_pipeline(config, stage, force);
    for (const auto& o : outcomes) {
      if (o.cached) {
        std::cout << "[cached] " << o.stage << "\n";
      } else {
        std::cout << "[done]   " << o.stage << " (" << o.wall_seconds << " s)";
        for (const auto& a : o.artifacts) std::cout << " " << a;
        std::cout << "\n";
      }
    }
    std::cout << "run dir: " << config.out_dir << "\n";
    return 0;
  } catch (const failcast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const failcast::OrderingError& e) {
    std::cerr << "ordering error: " << e.what() << "\n";
    return 3;
  } catch (const failcast::BudgetExhausted& e) {
    std::cerr << "budget error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
