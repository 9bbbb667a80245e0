#include "failcast/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace failcast {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError("config: " + msg);
}

}  // namespace

std::unique_ptr<Benchmark> PipelineConfig::make_benchmark() const {
  if (benchmark_id == "synthetic") {
    SyntheticSpec spec = synthetic;
    spec.bounds = bounds;
    spec.box = disturbance_box;
    spec.risk_threshold = risk_threshold;
    spec.coverage_threshold = coverage_threshold;
    return std::make_unique<SyntheticBenchmark>(spec);
  }
  if (benchmark_id == "bicycle")
    return std::make_unique<BicycleBenchmark>(bounds, bicycle, lqr_weights);
  throw ConfigError("config: unknown benchmark id '" + benchmark_id + "'");
}

PipelineConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }

  PipelineConfig c;
  require(j.contains("benchmark") && j["benchmark"].contains("id"),
          "benchmark.id is required");
  c.benchmark_id = j["benchmark"]["id"].get<std::string>();
  require(c.benchmark_id == "synthetic" || c.benchmark_id == "bicycle",
          "benchmark.id must be 'synthetic' or 'bicycle'");

  require(j.contains("bounds"), "bounds are required");
  c.bounds.lo = j["bounds"].at("lo").get<std::vector<double>>();
  c.bounds.hi = j["bounds"].at("hi").get<std::vector<double>>();
  try {
    c.bounds.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const json& b = j["benchmark"];
  if (c.benchmark_id == "synthetic") {
    SyntheticSpec& s = c.synthetic;
    s.model_center = get_or(b, "model_center", std::array<double, 2>{2.5, 2.5});
    s.model_sigma = get_or(b, "model_sigma", 1.8);
    s.model_amplitude = get_or(b, "model_amplitude", 2.0);
    s.gap_corner = get_or(b, "gap_corner", std::array<double, 2>{5.5, 3.0});
    s.gap_falloff = get_or(b, "gap_falloff", 0.8);
    s.gap_amplitude = get_or(b, "gap_amplitude", 1.5);
    s.noise_floor = get_or(b, "noise_floor", 0.05);
    s.noise_gain1 = get_or(b, "noise_gain1", 0.3);
    s.noise_gain2 = get_or(b, "noise_gain2", 0.15);
  } else {
    BicycleParams& p = c.bicycle;
    p.wheelbase = get_or(b, "wheelbase", p.wheelbase);
    p.dt = get_or(b, "dt", p.dt);
    p.horizon = get_or(b, "horizon", p.horizon);
    p.steer_limit = get_or(b, "steer_limit", p.steer_limit);
    p.accel_limit = get_or(b, "accel_limit", p.accel_limit);
    p.substeps = get_or(b, "substeps", p.substeps);
    p.cornering_stiffness_front =
        get_or(b, "cornering_stiffness_front", p.cornering_stiffness_front);
    p.cornering_stiffness_rear =
        get_or(b, "cornering_stiffness_rear", p.cornering_stiffness_rear);
    p.mass = get_or(b, "mass", p.mass);
    p.yaw_inertia = get_or(b, "yaw_inertia", p.yaw_inertia);
    p.actuator_lag = get_or(b, "actuator_lag", p.actuator_lag);
    p.split_front = get_or(b, "split_front", p.split_front);
    try {
      p.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    require(c.bounds.dim() == 2, "bicycle benchmark needs 2-d bounds [width, speed]");
    require(c.bounds.lo[1] > 0.0, "bicycle reference speed lower bound must be positive");
  }

  if (j.contains("grid")) c.grid_per_axis = get_or(j["grid"], "n_per_axis", 30);
  require(c.grid_per_axis >= 2, "grid.n_per_axis must be >= 2");

  require(j.contains("disturbance"), "disturbance box is required");
  const auto s1 = j["disturbance"].at("sigma1").get<std::vector<double>>();
  const auto s2 = j["disturbance"].at("sigma2").get<std::vector<double>>();
  require(s1.size() == 2 && s2.size() == 2, "disturbance.sigma1/sigma2 must be [min, max]");
  c.disturbance_box = DisturbanceBox{s1[0], s1[1], s2[0], s2[1]};
  try {
    c.disturbance_box.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.disturbance_levels_per_axis = get_or(j["disturbance"], "levels_per_axis", 5);
  require(c.disturbance_levels_per_axis >= 1, "disturbance.levels_per_axis must be >= 1");

  require(j.contains("risk") && j["risk"].contains("threshold"), "risk.threshold is required");
  c.risk_threshold = j["risk"]["threshold"].get<double>();
  require(std::isfinite(c.risk_threshold), "risk.threshold must be finite");
  c.sigmoid_normalize = get_or(j["risk"], "sigmoid", false);
  c.sigmoid_scale = get_or(j["risk"], "sigmoid_scale", 1.0);
  require(c.sigmoid_scale > 0.0, "risk.sigmoid_scale must be positive");

  require(j.contains("coverage") && j["coverage"].contains("threshold"),
          "coverage.threshold is required");
  c.coverage_threshold = j["coverage"]["threshold"].get<double>();
  require(std::isfinite(c.coverage_threshold), "coverage.threshold must be finite");

  require(j.contains("budget"), "budget is required");
  c.budget_total = j["budget"].at("total").get<int>();
  c.budget_initial = j["budget"].at("initial").get<int>();
  require(c.budget_total > 0 && c.budget_initial > 0 && c.budget_initial < c.budget_total,
          "budget needs 0 < initial < total");

  if (j.contains("model_dataset"))
    c.model_dataset_size = get_or(j["model_dataset"], "size", 50);
  require(c.model_dataset_size >= 1, "model_dataset.size must be >= 1");

  if (j.contains("flow")) {
    const json& f = j["flow"];
    c.flow.layers = get_or(f, "layers", c.flow.layers);
    c.flow.hidden = get_or(f, "hidden", c.flow.hidden);
    c.flow.epochs = get_or(f, "epochs", c.flow.epochs);
    c.flow.learning_rate = get_or(f, "learning_rate", c.flow.learning_rate);
    c.flow.scale_cap = get_or(f, "scale_cap", c.flow.scale_cap);
    c.flow.early_stop_tol = get_or(f, "early_stop_tol", c.flow.early_stop_tol);
    c.flow.early_stop_window = get_or(f, "early_stop_window", c.flow.early_stop_window);
    c.flow.latent_mean = get_or(f, "latent_mean", c.flow.latent_mean);
  }

  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    c.sampler.chains = get_or(s, "chains", c.sampler.chains);
    c.sampler.steps = get_or(s, "steps", c.sampler.steps);
    c.sampler.burn_in = get_or(s, "burn_in", c.sampler.burn_in);
    c.sampler.thin = get_or(s, "thin", c.sampler.thin);
    c.sampler.proposal_std = get_or(s, "proposal_std", c.sampler.proposal_std);
    c.sampler.radius = get_or(s, "radius", c.sampler.radius);
    c.sampler.radius_mass = get_or(s, "radius_mass", c.sampler.radius_mass);
    c.sampler.pilot_steps = get_or(s, "pilot_steps", c.sampler.pilot_steps);
  }
  require(c.sampler.steps > c.sampler.burn_in, "sampler.steps must exceed sampler.burn_in");
  require(c.sampler.thin >= 1, "sampler.thin must be >= 1");

  if (j.contains("gpr")) {
    const json& g = j["gpr"];
    c.gpr.starts = get_or(g, "starts", c.gpr.starts);
    c.gpr.iters = get_or(g, "iters", c.gpr.iters);
    c.gpr.grad_tol = get_or(g, "grad_tol", c.gpr.grad_tol);
    c.gpr.learning_rate = get_or(g, "learning_rate", c.gpr.learning_rate);
    c.gpr.noise_floor = get_or(g, "noise_floor", c.gpr.noise_floor);
    c.gpr.prior_mean = get_or(g, "prior_mean", c.gpr.prior_mean);
  }

  if (j.contains("evaluate")) c.n_test = get_or(j["evaluate"], "n_test", 20);
  require(c.n_test >= 1, "evaluate.n_test must be >= 1");

  c.seed = get_or(j, "seed", std::uint64_t{0});
  c.out_dir = get_or(j, "out_dir", std::string("runs/") + c.benchmark_id);
  return c;
}

PipelineConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override,
                           std::optional<std::string> out_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig c = parse_config_text(ss.str());
  if (seed_override) c.seed = *seed_override;
  if (out_override) c.out_dir = *out_override;
  return c;
}

std::string serialize_config(const PipelineConfig& c) {
  json j;
  j["benchmark"]["id"] = c.benchmark_id;
  if (c.benchmark_id == "synthetic") {
    const SyntheticSpec& s = c.synthetic;
    j["benchmark"]["model_center"] = s.model_center;
    j["benchmark"]["model_sigma"] = s.model_sigma;
    j["benchmark"]["model_amplitude"] = s.model_amplitude;
    j["benchmark"]["gap_corner"] = s.gap_corner;
    j["benchmark"]["gap_falloff"] = s.gap_falloff;
    j["benchmark"]["gap_amplitude"] = s.gap_amplitude;
    j["benchmark"]["noise_floor"] = s.noise_floor;
    j["benchmark"]["noise_gain1"] = s.noise_gain1;
    j["benchmark"]["noise_gain2"] = s.noise_gain2;
  } else {
    const BicycleParams& p = c.bicycle;
    j["benchmark"]["wheelbase"] = p.wheelbase;
    j["benchmark"]["dt"] = p.dt;
    j["benchmark"]["horizon"] = p.horizon;
    j["benchmark"]["steer_limit"] = p.steer_limit;
    j["benchmark"]["accel_limit"] = p.accel_limit;
    j["benchmark"]["substeps"] = p.substeps;
    j["benchmark"]["cornering_stiffness_front"] = p.cornering_stiffness_front;
    j["benchmark"]["cornering_stiffness_rear"] = p.cornering_stiffness_rear;
    j["benchmark"]["mass"] = p.mass;
    j["benchmark"]["yaw_inertia"] = p.yaw_inertia;
    j["benchmark"]["actuator_lag"] = p.actuator_lag;
    j["benchmark"]["split_front"] = p.split_front;
  }
  j["bounds"]["lo"] = c.bounds.lo;
  j["bounds"]["hi"] = c.bounds.hi;
  j["grid"]["n_per_axis"] = c.grid_per_axis;
  j["disturbance"]["sigma1"] = {c.disturbance_box.sigma1_min, c.disturbance_box.sigma1_max};
  j["disturbance"]["sigma2"] = {c.disturbance_box.sigma2_min, c.disturbance_box.sigma2_max};
  j["disturbance"]["levels_per_axis"] = c.disturbance_levels_per_axis;
  j["risk"]["threshold"] = c.risk_threshold;
  j["risk"]["sigmoid"] = c.sigmoid_normalize;
  j["risk"]["sigmoid_scale"] = c.sigmoid_scale;
  j["coverage"]["threshold"] = c.coverage_threshold;
  j["budget"]["total"] = c.budget_total;
  j["budget"]["initial"] = c.budget_initial;
  j["model_dataset"]["size"] = c.model_dataset_size;
  j["flow"] = {{"layers", c.flow.layers},
               {"hidden", c.flow.hidden},
               {"epochs", c.flow.epochs},
               {"learning_rate", c.flow.learning_rate},
               {"scale_cap", c.flow.scale_cap},
               {"early_stop_tol", c.flow.early_stop_tol},
               {"early_stop_window", c.flow.early_stop_window},
               {"latent_mean", c.flow.latent_mean}};
  j["sampler"] = {{"chains", c.sampler.chains},
                  {"steps", c.sampler.steps},
                  {"burn_in", c.sampler.burn_in},
                  {"thin", c.sampler.thin},
                  {"proposal_std", c.sampler.proposal_std},
                  {"radius", c.sampler.radius},
                  {"radius_mass", c.sampler.radius_mass},
                  {"pilot_steps", c.sampler.pilot_steps}};
  j["gpr"] = {{"starts", c.gpr.starts},
              {"iters", c.gpr.iters},
              {"grad_tol", c.gpr.grad_tol},
              {"learning_rate", c.gpr.learning_rate},
              {"noise_floor", c.gpr.noise_floor},
              {"prior_mean", c.gpr.prior_mean}};
  j["evaluate"]["n_test"] = c.n_test;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

std::string config_hash(const PipelineConfig& config) {
  const std::string text = serialize_config(config);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace failcast
