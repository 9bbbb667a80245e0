#include "failcast/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "failcast/csvio.hpp"
#include "failcast/falsify.hpp"
#include "failcast/flow.hpp"
#include "failcast/gpr.hpp"
#include "failcast/kmeans.hpp"
#include "failcast/rng.hpp"
#include "failcast/sampler.hpp"

namespace failcast {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {"falsify",   "flow",   "sample", "demo-init",
                                                  "refine",    "evaluate", "report"};
  return stages;
}

namespace {

struct Manifest {
  json j;
  std::string dir;

  static Manifest load(const std::string& dir) {
    Manifest m;
    m.dir = dir;
    const fs::path p = fs::path(dir) / "manifest.json";
    if (fs::exists(p)) {
      std::ifstream in(p);
      in >> m.j;
    } else {
      m.j = json::object();
      m.j["stages"] = json::object();
      m.j["budget"] = {{"train_used", 0}, {"eval_used", 0}};
    }
    return m;
  }

  void save() const {
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << j.dump(2) << '\n';
  }

  bool stage_ok(const std::string& stage, const std::string& hash) const {
    if (!j.contains("stages") || !j["stages"].contains(stage)) return false;
    const json& s = j["stages"][stage];
    if (!s.value("completed", false) || s.value("config_hash", "") != hash) return false;
    for (const auto& a : s.value("artifacts", std::vector<std::string>{})) {
      if (!fs::exists(fs::path(dir) / a)) return false;
    }
    return true;
  }

  void mark(const std::string& stage, const std::string& hash, double wall,
            const std::vector<std::string>& artifacts) {
    j["stages"][stage] = {{"completed", true},
                          {"config_hash", hash},
                          {"wall_seconds", wall},
                          {"artifacts", artifacts}};
    save();
  }

  void set_budget(int train_used, int eval_used) {
    j["budget"] = {{"train_used", train_used}, {"eval_used", eval_used}};
    save();
  }

  int train_used() const { return j.value("budget", json::object()).value("train_used", 0); }
  int eval_used() const { return j.value("budget", json::object()).value("eval_used", 0); }
};

struct StageContext {
  const PipelineConfig& config;
  std::string dir;
  std::string hash;
  std::unique_ptr<Benchmark> benchmark;
  RiskSpec spec;

  std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }

  double stored_model_risk(const EnvPoint& z, const DisturbanceLevel& d,
                           std::uint64_t seed) const {
    double raw = benchmark->model_risk(z, d, seed);
    if (!std::isfinite(raw)) raw = std::numeric_limits<double>::max();
    return spec.normalize(raw);
  }

  double stored_true_risk(const EnvPoint& z, std::uint64_t seed) const {
    double raw = benchmark->true_risk(z, seed);
    if (!std::isfinite(raw)) raw = std::numeric_limits<double>::max();
    return spec.normalize(raw);
  }
};

std::string zero_padded(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

void write_grid_csv(const std::vector<GridPrediction>& grid, const std::string& path) {
  csv::Writer w(path, {"z1", "z2", "mean", "variance", "fail"});
  for (const auto& g : grid) {
    w.field(g.z[0]);
    w.field(g.z[1]);
    w.field(g.mean);
    w.field(g.variance);
    w.field(g.fail ? 1 : 0);
    w.end_row();
  }
}

void write_d1_csv(const std::vector<RiskSample>& init, const std::vector<RefineStep>& steps,
                  const std::string& path) {
  csv::Writer w(path, {"z1", "z2", "risk", "source", "step"});
  for (const auto& s : init) {
    w.field(s.z[0]);
    w.field(s.z[1]);
    w.field(s.risk);
    w.field(std::string("True"));
    w.field(0);
    w.end_row();
  }
  int k = 1;
  for (const auto& s : steps) {
    w.field(s.z[0]);
    w.field(s.z[1]);
    w.field(s.risk);
    w.field(std::string("True"));
    w.field(k++);
    w.end_row();
  }
}

std::vector<StageOutcome> outcomes_one(StageOutcome o) { return {std::move(o)}; }

// ---------------------------------------------------------------- falsify
std::vector<std::string> stage_falsify(const StageContext& ctx) {
  const PipelineConfig& c = ctx.config;
  auto grid = grid_samples(c.bounds, c.grid_per_axis);
  auto levels = disturbance_grid(c.disturbance_box, c.disturbance_levels_per_axis);
  const FalsificationDataset fd = label_grid(
      [&](const EnvPoint& z, const DisturbanceLevel& d, std::uint64_t seed) {
        return ctx.benchmark->model_risk(z, d, seed);
      },
      ctx.spec, std::move(grid), std::move(levels), c.seed);
  write_falsify_csv(fd, ctx.path("falsify.csv"));

  const auto risk_idx = fd.risk_indices();
  if (risk_idx.empty())
    throw std::runtime_error(
        "falsify: no grid point exceeded the risk threshold; the classifier stage needs both "
        "classes");
  const std::size_t M = std::min<std::size_t>(c.model_dataset_size, risk_idx.size());
  const auto d2 = extract_model_dataset(fd, M, c.seed);
  write_risk_samples_csv(d2, ctx.path("d2.csv"));

  std::size_t fail_f = 0, noise_fail = 0;
  for (const auto& l : fd.labels) {
    fail_f += l == RiskLabel::FailF;
    noise_fail += l == RiskLabel::NoiseFail;
  }
  json meta;
  meta["bounds"] = {{"lo", c.bounds.lo}, {"hi", c.bounds.hi}};
  meta["seed"] = c.seed;
  meta["risk_threshold"] = c.risk_threshold;
  meta["stored_threshold"] = c.stored_threshold();
  meta["sigmoid"] = c.sigmoid_normalize;
  meta["grid_points"] = fd.grid.size();
  meta["levels"] = fd.levels.size();
  meta["fail_f"] = fail_f;
  meta["noise_fail"] = noise_fail;
  meta["model_dataset_size"] = M;
  std::ofstream(ctx.path("falsify_meta.json")) << meta.dump(2) << '\n';
  return {"falsify.csv", "d2.csv", "falsify_meta.json"};
}

// ------------------------------------------------------------------- flow
std::vector<std::string> stage_flow(const StageContext& ctx) {
  const FalsificationDataset fd =
      read_falsify_csv(ctx.path("falsify.csv"), ctx.config.risk_spec());
  std::vector<EnvPoint> points = fd.grid;
  std::vector<int> classes;
  classes.reserve(fd.labels.size());
  for (const auto& l : fd.labels) classes.push_back(l == RiskLabel::Safe ? 2 : 1);

  const FlowTrainResult tr =
      train_flow(points, classes, ctx.config.bounds, ctx.config.flow, ctx.config.seed);
  save_flow(tr.flow, tr.mixture, ctx.path("flow.json"));

  std::size_t correct = 0;
  for (std::size_t i = 0; i < points.size(); ++i)
    correct += classify(tr.flow, tr.mixture, points[i]).cls == classes[i];

  json log;
  log["epochs_run"] = tr.epochs_run;
  log["initial_loss"] = tr.epoch_losses.front();
  log["final_loss"] = tr.epoch_losses.back();
  log["training_accuracy"] = static_cast<double>(correct) / points.size();
  log["epoch_losses"] = tr.epoch_losses;
  std::ofstream(ctx.path("flow_training.json")) << log.dump(2) << '\n';
  return {"flow.json", "flow_training.json"};
}

// ----------------------------------------------------------------- sample
std::vector<std::string> stage_sample(const StageContext& ctx) {
  const auto [flow, mixture] = load_flow(ctx.path("flow.json"));
  const PipelineConfig& c = ctx.config;

  PosteriorSpec post;
  post.flow = &flow;
  post.mixture = &mixture;
  post.bounds = c.bounds;
  post.coverage_threshold = c.coverage_threshold;
  post.coverage = [&](const EnvPoint& z) { return ctx.benchmark->coverage(z); };
  post.center = mixture.mean2;
  post.radius = c.sampler.radius > 0.0
                    ? c.sampler.radius
                    : gaussian_mass_radius(flow.dim(), c.sampler.radius_mass) *
                          std::sqrt(mixture.variance);

  const CoverageSet zcov = mh_chain(post, c.sampler, c.seed);
  write_coverage_csv(zcov, ctx.path("zcov.csv"));

  const std::vector<EnvPoint> z1 = select_initial(zcov, c.budget_initial, c.seed);
  write_points_csv(z1, ctx.path("z1.csv"));

  json diag;
  diag["acceptance_rate"] = zcov.acceptance_rate;
  diag["projections_applied"] = zcov.projections_applied;
  diag["chain_length"] = zcov.chain_length;
  diag["low_acceptance_warning"] = zcov.low_acceptance_warning;
  diag["coverage_set_size"] = zcov.points.size();
  diag["projection_radius"] = post.radius;
  std::ofstream(ctx.path("sampler_diag.json")) << diag.dump(2) << '\n';
  return {"zcov.csv", "z1.csv", "sampler_diag.json"};
}

// -------------------------------------------------------------- demo-init
std::vector<std::string> stage_demo_init(const StageContext& ctx, Manifest& manifest) {
  const std::vector<EnvPoint> z1 = read_points_csv(ctx.path("z1.csv"));
  Budget budget(ctx.config.budget_total, ctx.config.budget_initial);
  const auto d1 = run_initial_demos(
      [&](const EnvPoint& z, std::uint64_t seed) { return ctx.stored_true_risk(z, seed); },
      budget, z1, ctx.config.seed);
  write_risk_samples_csv(d1, ctx.path("d1_init.csv"));
  manifest.set_budget(budget.used(), manifest.eval_used());
  return {"d1_init.csv"};
}

// ----------------------------------------------------------------- refine
std::vector<std::string> stage_refine(const StageContext& ctx, Manifest& manifest) {
  const PipelineConfig& c = ctx.config;
  const auto d1_samples = read_risk_samples_csv(ctx.path("d1_init.csv"));
  const auto d2_samples = read_risk_samples_csv(ctx.path("d2.csv"));
  const GpDataset d1 = GpDataset::from_samples(d1_samples);
  const GpDataset d2 = GpDataset::from_samples(d2_samples);
  const auto grid = grid_samples(c.bounds, c.grid_per_axis);

  Budget budget(c.budget_total, c.budget_initial);
  budget.restore(static_cast<int>(d1_samples.size()), 0);

  const RefineResult rr = sequential_refine(
      d1, d2, grid, c.stored_threshold(), budget.refine(), budget,
      [&](const EnvPoint& z, std::uint64_t seed) { return ctx.stored_true_risk(z, seed); },
      c.gpr, c.seed);
  if (!rr.early_stop_reason.empty())
    throw std::runtime_error("refine: stopped early: " + rr.early_stop_reason);

  std::vector<std::string> artifacts;
  for (std::size_t k = 0; k < rr.grids.size(); ++k) {
    const std::string name = "pred_step_" + zero_padded(static_cast<int>(k), 3) + ".csv";
    write_grid_csv(rr.grids[k], ctx.path(name));
    artifacts.push_back(name);
  }
  write_d1_csv(d1_samples, rr.steps, ctx.path("d1_full.csv"));
  artifacts.push_back("d1_full.csv");

  save_gpr(rr.final_fit.model, ctx.path("gpr_simexp.json"));
  artifacts.push_back("gpr_simexp.json");

  const FitResult sim_only = fit_gpr(GpDataset{}, d2, c.gpr, c.seed, std::uint64_t{1} << 20);
  save_gpr(sim_only.model, ctx.path("gpr_simonly.json"));
  artifacts.push_back("gpr_simonly.json");

  json hist;
  hist["steps"] = json::array();
  for (const auto& s : rr.steps)
    hist["steps"].push_back(
        {{"z", {s.z[0], s.z[1]}}, {"risk", s.risk}, {"objective", s.objective}});
  hist["final_objective"] = rr.final_fit.objective;
  hist["early_stop_reason"] = rr.early_stop_reason;
  std::ofstream(ctx.path("refine_history.json")) << hist.dump(2) << '\n';
  artifacts.push_back("refine_history.json");

  manifest.set_budget(budget.used(), manifest.eval_used());
  return artifacts;
}

// --------------------------------------------------------------- evaluate
std::vector<std::string> stage_evaluate(const StageContext& ctx, Manifest& manifest) {
  const PipelineConfig& c = ctx.config;
  const GprModel simexp = load_gpr(ctx.path("gpr_simexp.json"));
  const GprModel simonly = load_gpr(ctx.path("gpr_simonly.json"));

  // training inputs, for exclusion of test points
  std::vector<std::vector<double>> training;
  for (const auto& s : read_risk_samples_csv(ctx.path("d2.csv"))) training.push_back(s.z.coords);
  {
    const csv::Table t = csv::read(ctx.path("d1_full.csv"));
    const std::size_t c1 = t.column("z1"), c2 = t.column("z2");
    for (const auto& row : t.rows)
      training.push_back({csv::parse_double(row[c1]), csv::parse_double(row[c2])});
  }

  Budget budget(c.budget_total, c.budget_initial);
  budget.restore(manifest.train_used(), 0);

  const double threshold = c.stored_threshold();
  const std::size_t d = c.bounds.dim();

  int fail_count = 0, not_fail_count = 0;
  int sim_fail_hit = 0, sim_notfail_hit = 0, simexp_fail_hit = 0, simexp_notfail_hit = 0;

  csv::Writer w(ctx.path("eval.csv"), {"z1", "z2", "true_risk", "true_fail", "sim_mean",
                                       "sim_fail", "simexp_mean", "simexp_fail"});
  for (int i = 0; i < c.n_test; ++i) {
    auto gen = rng::stream(c.seed, rng::Stage::Evaluate, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> coords(d);
    bool fresh = false;
    while (!fresh) {
      for (std::size_t jx = 0; jx < d; ++jx)
        coords[jx] = c.bounds.lo[jx] + (c.bounds.hi[jx] - c.bounds.lo[jx]) * uni(gen);
      fresh = true;
      for (const auto& tz : training)
        if (tz == coords) {
          fresh = false;
          break;
        }
    }
    const EnvPoint z(coords);
    budget.consume_eval(1);
    const double true_risk = ctx.stored_true_risk(
        z, rng::substream_seed(c.seed, static_cast<std::uint64_t>(rng::Stage::Evaluate),
                               (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(i)));
    const bool true_fail = true_risk > threshold;
    const double sim_mean = simonly.predict(z).mean;
    const double simexp_mean = simexp.predict(z).mean;
    const bool sim_fail = sim_mean > threshold;
    const bool simexp_fail = simexp_mean > threshold;

    fail_count += true_fail;
    not_fail_count += !true_fail;
    if (true_fail) {
      sim_fail_hit += sim_fail;
      simexp_fail_hit += simexp_fail;
    } else {
      sim_notfail_hit += !sim_fail;
      simexp_notfail_hit += !simexp_fail;
    }

    w.field(z[0]);
    w.field(z[1]);
    w.field(true_risk);
    w.field(true_fail ? 1 : 0);
    w.field(sim_mean);
    w.field(sim_fail ? 1 : 0);
    w.field(simexp_mean);
    w.field(simexp_fail ? 1 : 0);
    w.end_row();
  }

  auto ratio = [](int hit, int total) {
    return total > 0 ? static_cast<double>(hit) / total : 0.0;
  };
  json rep;
  rep["n_test"] = c.n_test;
  rep["counts"] = {{"fail", fail_count}, {"not_fail", not_fail_count}};
  rep["accuracy"] = {{"fail",
                      {{"sim", ratio(sim_fail_hit, fail_count)},
                       {"sim_exp", ratio(simexp_fail_hit, fail_count)}}},
                     {"not_fail",
                      {{"sim", ratio(sim_notfail_hit, not_fail_count)},
                       {"sim_exp", ratio(simexp_notfail_hit, not_fail_count)}}}};
  // published hardware-study numbers for the two benchmarks, for context
  rep["reference"] = {{"pusht",
                       {{"fail", {{"sim", 0.11}, {"sim_exp", 0.89}}},
                        {"not_fail", {{"sim", 0.91}, {"sim_exp", 0.82}}}}},
                      {"f1tenth",
                       {{"fail", {{"sim", 0.36}, {"sim_exp", 1.00}}},
                        {"not_fail", {{"sim", 1.00}, {"sim_exp", 1.00}}}}}};
  rep["eval_queries"] = budget.eval_used();
  std::ofstream(ctx.path("report.json")) << rep.dump(2) << '\n';

  manifest.set_budget(manifest.train_used(), budget.eval_used());
  return {"eval.csv", "report.json"};
}

// ----------------------------------------------------------------- report
std::vector<std::string> stage_report(const StageContext& ctx, const Manifest& manifest) {
  const PipelineConfig& c = ctx.config;
  const GprModel simexp = load_gpr(ctx.path("gpr_simexp.json"));
  const GprModel simonly = load_gpr(ctx.path("gpr_simonly.json"));
  const auto grid = grid_samples(c.bounds, c.grid_per_axis);
  const double threshold = c.stored_threshold();
  write_grid_csv(predict_grid(simonly, grid, threshold), ctx.path("contour_sim.csv"));
  write_grid_csv(predict_grid(simexp, grid, threshold), ctx.path("contour_simexp.csv"));

  json rep;
  {
    std::ifstream in(ctx.path("report.json"));
    in >> rep;
  }

  std::ostringstream md;
  md << "# Run summary\n\n";
  md << "- benchmark: " << c.benchmark_id << "\n";
  md << "- config hash: " << ctx.hash << "\n";
  md << "- seed: " << c.seed << "\n";
  md << "- budget: N=" << c.budget_total << ", N1=" << c.budget_initial
     << ", train queries used=" << manifest.train_used()
     << ", evaluation queries=" << manifest.eval_used() << "\n\n";
  md << "## Accuracy (fraction of test points predicted correctly)\n\n";
  md << "| Mode | Sim | Sim+Exp |\n|---|---|---|\n";
  md << "| Fail | " << rep["accuracy"]["fail"]["sim"].get<double>() << " | "
     << rep["accuracy"]["fail"]["sim_exp"].get<double>() << " |\n";
  md << "| Not fail | " << rep["accuracy"]["not_fail"]["sim"].get<double>() << " | "
     << rep["accuracy"]["not_fail"]["sim_exp"].get<double>() << " |\n\n";
  md << "## Stage wall times (seconds)\n\n";
  for (const auto& stage : pipeline_stages()) {
    if (manifest.j["stages"].contains(stage))
      md << "- " << stage << ": "
         << manifest.j["stages"][stage].value("wall_seconds", 0.0) << "\n";
  }
  std::ofstream(ctx.path("summary.md")) << md.str();
  return {"contour_sim.csv", "contour_simexp.csv", "summary.md"};
}

}  // namespace

std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, const std::string& stage_arg,
                                       bool force) {
  const auto& stages = pipeline_stages();
  const std::string stage = stage_arg == "train-flow" ? "flow" : stage_arg;
  const bool run_all = stage == "all";
  if (!run_all && std::find(stages.begin(), stages.end(), stage) == stages.end())
    throw ConfigError("unknown stage '" + stage + "'");

  fs::create_directories(config.out_dir);
  StageContext ctx{config, config.out_dir, config_hash(config), config.make_benchmark(),
                   config.risk_spec()};
  {
    std::ofstream out(ctx.path("config_resolved.json"));
    out << serialize_config(config) << '\n';
  }
  Manifest manifest = Manifest::load(config.out_dir);
  manifest.j["config_hash"] = ctx.hash;

  std::vector<StageOutcome> outcomes;
  for (std::size_t idx = 0; idx < stages.size(); ++idx) {
    const std::string& name = stages[idx];
    if (!run_all && name != stage) continue;

    // all prior stages must be complete and current
    for (std::size_t p = 0; p < idx; ++p) {
      if (!manifest.stage_ok(stages[p], ctx.hash))
        throw OrderingError("stage '" + name + "' requires '" + stages[p] +
                            "' to be completed first; run --stage " + stages[p]);
    }

    if (!force && manifest.stage_ok(name, ctx.hash)) {
      StageOutcome o;
      o.stage = name;
      o.cached = true;
      outcomes.push_back(std::move(o));
      if (!run_all) break;
      continue;
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts;
    if (name == "falsify")
      artifacts = stage_falsify(ctx);
    else if (name == "flow")
      artifacts = stage_flow(ctx);
    else if (name == "sample")
      artifacts = stage_sample(ctx);
    else if (name == "demo-init")
      artifacts = stage_demo_init(ctx, manifest);
    else if (name == "refine")
      artifacts = stage_refine(ctx, manifest);
    else if (name == "evaluate")
      artifacts = stage_evaluate(ctx, manifest);
    else if (name == "report")
      artifacts = stage_report(ctx, manifest);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.mark(name, ctx.hash, wall, artifacts);

    StageOutcome o;
    o.stage = name;
    o.wall_seconds = wall;
    o.artifacts = artifacts;
    outcomes.push_back(std::move(o));
    if (!run_all) break;
  }
  return outcomes;
}

EvalReport read_eval_report(const std::string& run_dir) {
  std::ifstream in(fs::path(run_dir) / "report.json");
  if (!in) throw std::runtime_error("read_eval_report: missing report.json in " + run_dir);
  json rep;
  in >> rep;
  EvalReport r;
  r.n_test = rep.at("n_test").get<int>();
  r.fail_count = rep.at("counts").at("fail").get<int>();
  r.not_fail_count = rep.at("counts").at("not_fail").get<int>();
  r.sim_fail_recall = rep.at("accuracy").at("fail").at("sim").get<double>();
  r.simexp_fail_recall = rep.at("accuracy").at("fail").at("sim_exp").get<double>();
  r.sim_not_fail_accuracy = rep.at("accuracy").at("not_fail").at("sim").get<double>();
  r.simexp_not_fail_accuracy = rep.at("accuracy").at("not_fail").at("sim_exp").get<double>();
  return r;
}

}  // namespace failcast
