#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "failcast/benchmark.hpp"
#include "failcast/coverage.hpp"
#include "failcast/falsify.hpp"
#include "failcast/flow.hpp"
#include "failcast/gpr.hpp"
#include "failcast/pipeline.hpp"
#include "failcast/sampler.hpp"

namespace py = pybind11;
using namespace failcast;

namespace {

Bounds make_bounds(const std::vector<double>& lo, const std::vector<double>& hi) {
  Bounds b{lo, hi};
  b.validate();
  return b;
}

// Thin owning wrappers so python holds complete models.

struct PyFlow {
  CouplingFlow flow;
  LatentMixture mixture;

  static PyFlow train(const std::vector<std::vector<double>>& points,
                      const std::vector<int>& classes, const std::vector<double>& lo,
                      const std::vector<double>& hi, int epochs, int layers, int hidden,
                      double learning_rate, std::uint64_t seed) {
    FlowConfig cfg;
    cfg.epochs = epochs;
    cfg.layers = layers;
    cfg.hidden = hidden;
    cfg.learning_rate = learning_rate;
    std::vector<EnvPoint> pts;
    pts.reserve(points.size());
    for (const auto& p : points) pts.emplace_back(p);
    const FlowTrainResult tr = train_flow(pts, classes, make_bounds(lo, hi), cfg, seed);
    return PyFlow{tr.flow, tr.mixture};
  }

  std::vector<double> forward(const std::vector<double>& w) const {
    Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
    const Eigen::VectorXd z = flow.forward(wv);
    return std::vector<double>(z.data(), z.data() + z.size());
  }

  std::pair<std::vector<double>, double> inverse(const std::vector<double>& z) const {
    Eigen::VectorXd zv = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
    const auto [w, logdet] = flow.inverse(zv);
    return {std::vector<double>(w.data(), w.data() + w.size()), logdet};
  }

  int classify_point(const std::vector<double>& z) const {
    return classify(flow, mixture, EnvPoint(z)).cls;
  }

  void save(const std::string& path) const { save_flow(flow, mixture, path); }
  static PyFlow load(const std::string& path) {
    auto [f, m] = load_flow(path);
    return PyFlow{std::move(f), std::move(m)};
  }
};

struct PyGpr {
  GprModel model;

  static PyGpr fit(const std::vector<std::vector<double>>& z1, const std::vector<double>& r1,
                   const std::vector<std::vector<double>>& z2, const std::vector<double>& r2,
                   std::uint64_t seed) {
    auto build = [](const std::vector<std::vector<double>>& z, const std::vector<double>& r) {
      std::vector<RiskSample> samples;
      for (std::size_t i = 0; i < z.size(); ++i)
        samples.push_back(RiskSample{EnvPoint(z[i]), r[i], RolloutSource::Model});
      return GpDataset::from_samples(samples);
    };
    GprConfig cfg;
    const FitResult res = fit_gpr(build(z1, r1), build(z2, r2), cfg, seed);
    return PyGpr{res.model};
  }

  std::pair<double, double> predict(const std::vector<double>& z) const {
    const Prediction p = model.predict(EnvPoint(z));
    return {p.mean, p.variance};
  }

  void save(const std::string& path) const { save_gpr(model, path); }
  static PyGpr load(const std::string& path) { return PyGpr{load_gpr(path)}; }
};

py::dict rollout_to_dict(const Rollout& r, double risk) {
  py::dict d;
  d["states"] = r.states;
  d["inputs"] = r.inputs;
  d["steer"] = r.aux.count("steer") ? r.aux.at("steer") : std::vector<double>{};
  d["diverged"] = r.diverged;
  d["risk"] = risk;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "failure discovery and risk prediction toolkit";

  m.def("variance_coverage", &variance_coverage,
        "Mean squared deviation of normalized planar positions from their centroid");
  m.def("range_coverage", &range_coverage, "max - min of a scalar signal");

  m.def(
      "is_failure",
      [](double risk, double threshold, std::optional<double> sigmoid_center,
         double sigmoid_scale) {
        RiskSpec spec;
        spec.threshold = threshold;
        if (sigmoid_center) spec.normalizer = SigmoidNormalizer{*sigmoid_center, sigmoid_scale};
        return is_failure(risk, spec);
      },
      py::arg("risk"), py::arg("threshold"), py::arg("sigmoid_center") = std::nullopt,
      py::arg("sigmoid_scale") = 1.0);

  m.def(
      "grid_samples",
      [](const std::vector<double>& lo, const std::vector<double>& hi, int n_per_axis) {
        std::vector<std::vector<double>> out;
        for (const auto& p : grid_samples(make_bounds(lo, hi), n_per_axis))
          out.push_back(p.coords);
        return out;
      },
      py::arg("lo"), py::arg("hi"), py::arg("n_per_axis"));

  m.def(
      "disturbance_grid",
      [](double s1_min, double s1_max, double s2_min, double s2_max, int levels) {
        std::vector<std::pair<double, double>> out;
        for (const auto& d :
             disturbance_grid(DisturbanceBox{s1_min, s1_max, s2_min, s2_max}, levels))
          out.emplace_back(d.sigma1, d.sigma2);
        return out;
      },
      py::arg("sigma1_min"), py::arg("sigma1_max"), py::arg("sigma2_min"),
      py::arg("sigma2_max"), py::arg("levels_per_axis"));

  m.def(
      "project",
      [](const std::vector<double>& w, const std::vector<double>& c, double r) {
        Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
        Eigen::VectorXd cv = Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
        const Eigen::VectorXd p = project(wv, cv, r);
        return std::vector<double>(p.data(), p.data() + p.size());
      },
      py::arg("w"), py::arg("center"), py::arg("radius"));

  m.def("gaussian_mass_radius", &gaussian_mass_radius, py::arg("dim"), py::arg("mass"));

  m.def(
      "bicycle_model_rollout",
      [](double width, double v_ref, double sigma1, double sigma2, std::uint64_t seed) {
        BicycleParams params;
        LqrWeights weights;
        const EnvPoint z({width, v_ref});
        const Rollout r =
            simulate_model(z, DisturbanceLevel{sigma1, sigma2}, seed, params, weights);
        return rollout_to_dict(r, path_tracking_risk(r, SinePath::build(width)));
      },
      py::arg("width"), py::arg("v_ref"), py::arg("sigma1") = 0.0, py::arg("sigma2") = 0.0,
      py::arg("seed") = 0);

  m.def(
      "bicycle_true_rollout",
      [](double width, double v_ref, std::uint64_t seed) {
        BicycleParams params;
        LqrWeights weights;
        const EnvPoint z({width, v_ref});
        const Rollout r = simulate_true(z, seed, params, weights);
        return rollout_to_dict(r, path_tracking_risk(r, SinePath::build(width)));
      },
      py::arg("width"), py::arg("v_ref"), py::arg("seed") = 0);

  m.def(
      "synthetic_risks",
      [](double z1, double z2) {
        SyntheticSpec spec;
        const EnvPoint z({z1, z2});
        return py::make_tuple(spec.model_risk(z), spec.true_risk(z));
      },
      py::arg("z1"), py::arg("z2"));

  py::class_<PyFlow>(m, "FlowModel")
      .def_static("train", &PyFlow::train, py::arg("points"), py::arg("classes"), py::arg("lo"),
                  py::arg("hi"), py::arg("epochs") = 2000, py::arg("layers") = 6,
                  py::arg("hidden") = 32, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0)
      .def("forward", &PyFlow::forward, py::arg("w"))
      .def("inverse", &PyFlow::inverse, py::arg("z"))
      .def("classify", &PyFlow::classify_point, py::arg("z"))
      .def("save", &PyFlow::save, py::arg("path"))
      .def_static("load", &PyFlow::load, py::arg("path"));

  py::class_<PyGpr>(m, "GprModel")
      .def_static("fit", &PyGpr::fit, py::arg("z1"), py::arg("r1"), py::arg("z2"),
                  py::arg("r2"), py::arg("seed") = 0)
      .def("predict", &PyGpr::predict, py::arg("z"))
      .def("save", &PyGpr::save, py::arg("path"))
      .def_static("load", &PyGpr::load, py::arg("path"));

  m.def(
      "run_pipeline",
      [](const std::string& config_path, const std::string& stage, bool force,
         std::optional<std::uint64_t> seed, std::optional<std::string> out_dir) {
        const PipelineConfig config = load_config(config_path, seed, out_dir);
        const auto outcomes = run_pipeline(config, stage, force);
        py::list out;
        for (const auto& o : outcomes) {
          py::dict d;
          d["stage"] = o.stage;
          d["cached"] = o.cached;
          d["wall_seconds"] = o.wall_seconds;
          d["artifacts"] = o.artifacts;
          out.append(d);
        }
        return out;
      },
      py::arg("config_path"), py::arg("stage") = "all", py::arg("force") = false,
      py::arg("seed") = std::nullopt, py::arg("out_dir") = std::nullopt);
}
