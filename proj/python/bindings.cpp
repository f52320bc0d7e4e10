#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lazydit/checkpoint.hpp"
#include "lazydit/cli.hpp"
#include "lazydit/config.hpp"
#include "lazydit/error.hpp"
#include "lazydit/lazy_runtime.hpp"
#include "lazydit/macs.hpp"
#include "lazydit/theory.hpp"
#include "lazydit/trainer.hpp"

namespace py = pybind11;
using namespace lazydit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Mat to_mat(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Mat(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Mat& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<Mat> to_mats(const std::vector<Array>& xs) {
  std::vector<Mat> out;
  for (const Array& x : xs) out.push_back(to_mat(x));
  return out;
}

std::vector<Array> to_arrays(const std::vector<Mat>& xs) {
  std::vector<Array> out;
  for (const Mat& x : xs) out.push_back(to_array(x));
  return out;
}

py::dict sample_dict(const SampleResult& r) {
  py::dict d;
  d["latents"] = to_arrays(r.latents);
  d["gamma_attn"] = mean_lazy_ratio(r.stats, ModuleKind::kAttn);
  d["gamma_feed"] = mean_lazy_ratio(r.stats, ModuleKind::kFeed);
  d["lazy_ratio_attn"] = lazy_ratio(r.stats, ModuleKind::kAttn);
  d["lazy_ratio_feed"] = lazy_ratio(r.stats, ModuleKind::kFeed);
  d["heatmap_csv"] = heatmap_csv(r.stats);
  return d;
}

}  // namespace

PYBIND11_MODULE(lazydit, m) {
  m.doc() = "Lazy-learning diffusion transformer toolkit";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<OverflowError>(m, "OverflowError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ChecksumError>(m, "ChecksumError", base.ptr());
  py::register_exception<VersionError>(m, "VersionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("matmul", [](const Array& a, const Array& b) { return to_array(matmul(to_mat(a), to_mat(b))); });
  m.def("frobenius_norm", [](const Array& a) { return frobenius_norm(to_mat(a)); });
  m.def("spectral_norm", [](const Array& a, double tol, int max_iters) {
    return spectral_norm(to_mat(a), {tol, max_iters});
  }, py::arg("a"), py::arg("tol") = 1e-10, py::arg("max_iters") = 10000);
  m.def("cosine_similarity", [](const Array& a, const Array& b) {
    return cosine_similarity(to_mat(a), to_mat(b));
  });
  m.def("lazy_score", [](const Array& z, std::vector<double> w) { return lazy_score(to_mat(z), w); });

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_readonly("train_steps", &NoiseSchedule::train_steps)
      .def_readonly("alpha", &NoiseSchedule::alpha)
      .def_readonly("sigma", &NoiseSchedule::sigma);
  m.def("build_schedule", &build_schedule, py::arg("train_steps"), py::arg("beta_min") = 1e-4,
        py::arg("beta_max") = 0.02);

  py::class_<SamplerPlan>(m, "SamplerPlan")
      .def_readonly("steps", &SamplerPlan::steps)
      .def_readonly("guidance", &SamplerPlan::guidance);
  m.def("uniform_plan", &uniform_plan);

  m.def("ddim_step", [](const Array& z, const Array& eps, int t, int t_prev, const NoiseSchedule& s) {
    return to_array(ddim_step(to_mat(z), to_mat(eps), t, t_prev, s));
  });
  m.def("cfg_combine", [](const Array& c, const Array& u, double w) {
    return to_array(cfg_combine(to_mat(c), to_mat(u), w));
  });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("patches", &ModelConfig::patches)
      .def_readwrite("hidden", &ModelConfig::hidden)
      .def_readwrite("train_steps", &ModelConfig::train_steps)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("weight_clip", &ModelConfig::weight_clip)
      .def_readwrite("logit_cap", &ModelConfig::logit_cap);

  py::class_<ModelWeights>(m, "ModelWeights")
      .def_readonly("config", &ModelWeights::config)
      .def("forward", [](const ModelWeights& w, const Array& z, int t, int label) {
        return to_array(model_forward(w, to_mat(z), t, label, dense_evaluator(w)));
      }, py::arg("z"), py::arg("t"), py::arg("label"));
  m.def("init_model", &init_model, py::arg("config"), py::arg("seed"));
  m.attr("NULL_CLASS") = kNullClass;

  py::class_<PredictorBank>(m, "PredictorBank")
      .def(py::init<int, int>(), py::arg("layers"), py::arg("hidden"))
      .def_property("params",
                    [](const PredictorBank& b) { return std::vector<double>(b.params().begin(), b.params().end()); },
                    [](PredictorBank& b, const std::vector<double>& v) {
                      if (v.size() != b.num_params()) throw ShapeError("params: wrong length");
                      std::copy(v.begin(), v.end(), b.params().begin());
                    });

  m.def("sample_dense", [](const ModelWeights& w, const NoiseSchedule& s, const SamplerPlan& p,
                           const std::vector<Array>& z, const std::vector<int>& labels) {
    return to_arrays(sample_dense(w, s, p, to_mats(z), labels));
  });
  m.def("sample_lazy", [](const ModelWeights& w, const PredictorBank& bank, const NoiseSchedule& s,
                          const SamplerPlan& p, const std::vector<Array>& z, const std::vector<int>& labels,
                          std::optional<double> force_score) {
    LazySampleOptions opts;
    if (force_score) opts.gate.score_override = constant_score(*force_score);
    return sample_dict(sample_lazy(w, bank, s, p, to_mats(z), labels, opts));
  }, py::arg("weights"), py::arg("bank"), py::arg("schedule"), py::arg("plan"), py::arg("z"),
     py::arg("labels"), py::arg("force_score") = py::none());

  m.def("mac_count", [](const std::string& preset, int steps, double lazy_ratio, bool overhead,
                        bool activations) {
    ArchSpec a = arch_preset(preset);
    a.lazy_predictor_overhead = overhead;
    a.count_activation_matmuls = activations;
    return to_tmacs(mac_count(a, steps, lazy_ratio));
  }, py::arg("preset") = "xl2-256", py::arg("steps") = 50, py::arg("lazy_ratio") = 0.0,
     py::arg("overhead") = false, py::arg("activations") = false);

  m.def("verify", [](const std::string& suite, int trials, std::uint64_t seed) {
    TheoryConfig cfg;
    cfg.trials = trials;
    cfg.seed = seed;
    return reports_json(run_suite(suite, cfg));
  }, py::arg("suite") = "all", py::arg("trials") = 1000, py::arg("seed") = 0);

  m.def("train", [](const std::string& config_json) {
    const RunConfig rc = run_config_from_json(nlohmann::json::parse(config_json));
    rc.validate();
    const ModelWeights w = init_model(rc.model_config(), derive_seed(rc.seed, "model"));
    const NoiseSchedule sched = rc.build_noise_schedule();
    const SamplerPlan plan = rc.build_plan();
    const GaussianMixture data(rc.data_config(), derive_seed(rc.seed, "data"));
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train_loop({w, sched, plan, data}, rc.train_config());
    }
    py::dict d;
    d["params"] = std::vector<double>(r.bank.params().begin(), r.bank.params().end());
    d["loss_trace_csv"] = loss_trace_csv(r.trace);
    d["initial_eval_loss"] = r.initial_eval.total;
    d["final_eval_loss"] = r.final_eval.total;
    d["gamma_attn"] = r.gamma_attn;
    d["gamma_feed"] = r.gamma_feed;
    return d;
  }, py::arg("config_json") = "{}");

  m.def("default_config", [] { return to_json(RunConfig{}).dump(2); });

  m.def("cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
