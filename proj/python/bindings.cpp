#include "fsi/bench.hpp"
#include "fsi/error.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace fsi;

namespace {

TaskConfig make_task_config(int ways, int shots, int queries, std::optional<double> kappa, int total_queries,
                            const std::string& negatives, int negative_count, std::uint64_t seed) {
  TaskConfig cfg;
  cfg.ways = ways;
  cfg.shots = shots;
  cfg.queries_per_class = queries;
  if (kappa) cfg.balance = Dirichlet{*kappa, total_queries};
  if (negatives == "base") {
    cfg.negatives = BasePool{negative_count, false};
  } else if (negatives == "uniform") {
    cfg.negatives = UniformSphere{negative_count, false};
  } else if (negatives != "none") {
    throw ConfigError("negatives must be none, base or uniform");
  }
  cfg.seed = seed;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_fsi, m) {
  m.doc() = "Transductive few-shot inference";

  auto base_error = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base_error.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", base_error.ptr());
  py::register_exception<NumericError>(m, "NumericError", base_error.ptr());
  py::register_exception<FormatError>(m, "FormatError", data_error.ptr());

  py::class_<EmbeddingSet>(m, "EmbeddingSet")
      .def(py::init<Matrix, Labels, int, std::string>(), py::arg("features"), py::arg("labels"),
           py::arg("num_classes"), py::arg("name") = "")
      .def_property_readonly("features", &EmbeddingSet::features)
      .def_property_readonly("labels", &EmbeddingSet::labels)
      .def_property_readonly("dim", &EmbeddingSet::dim)
      .def_property_readonly("num_classes", &EmbeddingSet::num_classes)
      .def("__len__", &EmbeddingSet::size)
      .def("__eq__", &EmbeddingSet::operator==);

  m.def("generate_synthetic",
        [](int dim, int num_classes, int per_class, double spread, double shared, std::uint64_t seed) {
          return generate_synthetic({dim, num_classes, per_class, spread, shared, seed});
        },
        py::arg("dim") = 64, py::arg("num_classes") = 20, py::arg("per_class") = 100,
        py::arg("spread") = 0.3, py::arg("shared") = 0.0, py::arg("seed") = 0);
  m.def("load_embeddings", &load_embeddings, py::arg("path"));
  m.def("save_embeddings", &save_embeddings, py::arg("set"), py::arg("path"));
  m.def("encode_embeddings", [](const EmbeddingSet& set) {
    const auto bytes = encode_embeddings(set);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_embeddings", [](const py::bytes& data) {
    const std::string_view view = data;
    return decode_embeddings({reinterpret_cast<const std::byte*>(view.data()), view.size()});
  });

  py::class_<TaskConfig>(m, "TaskConfig");
  m.def("task_config", &make_task_config, py::arg("ways") = 5, py::arg("shots") = 1, py::arg("queries") = 15,
        py::arg("kappa") = py::none(), py::arg("total_queries") = 75, py::arg("negatives") = "none",
        py::arg("negative_count") = 400, py::arg("seed") = 0);

  py::class_<Task>(m, "Task")
      .def_readonly("ways", &Task::ways)
      .def_readonly("support_x", &Task::support_x)
      .def_readonly("support_y", &Task::support_y)
      .def_readonly("query_x", &Task::query_x)
      .def_readonly("negatives_x", &Task::negatives_x);
  py::class_<Episode>(m, "Episode")
      .def_readonly("task", &Episode::task)
      .def_readonly("query_y", &Episode::query_y)
      .def_readonly("class_map", &Episode::class_map);
  m.def("sample_episode", &sample_episode, py::arg("novel"), py::arg("base"), py::arg("config"),
        py::arg("index"));

  py::class_<TimWeights>(m, "TimWeights")
      .def(py::init<>())
      .def_static("from_label", &TimWeights::from_label)
      .def_readwrite("lambda_ce", &TimWeights::lambda_ce)
      .def_readwrite("alpha_cond", &TimWeights::alpha_cond)
      .def_readwrite("use_ce", &TimWeights::use_ce)
      .def_readwrite("use_marginal", &TimWeights::use_marginal)
      .def_readwrite("use_conditional", &TimWeights::use_conditional)
      .def("label", &TimWeights::label);
  py::class_<PoodleWeights>(m, "PoodleWeights")
      .def(py::init<>())
      .def_readwrite("alpha_pull", &PoodleWeights::alpha_pull)
      .def_readwrite("beta_push", &PoodleWeights::beta_push)
      .def_readwrite("stop_grad_pull", &PoodleWeights::stop_grad_pull)
      .def_readwrite("stop_grad_push", &PoodleWeights::stop_grad_push);

  py::class_<Prototypes>(m, "Prototypes")
      .def_readonly("weights", &Prototypes::weights)
      .def_readonly("gamma", &Prototypes::gamma)
      .def_readonly("tau", &Prototypes::tau);
  py::class_<TraceRecord>(m, "TraceRecord")
      .def_readonly("iteration", &TraceRecord::iteration)
      .def_readonly("wall_seconds", &TraceRecord::wall_seconds)
      .def_readonly("loss", &TraceRecord::loss)
      .def_readonly("accuracy", &TraceRecord::accuracy)
      .def_readonly("mutual_information", &TraceRecord::mutual_information);
  py::class_<SolveResult>(m, "SolveResult")
      .def_readonly("prototypes", &SolveResult::prototypes)
      .def_property_readonly("trace", [](const SolveResult& r) { return r.trace.records; });

  m.def("init_prototypes", [](const Task& t) { return init_prototypes(t); });
  m.def("posterior", [](const Prototypes& p, const Matrix& x, bool use_gamma) {
    return posterior(p, x, use_gamma ? ScaleSource::Gamma : ScaleSource::Tau);
  }, py::arg("prototypes"), py::arg("x"), py::arg("use_gamma") = false);
  m.def("predict", &predict);
  m.def("accuracy", [](const Labels& a, const Labels& b) { return accuracy(a, b); });
  m.def("conditional_entropy", &conditional_entropy);
  m.def("marginal_entropy", &marginal_entropy);
  m.def("mutual_information", &mutual_information, py::arg("p"), py::arg("alpha") = 1.0);

  m.def("run_tim_gd",
        [](const Task& t, const TimWeights& w, int iters, double lr, const Labels& truth) {
          return run_tim_gd(t, w, {iters, lr}, {}, truth);
        },
        py::arg("task"), py::arg("weights") = TimWeights{}, py::arg("iters") = 1000, py::arg("lr") = 1e-3,
        py::arg("query_truth") = Labels{}, py::call_guard<py::gil_scoped_release>());
  m.def("run_tim_adm",
        [](const Task& t, const TimWeights& w, int iters, const Labels& truth) {
          AdmOptions opts;
          opts.iters = iters;
          return run_tim_adm(t, w, opts, {}, truth);
        },
        py::arg("task"), py::arg("weights") = TimWeights{}, py::arg("iters") = 150,
        py::arg("query_truth") = Labels{}, py::call_guard<py::gil_scoped_release>());
  m.def("run_poodle",
        [](const Task& t, const PoodleWeights& w, bool transductive, int iters, double lr, const Labels& truth) {
          PoodleOptions opts;
          opts.iters = iters;
          opts.lr = lr;
          opts.mode = transductive ? PoodleMode::Transductive : PoodleMode::Inductive;
          return run_poodle(t, w, opts, {}, truth);
        },
        py::arg("task"), py::arg("weights") = PoodleWeights{}, py::arg("transductive") = true,
        py::arg("iters") = 250, py::arg("lr") = 1e-3, py::arg("query_truth") = Labels{},
        py::call_guard<py::gil_scoped_release>());

  m.def("run_benchmark_json",
        [](const std::string& config_json, const EmbeddingSet& novel, const EmbeddingSet* base, int jobs) {
          // The config travels as a Summary document so the JSON schema has one owner.
          Summary shell = summary_from_json(config_json);
          shell.config.jobs = jobs;
          return summary_to_json(run_benchmark(shell.config, novel, base));
        },
        py::arg("summary_template"), py::arg("novel"), py::arg("base") = nullptr, py::arg("jobs") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("default_summary_json", [](const std::string& method) {
    Summary s;
    s.config.method = method_from_name(method);
    s.method = s.config.method;
    return summary_to_json(s);
  }, py::arg("method") = "tim-gd");
}
