#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>

#include "fbsde/problem.hpp"
#include "fbsde/report.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/stoch.hpp"

namespace py = pybind11;
using namespace fbsde;

namespace {

Algorithm to_algorithm(int k) {
  if (k < 1 || k > 3) throw std::invalid_argument("algorithm must be 1, 2 or 3");
  return static_cast<Algorithm>(k);
}

py::array_t<double> paths_array(const PathBatch& batch) {
  py::array_t<double> out({batch.M, batch.N, batch.d});
  std::copy(batch.dW.data(), batch.dW.data() + batch.dW.size(),
            out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep FBSDE solver core (forward-backward SDEs via control "
            "reformulation; three feedback algorithms)";

  py::class_<FbsdeProblem>(m, "Problem")
      .def_readonly("name", &FbsdeProblem::name)
      .def_readonly("n", &FbsdeProblem::n)
      .def_readonly("m", &FbsdeProblem::m)
      .def_readonly("d", &FbsdeProblem::d)
      .def_readonly("T", &FbsdeProblem::T)
      .def_property_readonly("x0",
                             [](const FbsdeProblem& p) {
                               return std::vector<double>(
                                   p.x0.data(), p.x0.data() + p.x0.size());
                             })
      .def("has_explicit_y", &FbsdeProblem::has_explicit_y)
      .def("explicit_y0", &FbsdeProblem::explicit_y0)
      .def("__repr__", [](const FbsdeProblem& p) {
        return "<Problem " + p.name + " n=" + std::to_string(p.n) +
               " d=" + std::to_string(p.d) + ">";
      });

  m.def("problem_names", &problem_names);
  m.def("problem", &problem_by_name, py::arg("name"),
        py::arg("d") = std::nullopt, py::arg("T") = std::nullopt,
        py::arg("x0") = std::nullopt,
        "Look up a benchmark problem by name with optional dimension, "
        "horizon and start-point overrides");

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](int algorithm, std::size_t N, std::size_t M, double lr,
                       std::size_t max_steps, std::uint64_t seed,
                       std::optional<double> stop_variance_threshold,
                       std::size_t stop_window,
                       std::pair<double, double> y0_init_range,
                       bool resample_each_iter, bool picard_init_zero,
                       bool z_head_zero_init, double clip_norm, bool plain_sgd,
                       std::string checkpoint_in, std::string checkpoint_out) {
             TrainConfig c;
             c.algorithm = to_algorithm(algorithm);
             c.N = N;
             c.M = M;
             c.lr = lr;
             c.max_steps = max_steps;
             c.seed = seed;
             c.stop_variance_threshold = stop_variance_threshold;
             c.stop_window = stop_window;
             c.y0_init_range = {y0_init_range.first, y0_init_range.second};
             c.resample_each_iter = resample_each_iter;
             c.picard_init_zero = picard_init_zero;
             c.z_head_zero_init = z_head_zero_init;
             c.clip_norm = clip_norm;
             c.plain_sgd = plain_sgd;
             c.checkpoint_in = std::move(checkpoint_in);
             c.checkpoint_out = std::move(checkpoint_out);
             return c;
           }),
           py::arg("algorithm") = 1, py::arg("N") = 25, py::arg("M") = 256,
           py::arg("lr") = 5e-3, py::arg("max_steps") = 5000,
           py::arg("seed") = 1,
           py::arg("stop_variance_threshold") = std::nullopt,
           py::arg("stop_window") = 1000,
           py::arg("y0_init_range") = std::pair<double, double>{0.0, 1.0},
           py::arg("resample_each_iter") = false,
           py::arg("picard_init_zero") = false,
           py::arg("z_head_zero_init") = false, py::arg("clip_norm") = 0.0,
           py::arg("plain_sgd") = false,
           py::arg("checkpoint_in") = std::string(),
           py::arg("checkpoint_out") = std::string())
      .def_property("algorithm",
                    [](const TrainConfig& c) { return static_cast<int>(c.algorithm); },
                    [](TrainConfig& c, int k) { c.algorithm = to_algorithm(k); })
      .def_readwrite("N", &TrainConfig::N)
      .def_readwrite("M", &TrainConfig::M)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("max_steps", &TrainConfig::max_steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("stop_variance_threshold",
                     &TrainConfig::stop_variance_threshold)
      .def_readwrite("stop_window", &TrainConfig::stop_window)
      .def_property("y0_init_range",
                    [](const TrainConfig& c) {
                      return std::pair<double, double>{c.y0_init_range.lo,
                                                       c.y0_init_range.hi};
                    },
                    [](TrainConfig& c, std::pair<double, double> r) {
                      c.y0_init_range = {r.first, r.second};
                    })
      .def_readwrite("resample_each_iter", &TrainConfig::resample_each_iter)
      .def_readwrite("picard_init_zero", &TrainConfig::picard_init_zero)
      .def_readwrite("z_head_zero_init", &TrainConfig::z_head_zero_init)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("plain_sgd", &TrainConfig::plain_sgd)
      .def_readwrite("checkpoint_in", &TrainConfig::checkpoint_in)
      .def_readwrite("checkpoint_out", &TrainConfig::checkpoint_out);

  py::class_<IterRecord>(m, "IterRecord")
      .def_readonly("iter", &IterRecord::iter)
      .def_readonly("loss", &IterRecord::loss)
      .def_readonly("y0", &IterRecord::y0)
      .def_readonly("elapsed_s", &IterRecord::elapsed_s);

  py::class_<RunReport>(m, "RunReport")
      .def_readonly("problem", &RunReport::problem)
      .def_property_readonly("algorithm",
                             [](const RunReport& r) {
                               return static_cast<int>(r.algorithm);
                             })
      .def_readonly("records", &RunReport::records)
      .def_readonly("final_y0", &RunReport::final_y0)
      .def_readonly("explicit_y0", &RunReport::explicit_y0)
      .def_readonly("relative_error", &RunReport::relative_error)
      .def_readonly("steps_run", &RunReport::steps_run)
      .def_readonly("wall_seconds", &RunReport::wall_seconds)
      .def_readonly("divergence_message", &RunReport::divergence_message)
      .def_property_readonly("termination",
                             [](const RunReport& r) {
                               return std::string(termination_name(r.termination));
                             })
      .def_property_readonly("losses",
                             [](const RunReport& r) {
                               py::array_t<double> out(r.records.size());
                               double* p = out.mutable_data();
                               for (const auto& rec : r.records) *p++ = rec.loss;
                               return out;
                             })
      .def("__repr__", [](const RunReport& r) {
        return "<RunReport " + r.problem + " y0=" +
               (r.final_y0.empty() ? std::string("?")
                                   : std::to_string(r.final_y0[0])) +
               " " + termination_name(r.termination) + ">";
      });

  m.def("train", &train, py::arg("problem"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>(),
        "Train the chosen feedback algorithm on a problem; returns the run "
        "report with per-iteration history");

  py::class_<ResidualRow>(m, "ResidualRow")
      .def_readonly("N", &ResidualRow::N)
      .def_readonly("residual", &ResidualRow::residual);

  m.def("residual_check", &residual_check, py::arg("problem"),
        py::arg("n_list"), py::arg("M") = 256, py::arg("seed") = 7777,
        py::call_guard<py::gil_scoped_release>(),
        "Euler-forward the explicit solution and report terminal residuals "
        "per step count (should shrink as N grows)");

  py::class_<GradCheckResult>(m, "GradCheckResult")
      .def_readonly("pipeline_max_rel_err", &GradCheckResult::pipeline_max_rel_err)
      .def_readonly("isolated_max_rel_err", &GradCheckResult::isolated_max_rel_err)
      .def_property_readonly("ok",
                             [](const GradCheckResult& g) { return g.pass; });

  m.def("gradient_check", &gradient_check, py::arg("seed") = 424242,
        py::call_guard<py::gil_scoped_release>(),
        "Compare reverse-mode gradients against central finite differences "
        "through all three training pipelines");

  m.def("sample_paths",
        [](double T, std::size_t N, std::size_t M, std::size_t d,
           std::uint64_t seed) {
          return paths_array(sample_paths(make_grid(T, N), M, d, seed));
        },
        py::arg("T"), py::arg("N"), py::arg("M"), py::arg("d"),
        py::arg("seed"),
        "Brownian increments of M paths on an even N-step grid, shape "
        "(M, N, d), i.i.d. Normal(0, T/N)");

  m.def("terminal_consistency_gap", &terminal_consistency_gap,
        py::arg("problem"), py::arg("samples") = 64, py::arg("seed") = 99,
        "Max |g(x) - explicit_y(T, x)| over random states near x0");

  m.attr("__version__") = "0.1.0";
}
