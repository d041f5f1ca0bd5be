// Python bindings for the main library operations. Heavy objects cross the
// boundary as JSON strings to keep the surface small and versionable.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "absgd/dataset.hpp"
#include "absgd/dro.hpp"
#include "absgd/harness.hpp"
#include "absgd/math.hpp"
#include "absgd/optim.hpp"

namespace py = pybind11;
using namespace absgd;

PYBIND11_MODULE(_absgd, m) {
  m.doc() = "attention-weighted SGD core operations";

  py::register_exception<ValidationError>(m, "AbsgdValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "AbsgdNumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "AbsgdIoError", PyExc_IOError);

  m.def("log_sum_exp",
        [](const std::vector<double>& v) { return log_sum_exp(v); },
        py::arg("values"));
  m.def("softmax",
        [](const std::vector<double>& v) { return stable_softmax(v); },
        py::arg("values"));

  m.def("lt_counts", &lt_counts, py::arg("num_classes"), py::arg("n0"), py::arg("rho"));
  m.def("st_counts", &st_counts, py::arg("num_classes"), py::arg("n_major"),
        py::arg("rho"));

  m.def("p_star",
        [](const std::vector<double>& losses, double lam) { return p_star(losses, lam); },
        py::arg("losses"), py::arg("lam"));
  m.def("f_lambda",
        [](const std::vector<double>& losses, double lam, double reg) {
          return f_lambda(losses, lam, reg);
        },
        py::arg("losses"), py::arg("lam"), py::arg("reg") = 0.0);
  m.def("f_minmax",
        [](const std::vector<double>& losses, const std::vector<double>& p, double lam,
           double reg) { return f_minmax(losses, p, lam, reg); },
        py::arg("losses"), py::arg("p"), py::arg("lam"), py::arg("reg") = 0.0);
  m.def("kl_to_uniform",
        [](const std::vector<double>& p) { return kl_to_uniform(p); }, py::arg("p"));

  m.def("batch_g_tilde",
        [](const std::vector<double>& losses, double lam) {
          return batch_g_tilde(losses, lam);
        },
        py::arg("batch_losses"), py::arg("lam"));
  m.def("update_normalizer", &update_normalizer, py::arg("s"), py::arg("g_tilde"),
        py::arg("ema_gamma"));
  m.def("batch_weights",
        [](const std::vector<double>& losses, double lam, double s_next) {
          return batch_weights(losses, lam, s_next);
        },
        py::arg("batch_losses"), py::arg("lam"), py::arg("s_next"));

  m.def(
      "run_experiment_json",
      [](const std::string& config_json, std::uint64_t seed) {
        const ExperimentConfig config =
            parse_config(nlohmann::json::parse(config_json));
        const RunRecord record = run_experiment(config, seed);
        nlohmann::json j = record_to_json(record);
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& t : record.trace)
          trace.push_back({{"epoch", t.epoch},
                           {"train_loss", t.train_loss},
                           {"test_top1", t.test_top1},
                           {"s", t.s}});
        j["trace"] = std::move(trace);
        return j.dump();
      },
      py::arg("config_json"), py::arg("seed"),
      "Run one experiment from a JSON config string; returns the run record "
      "as a JSON string.");
}
