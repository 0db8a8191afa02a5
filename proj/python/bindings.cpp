#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "magfuse/commands.hpp"
#include "magfuse/data.hpp"
#include "magfuse/errors.hpp"
#include "magfuse/metrics.hpp"

namespace py = pybind11;
using namespace magfuse;

PYBIND11_MODULE(_core, m) {
  m.doc() = "MAG-fusion multimodal sentiment toolkit (C++ core)";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const NumericError& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    } catch (const Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("binary_accuracy",
        [](const std::vector<double>& p, const std::vector<double>& l) {
          return binary_accuracy(p, l);
        },
        py::arg("preds"), py::arg("labels"));
  m.def("f1_binary",
        [](const std::vector<double>& p, const std::vector<double>& l) {
          return f1_binary(p, l);
        },
        py::arg("preds"), py::arg("labels"));
  m.def("mae",
        [](const std::vector<double>& p, const std::vector<double>& l) {
          return mae(p, l);
        },
        py::arg("preds"), py::arg("labels"));
  m.def("pearson",
        [](const std::vector<double>& p, const std::vector<double>& l) {
          return pearson(p, l);
        },
        py::arg("preds"), py::arg("labels"));
  m.def("metrics_report_json",
        [](const std::vector<double>& p, const std::vector<double>& l) {
          return compute_metrics(p, l).to_json();
        },
        py::arg("preds"), py::arg("labels"));

  m.def(
      "gen_json",
      [](std::size_t n, std::optional<std::uint64_t> seed, const std::string& out_dir,
         std::size_t l_min, std::size_t l_max, std::size_t d_visual,
         std::size_t d_acoustic, double w_text, double w_visual, double w_acoustic,
         double sigma) {
        GenOptions opts;
        opts.n = n;
        opts.seed = seed;
        opts.out_dir = out_dir;
        opts.gen.l_min = l_min;
        opts.gen.l_max = l_max;
        opts.gen.d_visual = d_visual;
        opts.gen.d_acoustic = d_acoustic;
        opts.gen.w_text = w_text;
        opts.gen.w_visual = w_visual;
        opts.gen.w_acoustic = w_acoustic;
        opts.gen.sigma = sigma;
        return cmd_gen(opts);
      },
      py::arg("n"), py::arg("seed"), py::arg("out_dir"), py::arg("l_min") = 4,
      py::arg("l_max") = 12, py::arg("d_visual") = 3, py::arg("d_acoustic") = 3,
      py::arg("w_text") = 1.0 / 3.0, py::arg("w_visual") = 1.0 / 3.0,
      py::arg("w_acoustic") = 1.0 / 3.0, py::arg("sigma") = 0.1);

  m.def(
      "train_json",
      [](const std::string& data, const std::string& out_dir,
         std::optional<std::string> config, const std::vector<std::string>& overrides,
         std::optional<std::uint64_t> seed) {
        TrainOptions opts;
        opts.data = data;
        opts.out_dir = out_dir;
        if (config) opts.config_file = *config;
        opts.overrides = overrides;
        opts.seed = seed;
        return cmd_train(opts);
      },
      py::arg("data"), py::arg("out_dir"), py::arg("config") = std::nullopt,
      py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = std::nullopt);

  m.def(
      "eval_json",
      [](const std::string& checkpoint, const std::string& data,
         std::optional<std::string> out_dir) {
        EvalOptions opts;
        opts.checkpoint_dir = checkpoint;
        opts.data = data;
        if (out_dir) opts.out_dir = *out_dir;
        return cmd_eval(opts);
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("out_dir") = std::nullopt);

  m.def(
      "highlight_json",
      [](const std::string& checkpoint, const std::string& stream, std::size_t window,
         std::size_t stride, std::optional<double> threshold,
         std::optional<double> quantile, std::size_t min_gap, std::size_t min_len,
         bool positive_only, std::optional<std::string> out_dir) {
        HighlightOptions opts;
        opts.checkpoint_dir = checkpoint;
        opts.stream = stream;
        opts.window_len = window;
        opts.stride = stride;
        opts.threshold = threshold;
        opts.quantile = quantile;
        opts.min_gap = min_gap;
        opts.min_len = min_len;
        opts.positive_only = positive_only;
        if (out_dir) opts.out_dir = *out_dir;
        return cmd_highlight(opts);
      },
      py::arg("checkpoint"), py::arg("stream"), py::arg("window"), py::arg("stride") = 1,
      py::arg("threshold") = std::nullopt, py::arg("quantile") = std::nullopt,
      py::arg("min_gap") = 0, py::arg("min_len") = 0, py::arg("positive_only") = false,
      py::arg("out_dir") = std::nullopt);
}
