// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Thin bindings over the C++ core. Structured values cross the boundary as
// JSON text; the Python package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "vsm/corpus.hpp"
#include "vsm/errors.hpp"
#include "vsm/gaussian.hpp"
#include "vsm/harness.hpp"
#include "vsm/metrics.hpp"
#include "vsm/suites.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using namespace vsm;

const Corpus& pick_split(const CorpusSplits& data, const std::string& name) {
  std::string n = name;
  for (char& c : n) c = c == '_' ? '-' : c;
  switch (parse_split(n)) {
    case Split::meta_train: return data.meta_train;
    case Split::meta_validation: return data.meta_validation;
    case Split::meta_test: return data.meta_test;
    default: throw ConfigError("split must name meta-train, meta-validation or meta-test");
  }
}

json report_json(const EvalReport& r) {
  json seeds = json::array();
  for (const SeedReport& s : r.seeds) {
    json eps = json::array();
    for (const EpisodeScore& e : s.episodes) {
      eps.push_back({{"id", e.id}, {"word_id", e.word_id}, {"num_senses", e.num_senses}, {"macro_f1", e.macro_f1}});
    }
    seeds.push_back({{"seed", s.seed}, {"mean", s.mean}, {"episodes", eps}});
  }
  return {{"model", r.model}, {"support_size", r.support_size}, {"mean", r.mean}, {"std", r.std}, {"seeds", seeds}};
}

void write_synth(const std::string& spec_json, const std::string& meta, const std::string& blob) {
  write_corpus(synth_corpus(synth_spec_from_json(json::parse(spec_json))), meta, blob);
}

std::string corpus_summary(const std::string& meta, const std::string& blob) {
  const Corpus c = load_corpus(meta, blob);
  json words = json::object();
  for (const auto& [w, senses] : c.sense_inventory) words[w] = senses;
  return json{{"dim", c.dim}, {"records", c.records.size()}, {"inventory", words}}.dump();
}

std::string train(const std::string& config_json, std::uint64_t seed, const std::string& out) {
  const RunConfig cfg = run_config_from_json(json::parse(config_json));
  const Checkpoint ck = meta_train(cfg, load_data(cfg.data), seed);
  save_checkpoint(ck, out);
  json val = json::array();
  for (const auto& v : ck.validation) val.push_back({{"episodes", v.episodes}, {"macro_f1", v.macro_f1}});
  return json{{"episodes", ck.episodes_done}, {"loss_trace", ck.loss_trace}, {"validation", val},
              {"best_f1", ck.best_f1}}
      .dump();
}

std::string evaluate_paths(const std::vector<std::string>& paths, const std::string& split) {
  if (paths.empty()) throw ConfigError("at least one checkpoint is required");
  std::vector<Checkpoint> ckpts;
  for (const auto& p : paths) ckpts.push_back(load_checkpoint(p));
  const CorpusSplits data = load_data(ckpts.front().config.data);
  const auto eps = meta_test_episodes(ckpts.front().config, pick_split(data, split)).episodes;
  return report_json(evaluate(ckpts, eps)).dump();
}

std::string gradcheck(double tolerance) {
  json out = json::array();
  for (const GradientSuite& s : run_gradient_suites(tolerance)) {
    out.push_back({{"name", s.name},
                   {"passed", s.report.passed},
                   {"coordinates", s.report.coordinates},
                   {"max_rel_error", s.report.max_rel_error},
                   {"seconds", s.seconds}});
  }
  return out.dump();
}

double kl(const std::vector<double>& mq, const std::vector<double>& lq, const std::vector<double>& mp,
          const std::vector<double>& lp) {
  return kl_diag_gauss(GaussianDiag{Tensor::vector(mq), Tensor::vector(lq)},
                       GaussianDiag{Tensor::vector(mp), Tensor::vector(lp)});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Variational semantic memory for few-shot word sense disambiguation";

  py::register_exception<vsm::ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<vsm::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<vsm::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<vsm::UnsupportedError>(m, "UnsupportedError", PyExc_NotImplementedError);
  py::register_exception<vsm::EvaluationError>(m, "EvaluationError", PyExc_ArithmeticError);

  m.def("macro_f1", &vsm::macro_f1, py::arg("predictions"), py::arg("golds"), py::arg("num_classes"));
  m.def("kl_diag_gauss", &kl, py::arg("mean_q"), py::arg("log_var_q"), py::arg("mean_p"), py::arg("log_var_p"));
  m.def("write_synth_corpus", &write_synth, py::arg("spec_json"), py::arg("meta_path"), py::arg("blob_path"));
  m.def("corpus_summary", &corpus_summary, py::arg("meta_path"), py::arg("blob_path"));
  m.def("train", &train, py::arg("config_json"), py::arg("seed"), py::arg("out_path"),
        py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", &evaluate_paths, py::arg("checkpoints"), py::arg("split") = "meta-test",
        py::call_guard<py::gil_scoped_release>());
  m.def("gradcheck", &gradcheck, py::arg("tolerance") = 1e-4, py::call_guard<py::gil_scoped_release>());
  m.def("profiles", &vsm::hyper_profile_names);
}
