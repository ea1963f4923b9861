// Python bindings for the main operations: corpus generation and
// augmentation, pause-marker alignment, gradient checking, experiments,
// grid search and report rendering. Configs and reports cross the boundary
// as plain dicts mirroring the JSON files the CLI reads and writes.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "fedfusion/alignment.hpp"
#include "fedfusion/augmentation.hpp"
#include "fedfusion/fusion.hpp"
#include "fedfusion/gradcheck.hpp"
#include "fedfusion/harness.hpp"
#include "fedfusion/param_vector.hpp"
#include "fedfusion/profile.hpp"
#include "fedfusion/rng.hpp"

namespace py = pybind11;
using namespace fedfusion;

namespace {

nlohmann::json to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) {
    // seeds may exceed the signed range
    try {
      return obj.cast<std::int64_t>();
    } catch (const py::cast_error&) {
      return obj.cast<std::uint64_t>();
    }
  }
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& item : obj.cast<py::dict>()) {
      out[item.first.cast<std::string>()] = to_json(item.second);
    }
    return out;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& item : obj.cast<py::sequence>()) out.push_back(to_json(item));
    return out;
  }
  throw std::invalid_argument("unsupported value type: " +
                              std::string(py::str(obj.get_type())));
}

py::object from_json(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(from_json(item));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = from_json(value);
      return out;
    }
    default:
      throw std::invalid_argument("unsupported JSON value");
  }
}

harness::ExperimentConfig experiment_from_dict(const py::dict& cfg) {
  return harness::experiment_from_json(to_json(cfg));
}

std::vector<harness::RunReport> reports_from_list(const py::list& reports) {
  std::vector<harness::RunReport> out;
  out.reserve(reports.size());
  for (const auto& item : reports) out.push_back(harness::report_from_json(to_json(item)));
  return out;
}

// Padded random sample for the standalone gradient check. Row 1 acts as a
// pause slot: text row present, audio row zero and unmasked.
align::AlignedSample gradcheck_sample(const fusion::FusionConfig& cfg, std::uint64_t seed,
                                      int n_tokens) {
  Rng rng(seed);
  align::AlignedSample s;
  s.a = Tensor2::zeros(cfg.max_len, cfg.hidden_dim);
  s.t = Tensor2::zeros(cfg.max_len, cfg.hidden_dim);
  s.mask_a.assign(static_cast<std::size_t>(cfg.max_len), 0);
  s.mask_t.assign(static_cast<std::size_t>(cfg.max_len), 0);
  for (int i = 0; i < n_tokens; ++i) {
    bool pause = i == 1 && n_tokens > 2;
    s.mask_t[static_cast<std::size_t>(i)] = 1;
    for (int c = 0; c < cfg.hidden_dim; ++c) s.t.at(i, c) = rng.normal();
    if (!pause) {
      s.mask_a[static_cast<std::size_t>(i)] = 1;
      for (int c = 0; c < cfg.hidden_dim; ++c) s.a.at(i, c) = rng.normal();
    }
  }
  s.label = seed % 2 == 0 ? Label::cn : Label::ad;
  s.speaker_id = "spk-check";
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "gated cross-modal fusion classifier with federated training";
  m.attr("__version__") = "0.1.0";

  m.def(
      "set_profile",
      [](const std::string& name) {
        if (name == "test") {
          set_profile(Profile::test64);
        } else if (name == "run") {
          set_profile(Profile::run32);
        } else {
          throw std::invalid_argument("profile must be 'test' or 'run'");
        }
      },
      py::arg("name"), "Numeric profile: 'test' keeps 64-bit storage, 'run' narrows to 32.");

  m.def("current_profile",
        []() { return current_profile() == Profile::test64 ? "test" : "run"; });

  m.def(
      "mix_seed",
      [](const std::vector<std::uint64_t>& parts) {
        return mix_seed(std::span<const std::uint64_t>(parts));
      },
      py::arg("parts"), "Deterministically folds seed parts into one stream seed.");

  m.def("default_config", []() { return from_json(harness::experiment_to_json({})); },
        "Experiment config dict with every field at its default.");

  m.def(
      "config_hash",
      [](const py::dict& cfg) { return harness::config_hash(experiment_from_dict(cfg)); },
      py::arg("config"));

  m.def(
      "run_experiment",
      [](const py::dict& cfg, int workers) {
        harness::ExperimentConfig c = experiment_from_dict(cfg);
        harness::RunReport report;
        {
          py::gil_scoped_release release;
          report = harness::run_experiment(c, workers);
        }
        return from_json(harness::report_to_json(report));
      },
      py::arg("config"), py::arg("workers") = 1,
      "Runs the configured paradigm over every (seed, fold) job; returns the report dict.");

  m.def(
      "grid_search",
      [](const py::dict& cfg, const py::dict& space, int workers) {
        harness::ExperimentConfig c = experiment_from_dict(cfg);
        harness::GridSpace grid;
        for (const auto& item : space) {
          nlohmann::json candidates = to_json(item.second);
          if (!candidates.is_array()) {
            throw std::invalid_argument("grid values must be lists");
          }
          grid[item.first.cast<std::string>()] =
              std::vector<nlohmann::json>(candidates.begin(), candidates.end());
        }
        harness::GridResult result;
        {
          py::gil_scoped_release release;
          result = harness::grid_search(c, grid, workers);
        }
        nlohmann::json rows = nlohmann::json::array();
        for (const harness::GridRow& row : result.rows) {
          rows.push_back({{"point", nlohmann::json(row.point)},
                          {"val_accuracy", row.val_accuracy},
                          {"val_f1", row.val_f1}});
        }
        return from_json(nlohmann::json{{"best_point", nlohmann::json(result.best_point)},
                                        {"rows", rows}});
      },
      py::arg("config"), py::arg("space"), py::arg("workers") = 1,
      "Exhaustive search over {param: [candidates]}; scored on inner validation splits.");

  m.def(
      "generate_corpus",
      [](const std::string& out_dir, const py::dict& cfg) {
        aug::SynthCorpusConfig synth = experiment_from_dict(cfg).synth;
        aug::SynthGenerator gen(synth);
        std::vector<aug::Sample> samples = gen.generate();
        aug::save_corpus(out_dir, synth, samples);
        return static_cast<int>(samples.size());
      },
      py::arg("out_dir"), py::arg("config"),
      "Writes a synthetic factorized corpus from the config's synth block.");

  m.def(
      "augment_corpus",
      [](const std::string& corpus_dir, const std::string& out_dir, std::uint64_t seed) {
        aug::Corpus corpus = aug::load_corpus(corpus_dir);
        if (!corpus.synth.has_value()) {
          throw std::invalid_argument("corpus is not factorized (no generator config)");
        }
        aug::SynthGenerator gen(*corpus.synth);
        std::vector<aug::Sample> augmented = aug::augment_dataset(corpus.samples, gen, seed);
        aug::save_corpus(out_dir, *corpus.synth, augmented);
        return static_cast<int>(augmented.size());
      },
      py::arg("corpus_dir"), py::arg("out_dir"), py::arg("seed") = 1,
      "Cross-category recombination; writes originals plus converted samples.");

  m.def(
      "corpus_summary",
      [](const std::string& dir) {
        aug::Corpus corpus = aug::load_corpus(dir);
        int ad = 0;
        for (const aug::Sample& s : corpus.samples) {
          if (s.label == Label::ad) ++ad;
        }
        py::dict out;
        out["samples"] = static_cast<int>(corpus.samples.size());
        out["ad"] = ad;
        out["cn"] = static_cast<int>(corpus.samples.size()) - ad;
        out["dim"] = corpus.samples.empty() ? 0 : corpus.samples.front().audio_words.cols;
        out["factorized"] = corpus.synth.has_value();
        return out;
      },
      py::arg("dir"));

  m.def(
      "pause_tokens",
      [](const py::list& words, double comma, double period, double ellipsis) {
        std::vector<align::TimedWord> timed;
        timed.reserve(words.size());
        for (const auto& item : words) {
          py::dict w = item.cast<py::dict>();
          timed.push_back({w["text"].cast<std::string>(), w["start"].cast<double>(),
                           w["end"].cast<double>()});
        }
        std::vector<align::Token> tokens =
            align::insert_pause_tokens(timed, {comma, period, ellipsis});
        py::list out;
        for (const align::Token& t : tokens) {
          py::dict entry;
          static const char* kinds[] = {"word", "comma", "period", "ellipsis"};
          entry["kind"] = kinds[static_cast<int>(t.kind)];
          entry["text"] = t.text;
          entry["word_index"] = t.word_index;
          out.append(entry);
        }
        return out;
      },
      py::arg("words"), py::arg("comma") = 0.5, py::arg("period") = 1.0,
      py::arg("ellipsis") = 2.0,
      "Inserts at most one pause marker per inter-word gap; words are "
      "{text, start, end} dicts.");

  m.def(
      "grad_check_fusion",
      [](int hidden, int heads, int max_len, int mlp_hidden, const std::string& modality,
         int instances, std::uint64_t seed, double tol) {
        fusion::FusionConfig cfg;
        cfg.hidden_dim = hidden;
        cfg.heads = heads;
        cfg.max_len = max_len;
        cfg.mlp_hidden = mlp_hidden;
        cfg.modality = fusion::modality_from_string(modality);
        cfg.validate();
        double worst = 0.0;
        bool all_pass = true;
        for (int i = 0; i < instances; ++i) {
          int span = std::max(max_len - 2, 1);
          int n_tokens = std::min(max_len, 3 + i % span);
          align::AlignedSample sample =
              gradcheck_sample(cfg, seed + static_cast<std::uint64_t>(i), n_tokens);
          ParamVector flat = fusion::flatten(
              fusion::init_params(cfg, seed + 1000 + static_cast<std::uint64_t>(i)), cfg);
          auto f = [&](const ParamVector& theta) {
            return fusion::loss_and_grad(sample, theta, cfg);
          };
          GradCheckReport rep = grad_check(f, flat, tol);
          worst = std::max(worst, rep.max_rel_error);
          all_pass = all_pass && rep.pass;
        }
        py::dict out;
        out["max_rel_error"] = worst;
        out["pass"] = all_pass;
        out["instances"] = instances;
        return out;
      },
      py::arg("hidden") = 8, py::arg("heads") = 2, py::arg("max_len") = 6,
      py::arg("mlp_hidden") = 4, py::arg("modality") = "both", py::arg("instances") = 20,
      py::arg("seed") = 400, py::arg("tol") = 1e-5,
      "Finite-difference check of the fusion model gradient on random instances.");

  m.def("format_percent", &harness::format_percent, py::arg("fraction"),
        "Half-up percent with two decimals: 0.91515 -> '91.52'.");

  m.def(
      "render_table",
      [](const py::list& reports) { return harness::render_table(reports_from_list(reports)); },
      py::arg("reports"));

  m.def(
      "emit_report",
      [](const py::list& reports, const std::string& stem) {
        return harness::emit_report(reports_from_list(reports), stem);
      },
      py::arg("reports"), py::arg("stem"),
      "Writes <stem>.json, <stem>.csv and <stem>_meta.json; returns the rendered table.");
}
