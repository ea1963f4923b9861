// Command line front end: corpus generation and ingestion, augmentation,
// paradigm experiments, grid search, gradient checking and report rendering.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedfusion/alignment.hpp"
#include "fedfusion/augmentation.hpp"
#include "fedfusion/fusion.hpp"
#include "fedfusion/gradcheck.hpp"
#include "fedfusion/harness.hpp"
#include "fedfusion/param_vector.hpp"
#include "fedfusion/profile.hpp"
#include "fedfusion/rng.hpp"

namespace fs = std::filesystem;
using namespace fedfusion;

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

harness::ExperimentConfig read_experiment(const std::string& path) {
  return harness::experiment_from_json(read_json_file(path));
}

void print_corpus_summary(const aug::Corpus& corpus, const std::string& where) {
  int ad = 0;
  int min_words = 0;
  int max_words = 0;
  int markers = 0;
  for (const aug::Sample& s : corpus.samples) {
    if (s.label == Label::ad) ++ad;
    int words = static_cast<int>(s.words.size());
    if (min_words == 0 || words < min_words) min_words = words;
    max_words = std::max(max_words, words);
    markers += static_cast<int>(s.tokens.size()) - words;
  }
  int n = static_cast<int>(corpus.samples.size());
  int dim = corpus.samples.empty() ? 0 : corpus.samples.front().audio_words.cols;
  std::cout << n << " samples in " << where << " (" << ad << " AD / " << (n - ad) << " CN, "
            << dim << "-dim features, words " << min_words << ".." << max_words << ", " << markers
            << " pause markers)\n";
}

// Padded random sample for standalone gradient checks. Row 1 acts as a pause
// slot: text row present, audio row zero and unmasked.
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

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed, bool seed_given, int n_per_class, double pathology,
                 double pause_shift, double noise_std) {
  aug::SynthCorpusConfig synth;
  if (!config_path.empty()) synth = read_experiment(config_path).synth;
  if (seed_given) synth.seed = seed;
  if (n_per_class > 0) synth.n_per_class = n_per_class;
  if (pathology >= 0.0) synth.pathology_strength = pathology;
  if (pause_shift >= 0.0) synth.pause_shift = pause_shift;
  if (noise_std >= 0.0) synth.noise_std = noise_std;

  aug::SynthGenerator gen(synth);
  std::vector<aug::Sample> samples = gen.generate();
  aug::save_corpus(out_dir, synth, samples);
  print_corpus_summary(aug::load_corpus(out_dir), out_dir);
  return 0;
}

// Scans a directory of loose recordings (<stem>.transcript.json plus
// <stem>.audio.fpv and <stem>.text.fpv) and writes the corpus manifest, then
// reloads the corpus so every sample passes the alignment pipeline.
int cmd_align(const std::string& dir) {
  const std::string suffix = ".transcript.json";
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  if (stems.empty()) throw std::runtime_error("align: no *.transcript.json files in " + dir);
  std::sort(stems.begin(), stems.end());

  nlohmann::json index = nlohmann::json::array();
  for (const std::string& stem : stems) {
    for (const char* part : {".audio.fpv", ".text.fpv"}) {
      if (!fs::exists(fs::path(dir) / (stem + part))) {
        throw std::runtime_error("align: missing " + stem + part);
      }
    }
    align::Transcript t = align::load_transcript(fs::path(dir) / (stem + suffix));
    nlohmann::json entry{{"id", stem},
                         {"speaker_id", t.speaker_id},
                         {"label", to_string(t.label)},
                         {"transcript", stem + suffix},
                         {"audio", stem + ".audio.fpv"},
                         {"text", stem + ".text.fpv"}};
    if (fs::exists(fs::path(dir) / (stem + ".speaker.fpv"))) {
      entry["speaker_factors"] = stem + ".speaker.fpv";
    }
    if (fs::exists(fs::path(dir) / (stem + ".content.fpv"))) {
      entry["content_factors"] = stem + ".content.fpv";
    }
    index.push_back(entry);
  }

  nlohmann::json manifest{{"format", "fedfusion-corpus-v1"}, {"samples", index}};
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("align: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
  out.close();

  print_corpus_summary(aug::load_corpus(dir), dir);
  return 0;
}

int cmd_augment(const std::string& corpus_dir, const std::string& out_dir, std::uint64_t seed) {
  aug::Corpus corpus = aug::load_corpus(corpus_dir);
  if (!corpus.synth.has_value()) {
    throw std::runtime_error("augment: corpus is not factorized (no generator config)");
  }
  aug::SynthGenerator gen(*corpus.synth);
  std::vector<aug::Sample> augmented = aug::augment_dataset(corpus.samples, gen, seed);
  aug::save_corpus(out_dir, *corpus.synth, augmented);
  std::cout << "augmented " << corpus.samples.size() << " -> " << augmented.size()
            << " samples\n";
  print_corpus_summary(aug::load_corpus(out_dir), out_dir);
  return 0;
}

int cmd_run(harness::ExperimentConfig cfg, int workers, const std::string& out_stem) {
  harness::RunReport report = harness::run_experiment(cfg, workers);
  std::string stem = out_stem.empty() ? cfg.name : out_stem;
  std::cout << harness::emit_report({report}, stem);
  std::cout << "wrote " << stem << ".json, " << stem << ".csv, " << stem << "_meta.json\n";
  return 0;
}

int cmd_grid(const harness::ExperimentConfig& cfg, const std::string& grid_path, int workers,
             const std::string& out_path) {
  nlohmann::json grid_doc = read_json_file(grid_path);
  harness::GridSpace space;
  for (const auto& [key, candidates] : grid_doc.items()) {
    if (!candidates.is_array()) throw std::runtime_error("grid: " + key + " is not an array");
    space[key] = std::vector<nlohmann::json>(candidates.begin(), candidates.end());
  }

  harness::GridResult result = harness::grid_search(cfg, space, workers);

  nlohmann::json rows = nlohmann::json::array();
  for (const harness::GridRow& row : result.rows) {
    nlohmann::json point(row.point);
    std::cout << point.dump() << "  val acc " << harness::format_percent(row.val_accuracy)
              << "  val f1 " << harness::format_percent(row.val_f1) << "\n";
    rows.push_back({{"point", point},
                    {"val_accuracy", row.val_accuracy},
                    {"val_f1", row.val_f1}});
  }
  nlohmann::json best(result.best_point);
  std::cout << "best: " << best.dump() << "\n";

  std::string path = out_path.empty() ? cfg.name + "_grid.json" : out_path;
  nlohmann::json doc{{"name", cfg.name},
                     {"hash", harness::config_hash(cfg)},
                     {"best_point", best},
                     {"rows", rows}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("grid: cannot write " + path);
  out << doc.dump(2) << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_gradcheck(const fusion::FusionConfig& cfg, int instances, std::uint64_t seed,
                  double tol) {
  cfg.validate();
  bool all_pass = true;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    int span = std::max(cfg.max_len - 2, 1);
    int n_tokens = std::min(cfg.max_len, 3 + i % span);
    align::AlignedSample sample = gradcheck_sample(cfg, seed + static_cast<std::uint64_t>(i),
                                                   n_tokens);
    ParamVector flat = fusion::flatten(
        fusion::init_params(cfg, seed + 1000 + static_cast<std::uint64_t>(i)), cfg);
    auto f = [&](const ParamVector& theta) { return fusion::loss_and_grad(sample, theta, cfg); };
    GradCheckReport rep = grad_check(f, flat, tol);
    worst = std::max(worst, rep.max_rel_error);
    all_pass = all_pass && rep.pass;
    std::cout << (rep.pass ? "pass" : "FAIL") << "  instance " << i << "  tokens " << n_tokens
              << "  max rel err " << rep.max_rel_error << "\n";
  }
  std::cout << (all_pass ? "pass" : "FAIL") << "  " << instances << " instances, worst "
            << worst << ", tol " << tol << "\n";
  return all_pass ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& files, const std::string& out_stem) {
  std::vector<harness::RunReport> reports;
  for (const std::string& file : files) {
    nlohmann::json doc = read_json_file(file);
    if (doc.is_array()) {
      for (const auto& item : doc) reports.push_back(harness::report_from_json(item));
    } else {
      reports.push_back(harness::report_from_json(doc));
    }
  }
  if (out_stem.empty()) {
    std::cout << harness::render_table(reports);
  } else {
    std::cout << harness::emit_report(reports, out_stem);
    std::cout << "wrote " << out_stem << ".json, " << out_stem << ".csv, " << out_stem
              << "_meta.json\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-modal fusion classifier: corpora, federation and reports"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string profile = "test";
  app.add_option("--profile", profile, "numeric profile: test (64-bit) or run (32-bit storage)")
      ->check(CLI::IsMember({"test", "run"}));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic factorized corpus");
  std::string gen_config;
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  int gen_n = 0;
  double gen_pathology = -1.0;
  double gen_pause = -1.0;
  double gen_noise = -1.0;
  gen->add_option("--config", gen_config, "experiment config JSON (synth block is used)");
  gen->add_option("--out", gen_out, "corpus output directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--n-per-class", gen_n, "samples per class");
  gen->add_option("--pathology-strength", gen_pathology, "audio class signal strength");
  gen->add_option("--pause-shift", gen_pause, "extra mean inter-word gap for AD");
  gen->add_option("--noise-std", gen_noise, "audio noise level");

  // align
  auto* align_cmd = app.add_subcommand(
      "align", "ingest loose transcript/feature files and write a corpus manifest");
  std::string align_dir;
  align_cmd->add_option("--dir", align_dir, "directory of *.transcript.json + *.fpv files")
      ->required();

  // augment
  auto* augment_cmd = app.add_subcommand("augment", "cross-category recombination of a corpus");
  std::string augment_in;
  std::string augment_out;
  std::uint64_t augment_seed = 1;
  augment_cmd->add_option("--corpus", augment_in, "factorized corpus directory")->required();
  augment_cmd->add_option("--out", augment_out, "augmented corpus output directory")->required();
  augment_cmd->add_option("--seed", augment_seed, "source-pick seed");

  // run
  auto* run_cmd = app.add_subcommand("run", "run a paradigm experiment and emit reports");
  std::string run_config;
  std::uint64_t run_seed = 0;
  int run_workers = 1;
  std::string run_out;
  std::string run_corpus;
  std::string run_snapshots;
  std::string run_paradigm;
  run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
  auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "replace the config seed list");
  run_cmd->add_option("--workers", run_workers, "concurrent (seed, fold) jobs");
  run_cmd->add_option("--out", run_out, "report stem (default: experiment name)");
  run_cmd->add_option("--corpus", run_corpus, "load this corpus instead of generating");
  run_cmd->add_option("--snapshot-dir", run_snapshots, "persist round snapshots under this dir");
  run_cmd->add_option("--paradigm", run_paradigm, "cl, ll or fl")
      ->check(CLI::IsMember({"cl", "ll", "fl"}));
  auto* run_augment_opt = run_cmd->add_flag("--augment,!--no-augment", "toggle augmentation");

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "exhaustive parameter grid search");
  std::string grid_config;
  std::string grid_spec;
  int grid_workers = 1;
  std::string grid_out;
  std::uint64_t grid_seed = 0;
  grid_cmd->add_option("--config", grid_config, "experiment config JSON")->required();
  grid_cmd->add_option("--grid", grid_spec, "grid JSON: {\"param\": [candidates...]}")
      ->required();
  grid_cmd->add_option("--workers", grid_workers, "concurrent grid cells");
  grid_cmd->add_option("--out", grid_out, "result JSON path (default: <name>_grid.json)");
  auto* grid_seed_opt = grid_cmd->add_option("--seed", grid_seed, "replace the config seed list");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the fusion model");
  fusion::FusionConfig gc_cfg;
  gc_cfg.hidden_dim = 8;
  gc_cfg.heads = 2;
  gc_cfg.max_len = 6;
  gc_cfg.mlp_hidden = 4;
  int gc_instances = 20;
  std::uint64_t gc_seed = 400;
  double gc_tol = 1e-5;
  std::string gc_modality = "both";
  gc_cmd->add_option("--instances", gc_instances, "number of random instances");
  gc_cmd->add_option("--seed", gc_seed, "base seed");
  gc_cmd->add_option("--hidden", gc_cfg.hidden_dim, "hidden width");
  gc_cmd->add_option("--heads", gc_cfg.heads, "attention heads");
  gc_cmd->add_option("--max-len", gc_cfg.max_len, "padded token length");
  gc_cmd->add_option("--mlp-hidden", gc_cfg.mlp_hidden, "classifier hidden width");
  gc_cmd->add_option("--tol", gc_tol, "max relative error bound");
  gc_cmd->add_flag("--include-ffn", gc_cfg.include_ffn, "include the feed-forward block");
  gc_cmd->add_option("--modality", gc_modality, "audio, text or both")
      ->check(CLI::IsMember({"audio", "text", "both"}));

  // report
  auto* report_cmd = app.add_subcommand("report", "render or merge saved report JSON files");
  std::vector<std::string> report_files;
  std::string report_out;
  report_cmd->add_option("files", report_files, "report JSON files")->required();
  report_cmd->add_option("--out", report_out, "re-emit merged reports under this stem");

  CLI11_PARSE(app, argc, argv);

  set_profile(profile == "run" ? Profile::run32 : Profile::test64);

  try {
    if (app.got_subcommand(gen)) {
      return cmd_gen_data(gen_config, gen_out, gen_seed, gen_seed_opt->count() > 0, gen_n,
                          gen_pathology, gen_pause, gen_noise);
    }
    if (app.got_subcommand(align_cmd)) return cmd_align(align_dir);
    if (app.got_subcommand(augment_cmd)) return cmd_augment(augment_in, augment_out, augment_seed);
    if (app.got_subcommand(run_cmd)) {
      harness::ExperimentConfig cfg = read_experiment(run_config);
      if (run_seed_opt->count() > 0) cfg.seeds = {run_seed};
      if (!run_corpus.empty()) cfg.corpus_path = run_corpus;
      if (!run_snapshots.empty()) cfg.snapshot_dir = run_snapshots;
      if (!run_paradigm.empty()) cfg.paradigm = harness::paradigm_from_string(run_paradigm);
      if (run_augment_opt->count() > 0) cfg.augment = run_augment_opt->as<bool>();
      return cmd_run(cfg, run_workers, run_out);
    }
    if (app.got_subcommand(grid_cmd)) {
      harness::ExperimentConfig cfg = read_experiment(grid_config);
      if (grid_seed_opt->count() > 0) cfg.seeds = {grid_seed};
      return cmd_grid(cfg, grid_spec, grid_workers, grid_out);
    }
    if (app.got_subcommand(gc_cmd)) {
      gc_cfg.modality = fusion::modality_from_string(gc_modality);
      return cmd_gradcheck(gc_cfg, gc_instances, gc_seed, gc_tol);
    }
    if (app.got_subcommand(report_cmd)) return cmd_report(report_files, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
