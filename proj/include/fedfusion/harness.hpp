#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedfusion/augmentation.hpp"
#include "fedfusion/federation.hpp"
#include "fedfusion/fusion.hpp"

namespace fedfusion::harness {

enum class Paradigm { cl, ll, fl };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

struct ExperimentConfig {
  std::string name = "run";
  Paradigm paradigm = Paradigm::fl;
  fusion::FusionConfig model;
  fed::FederationConfig federation;
  aug::SynthCorpusConfig synth;
  std::string corpus_path;  // when set, loads instead of generating
  bool augment = false;
  int folds = 5;
  int cl_ll_epochs = 0;  // 0 means rounds * local_epochs (equal step budget)
  std::vector<std::uint64_t> seeds = {1};
  std::string snapshot_dir;  // empty disables persistence

  int epoch_budget() const;
  void validate() const;
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the sorted-key dump of the config JSON, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& cfg);

struct FoldResult {
  std::uint64_t seed = 0;
  int fold = 0;
  double accuracy = 0.0;  // mean over deployed per-client models
  double f1 = 0.0;
  double ensemble_accuracy = 0.0;  // logit-average ensemble
  double ensemble_f1 = 0.0;
  std::vector<double> client_accuracy;
  std::vector<double> client_f1;
};

struct RunReport {
  std::string name;
  std::string hash;
  std::vector<std::uint64_t> seeds;
  std::vector<FoldResult> folds;  // ordered by (seed position, fold)
  std::vector<double> seed_mean_accuracy;
  std::vector<double> seed_mean_f1;
  double mean_accuracy = 0.0;
  double mean_f1 = 0.0;
  double runtime_seconds = 0.0;  // kept out of the canonical JSON
};

// Stratified k-fold: returns k disjoint, exhaustive test-index folds whose
// sizes differ by at most one, with each class spread evenly across folds.
std::vector<std::vector<int>> kfold_split(const std::vector<Label>& labels, int k,
                                          std::uint64_t seed);

// Runs every (seed, fold) job, up to `workers` concurrently, and merges the
// results in a fixed order so scheduling never changes the report.
RunReport run_experiment(const ExperimentConfig& cfg, int workers = 1);

// --- grid search -------------------------------------------------------------

using GridSpace = std::map<std::string, std::vector<nlohmann::json>>;
using GridPoint = std::map<std::string, nlohmann::json>;

// Overwrites one config field addressed by a flat key ("lr", "batch_size",
// "local_epochs", "prox_mu", "server_lr", "hidden_dim", "heads", ...).
void apply_param(ExperimentConfig& cfg, const std::string& key, const nlohmann::json& value);

// Cartesian product of the space in key-sorted order, candidates in given order.
std::vector<GridPoint> expand_grid(const GridSpace& space);

struct GridRow {
  GridPoint point;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
};

struct GridResult {
  GridPoint best_point;
  ExperimentConfig best_config;
  std::vector<GridRow> rows;
};

// Scores a candidate config; injectable so tests can pin a known optimum.
using GridObjective = std::function<double(const ExperimentConfig&, const GridPoint&)>;

// Exhaustive search scored on an inner validation split carved from the
// training data of each fold (test folds stay untouched). Ties break to the
// smaller lr, then to the earlier Cartesian index.
GridResult grid_search(const ExperimentConfig& cfg, const GridSpace& space, int workers = 1,
                       const GridObjective& objective = nullptr);

// --- reporting ---------------------------------------------------------------

// Half-up percent with two decimals: 0.91515 -> "91.52".
std::string format_percent(double fraction);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

// Writes <stem>.json (canonical), <stem>.csv (per-fold rows), and
// <stem>_meta.json (runtime and environment); returns the rendered table.
std::string emit_report(const std::vector<RunReport>& reports, const std::string& stem);

// Plain text table, one row per report, percent columns.
std::string render_table(const std::vector<RunReport>& reports);

}  // namespace fedfusion::harness
