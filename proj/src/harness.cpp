#include "fedfusion/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "fedfusion/rng.hpp"

namespace fedfusion::harness {

namespace {

constexpr std::uint64_t kJobStream = 0xE1;
constexpr std::uint64_t kGridStream = 0xE2;

}  // namespace

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::cl: return "cl";
    case Paradigm::ll: return "ll";
    default: return "fl";
  }
}

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "cl") return Paradigm::cl;
  if (s == "ll") return Paradigm::ll;
  if (s == "fl") return Paradigm::fl;
  throw std::invalid_argument("unknown paradigm: " + s);
}

int ExperimentConfig::epoch_budget() const {
  return cl_ll_epochs > 0 ? cl_ll_epochs : federation.rounds * federation.local_epochs;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw std::invalid_argument("ExperimentConfig: empty name");
  if (folds < 2) throw std::invalid_argument("ExperimentConfig: folds must be >= 2");
  if (cl_ll_epochs < 0) throw std::invalid_argument("ExperimentConfig: cl_ll_epochs must be >= 0");
  if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seed list is empty");
  model.validate();
  federation.validate();
  if (corpus_path.empty()) synth.validate();
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["paradigm"] = to_string(cfg.paradigm);
  j["augment"] = cfg.augment;
  j["folds"] = cfg.folds;
  j["cl_ll_epochs"] = cfg.cl_ll_epochs;
  j["seeds"] = cfg.seeds;
  j["corpus_path"] = cfg.corpus_path;
  j["snapshot_dir"] = cfg.snapshot_dir;
  j["model"] = {{"hidden_dim", cfg.model.hidden_dim},   {"heads", cfg.model.heads},
                {"max_len", cfg.model.max_len},         {"mlp_hidden", cfg.model.mlp_hidden},
                {"classes", cfg.model.classes},         {"include_ffn", cfg.model.include_ffn},
                {"ffn_hidden", cfg.model.ffn_hidden},   {"modality", to_string(cfg.model.modality)}};
  j["federation"] = {{"clients", cfg.federation.clients},
                     {"rounds", cfg.federation.rounds},
                     {"local_epochs", cfg.federation.local_epochs},
                     {"batch_size", cfg.federation.batch_size},
                     {"lr", cfg.federation.lr},
                     {"weight_decay", cfg.federation.weight_decay},
                     {"adam_beta1", cfg.federation.adam_beta1},
                     {"adam_beta2", cfg.federation.adam_beta2},
                     {"adam_eps", cfg.federation.adam_eps},
                     {"plain_gd", cfg.federation.plain_gd},
                     {"aggregator", fed::to_string(cfg.federation.aggregator)},
                     {"prox_mu", cfg.federation.prox_mu},
                     {"server_lr", cfg.federation.server_lr},
                     {"server_beta1", cfg.federation.server_beta1},
                     {"server_beta2", cfg.federation.server_beta2},
                     {"server_tau", cfg.federation.server_tau},
                     {"strategy", fed::to_string(cfg.federation.strategy)},
                     {"pfl_epochs", cfg.federation.pfl_epochs},
                     {"partition", fed::to_string(cfg.federation.partition)},
                     {"dirichlet_alpha", cfg.federation.dirichlet_alpha},
                     {"val_fraction", cfg.federation.val_fraction}};
  j["synth"] = {{"n_per_class", cfg.synth.n_per_class},
                {"d_s", cfg.synth.d_s},
                {"d_c", cfg.synth.d_c},
                {"d", cfg.synth.d},
                {"pathology_strength", cfg.synth.pathology_strength},
                {"pause_shift", cfg.synth.pause_shift},
                {"noise_std", cfg.synth.noise_std},
                {"min_words", cfg.synth.min_words},
                {"max_words", cfg.synth.max_words},
                {"word_duration", cfg.synth.word_duration},
                {"gap_mean", cfg.synth.gap_mean},
                {"gap_std", cfg.synth.gap_std},
                {"frame_hz", cfg.synth.frame_hz},
                {"pause_comma", cfg.synth.thresholds.comma},
                {"pause_period", cfg.synth.thresholds.period},
                {"pause_ellipsis", cfg.synth.thresholds.ellipsis}};
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.name = j.value("name", cfg.name);
  if (j.contains("paradigm")) cfg.paradigm = paradigm_from_string(j["paradigm"].get<std::string>());
  cfg.augment = j.value("augment", cfg.augment);
  cfg.folds = j.value("folds", cfg.folds);
  cfg.cl_ll_epochs = j.value("cl_ll_epochs", cfg.cl_ll_epochs);
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  cfg.corpus_path = j.value("corpus_path", cfg.corpus_path);
  cfg.snapshot_dir = j.value("snapshot_dir", cfg.snapshot_dir);
  if (j.contains("model")) {
    const nlohmann::json& m = j["model"];
    cfg.model.hidden_dim = m.value("hidden_dim", cfg.model.hidden_dim);
    cfg.model.heads = m.value("heads", cfg.model.heads);
    cfg.model.max_len = m.value("max_len", cfg.model.max_len);
    cfg.model.mlp_hidden = m.value("mlp_hidden", cfg.model.mlp_hidden);
    cfg.model.classes = m.value("classes", cfg.model.classes);
    cfg.model.include_ffn = m.value("include_ffn", cfg.model.include_ffn);
    cfg.model.ffn_hidden = m.value("ffn_hidden", cfg.model.ffn_hidden);
    if (m.contains("modality")) {
      cfg.model.modality = fusion::modality_from_string(m["modality"].get<std::string>());
    }
  }
  if (j.contains("federation")) {
    const nlohmann::json& f = j["federation"];
    cfg.federation.clients = f.value("clients", cfg.federation.clients);
    cfg.federation.rounds = f.value("rounds", cfg.federation.rounds);
    cfg.federation.local_epochs = f.value("local_epochs", cfg.federation.local_epochs);
    cfg.federation.batch_size = f.value("batch_size", cfg.federation.batch_size);
    cfg.federation.lr = f.value("lr", cfg.federation.lr);
    cfg.federation.weight_decay = f.value("weight_decay", cfg.federation.weight_decay);
    cfg.federation.adam_beta1 = f.value("adam_beta1", cfg.federation.adam_beta1);
    cfg.federation.adam_beta2 = f.value("adam_beta2", cfg.federation.adam_beta2);
    cfg.federation.adam_eps = f.value("adam_eps", cfg.federation.adam_eps);
    cfg.federation.plain_gd = f.value("plain_gd", cfg.federation.plain_gd);
    if (f.contains("aggregator")) {
      cfg.federation.aggregator = fed::aggregator_from_string(f["aggregator"].get<std::string>());
    }
    cfg.federation.prox_mu = f.value("prox_mu", cfg.federation.prox_mu);
    cfg.federation.server_lr = f.value("server_lr", cfg.federation.server_lr);
    cfg.federation.server_beta1 = f.value("server_beta1", cfg.federation.server_beta1);
    cfg.federation.server_beta2 = f.value("server_beta2", cfg.federation.server_beta2);
    cfg.federation.server_tau = f.value("server_tau", cfg.federation.server_tau);
    if (f.contains("strategy")) {
      cfg.federation.strategy = fed::strategy_from_string(f["strategy"].get<std::string>());
    }
    cfg.federation.pfl_epochs = f.value("pfl_epochs", cfg.federation.pfl_epochs);
    if (f.contains("partition")) {
      cfg.federation.partition = fed::partition_from_string(f["partition"].get<std::string>());
    }
    cfg.federation.dirichlet_alpha = f.value("dirichlet_alpha", cfg.federation.dirichlet_alpha);
    cfg.federation.val_fraction = f.value("val_fraction", cfg.federation.val_fraction);
  }
  if (j.contains("synth")) {
    const nlohmann::json& s = j["synth"];
    cfg.synth.n_per_class = s.value("n_per_class", cfg.synth.n_per_class);
    cfg.synth.d_s = s.value("d_s", cfg.synth.d_s);
    cfg.synth.d_c = s.value("d_c", cfg.synth.d_c);
    cfg.synth.d = s.value("d", cfg.synth.d);
    cfg.synth.pathology_strength = s.value("pathology_strength", cfg.synth.pathology_strength);
    cfg.synth.pause_shift = s.value("pause_shift", cfg.synth.pause_shift);
    cfg.synth.noise_std = s.value("noise_std", cfg.synth.noise_std);
    cfg.synth.min_words = s.value("min_words", cfg.synth.min_words);
    cfg.synth.max_words = s.value("max_words", cfg.synth.max_words);
    cfg.synth.word_duration = s.value("word_duration", cfg.synth.word_duration);
    cfg.synth.gap_mean = s.value("gap_mean", cfg.synth.gap_mean);
    cfg.synth.gap_std = s.value("gap_std", cfg.synth.gap_std);
    cfg.synth.frame_hz = s.value("frame_hz", cfg.synth.frame_hz);
    cfg.synth.thresholds.comma = s.value("pause_comma", cfg.synth.thresholds.comma);
    cfg.synth.thresholds.period = s.value("pause_period", cfg.synth.thresholds.period);
    cfg.synth.thresholds.ellipsis = s.value("pause_ellipsis", cfg.synth.thresholds.ellipsis);
  }
  return cfg;
}

std::string config_hash(const nlohmann::json& j) {
  std::string dump = j.dump();  // nlohmann objects iterate key-sorted
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return config_hash(experiment_to_json(cfg));
}

std::vector<std::vector<int>> kfold_split(const std::vector<Label>& labels, int k,
                                          std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (static_cast<std::size_t>(k) > labels.size()) {
    throw std::invalid_argument("kfold_split: k exceeds dataset size");
  }
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  Rng rng(seed);
  // global dealing cursor keeps overall fold sizes within one of each other
  // while each class is still spread evenly
  std::size_t cursor = 0;
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<int> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<int>(labels[i]) == cls) members.push_back(static_cast<int>(i));
    }
    rng.shuffle(members);
    for (int m : members) folds[cursor++ % static_cast<std::size_t>(k)].push_back(m);
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

namespace {

struct CellOutcome {
  double accuracy = 0.0;
  double f1 = 0.0;
  double ensemble_accuracy = 0.0;
  double ensemble_f1 = 0.0;
  std::vector<double> client_accuracy;
  std::vector<double> client_f1;
};

fed::FederationConfig cell_federation_config(const ExperimentConfig& cfg, std::uint64_t job_seed) {
  fed::FederationConfig f = cfg.federation;
  f.seed = job_seed;
  if (cfg.paradigm == Paradigm::cl) {
    f.clients = 1;
    f.partition = fed::PartitionScheme::uniform;
    f.strategy = fed::Strategy::sfl;
  }
  if (cfg.paradigm != Paradigm::fl && cfg.cl_ll_epochs > 0) {
    f.rounds = cfg.cl_ll_epochs;
    f.local_epochs = 1;
  }
  return f;
}

CellOutcome run_cell(const ExperimentConfig& cfg, const std::vector<aug::Sample>& train_pool,
                     const std::vector<align::AlignedSample>& test, std::uint64_t job_seed,
                     const aug::VoiceConverter* converter, const std::string& snapshot_subdir) {
  fed::FederationConfig fed_cfg = cell_federation_config(cfg, job_seed);
  std::vector<fed::ClientState> clients =
      fed::make_clients(train_pool, cfg.model, fed_cfg, converter, cfg.augment);

  std::vector<ParamVector> deployed;
  if (cfg.paradigm == Paradigm::ll) {
    deployed = fed::run_local_only(clients, cfg.model, fed_cfg);
  } else {
    std::unique_ptr<fed::SnapshotStore> store;
    if (!snapshot_subdir.empty()) {
      store = std::make_unique<fed::SnapshotStore>(snapshot_subdir, config_hash(cfg));
    }
    fed::FederationResult result =
        fed::run_federation(clients, cfg.model, fed_cfg, store.get());
    deployed = std::move(result.deployed);
  }

  CellOutcome out;
  for (const ParamVector& model : deployed) {
    Metrics m = fed::evaluate(model, cfg.model, test);
    out.client_accuracy.push_back(m.accuracy);
    out.client_f1.push_back(m.f1);
    out.accuracy += m.accuracy;
    out.f1 += m.f1;
  }
  out.accuracy /= static_cast<double>(deployed.size());
  out.f1 /= static_cast<double>(deployed.size());
  Metrics ens = fed::evaluate_ensemble(deployed, cfg.model, test);
  out.ensemble_accuracy = ens.accuracy;
  out.ensemble_f1 = ens.f1;
  return out;
}

struct SeedPool {
  std::vector<aug::Sample> samples;
  std::unique_ptr<aug::SynthGenerator> generator;  // converter when factorized
};

// One sample pool per seed: synthetic corpora are drawn per seed, an
// ingested corpus is shared across seeds.
std::vector<SeedPool> build_pools(const ExperimentConfig& cfg) {
  std::vector<SeedPool> pools(cfg.seeds.size());
  if (!cfg.corpus_path.empty()) {
    aug::Corpus corpus = aug::load_corpus(cfg.corpus_path);
    for (std::size_t i = 0; i < pools.size(); ++i) {
      pools[i].samples = corpus.samples;
      if (corpus.synth.has_value()) {
        pools[i].generator = std::make_unique<aug::SynthGenerator>(*corpus.synth);
      }
    }
    return pools;
  }
  for (std::size_t i = 0; i < pools.size(); ++i) {
    aug::SynthCorpusConfig synth = cfg.synth;
    synth.seed = cfg.seeds[i];
    pools[i].generator = std::make_unique<aug::SynthGenerator>(synth);
    pools[i].samples = pools[i].generator->generate();
  }
  return pools;
}

void run_jobs(int workers, int total, const std::function<void(int)>& job) {
  if (workers < 1) workers = 1;
  workers = std::min(workers, total);
  if (workers <= 1) {
    for (int i = 0; i < total; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      try {
        for (;;) {
          int i = next.fetch_add(1);
          if (i >= total) return;
          job(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  auto begin = std::chrono::steady_clock::now();
  std::vector<SeedPool> pools = build_pools(cfg);

  int n_seeds = static_cast<int>(cfg.seeds.size());
  int total = n_seeds * cfg.folds;
  std::vector<FoldResult> results(static_cast<std::size_t>(total));

  run_jobs(workers, total, [&](int idx) {
    int si = idx / cfg.folds;
    int fold = idx % cfg.folds;
    std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(si)];
    const SeedPool& pool = pools[static_cast<std::size_t>(si)];

    std::vector<Label> labels;
    labels.reserve(pool.samples.size());
    for (const aug::Sample& s : pool.samples) labels.push_back(s.label);
    auto folds = kfold_split(labels, cfg.folds, mix_seed({seed, kJobStream}));

    std::vector<char> in_test(pool.samples.size(), 0);
    for (int t : folds[static_cast<std::size_t>(fold)]) in_test[static_cast<std::size_t>(t)] = 1;
    std::vector<aug::Sample> train_pool;
    std::vector<align::AlignedSample> test;
    for (std::size_t i = 0; i < pool.samples.size(); ++i) {
      const aug::Sample& s = pool.samples[i];
      if (in_test[i]) {
        test.push_back(align::build_aligned_sample(s.tokens, s.audio_words, s.token_text,
                                                   cfg.model.max_len, s.label, s.speaker_id));
      } else {
        train_pool.push_back(s);
      }
    }

    std::string subdir;
    if (!cfg.snapshot_dir.empty()) {
      subdir = cfg.snapshot_dir + "/seed_" + std::to_string(seed) + "_fold_" +
               std::to_string(fold);
    }
    std::uint64_t job_seed = mix_seed({seed, static_cast<std::uint64_t>(fold), kJobStream});
    CellOutcome cell = run_cell(cfg, train_pool, test, job_seed, pool.generator.get(), subdir);

    FoldResult& r = results[static_cast<std::size_t>(idx)];
    r.seed = seed;
    r.fold = fold;
    r.accuracy = cell.accuracy;
    r.f1 = cell.f1;
    r.ensemble_accuracy = cell.ensemble_accuracy;
    r.ensemble_f1 = cell.ensemble_f1;
    r.client_accuracy = std::move(cell.client_accuracy);
    r.client_f1 = std::move(cell.client_f1);
  });

  RunReport report;
  report.name = cfg.name;
  report.hash = config_hash(cfg);
  report.seeds = cfg.seeds;
  report.folds = std::move(results);
  for (int si = 0; si < n_seeds; ++si) {
    double acc = 0.0;
    double f1 = 0.0;
    for (int f = 0; f < cfg.folds; ++f) {
      const FoldResult& r = report.folds[static_cast<std::size_t>(si * cfg.folds + f)];
      acc += r.accuracy;
      f1 += r.f1;
    }
    report.seed_mean_accuracy.push_back(acc / cfg.folds);
    report.seed_mean_f1.push_back(f1 / cfg.folds);
  }
  double acc = 0.0;
  double f1 = 0.0;
  for (const FoldResult& r : report.folds) {
    acc += r.accuracy;
    f1 += r.f1;
  }
  report.mean_accuracy = acc / static_cast<double>(report.folds.size());
  report.mean_f1 = f1 / static_cast<double>(report.folds.size());
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  return report;
}

// --- grid search ---------------------------------------------------------------

void apply_param(ExperimentConfig& cfg, const std::string& key, const nlohmann::json& value) {
  if (key == "lr") cfg.federation.lr = value.get<double>();
  else if (key == "weight_decay") cfg.federation.weight_decay = value.get<double>();
  else if (key == "batch_size") cfg.federation.batch_size = value.get<int>();
  else if (key == "local_epochs") cfg.federation.local_epochs = value.get<int>();
  else if (key == "rounds") cfg.federation.rounds = value.get<int>();
  else if (key == "clients") cfg.federation.clients = value.get<int>();
  else if (key == "prox_mu") cfg.federation.prox_mu = value.get<double>();
  else if (key == "server_lr") cfg.federation.server_lr = value.get<double>();
  else if (key == "server_beta1") cfg.federation.server_beta1 = value.get<double>();
  else if (key == "server_beta2") cfg.federation.server_beta2 = value.get<double>();
  else if (key == "server_tau") cfg.federation.server_tau = value.get<double>();
  else if (key == "pfl_epochs") cfg.federation.pfl_epochs = value.get<int>();
  else if (key == "dirichlet_alpha") cfg.federation.dirichlet_alpha = value.get<double>();
  else if (key == "aggregator") {
    cfg.federation.aggregator = fed::aggregator_from_string(value.get<std::string>());
  } else if (key == "strategy") {
    cfg.federation.strategy = fed::strategy_from_string(value.get<std::string>());
  } else if (key == "partition") {
    cfg.federation.partition = fed::partition_from_string(value.get<std::string>());
  } else if (key == "hidden_dim") cfg.model.hidden_dim = value.get<int>();
  else if (key == "heads") cfg.model.heads = value.get<int>();
  else if (key == "mlp_hidden") cfg.model.mlp_hidden = value.get<int>();
  else if (key == "include_ffn") cfg.model.include_ffn = value.get<bool>();
  else if (key == "max_len") cfg.model.max_len = value.get<int>();
  else if (key == "modality") {
    cfg.model.modality = fusion::modality_from_string(value.get<std::string>());
  } else if (key == "augment") cfg.augment = value.get<bool>();
  else if (key == "cl_ll_epochs") cfg.cl_ll_epochs = value.get<int>();
  else throw std::invalid_argument("grid: unknown parameter " + key);
}

std::vector<GridPoint> expand_grid(const GridSpace& space) {
  if (space.empty()) throw std::invalid_argument("grid_search: empty space");
  for (const auto& [key, candidates] : space) {
    if (candidates.empty()) {
      throw std::invalid_argument("grid_search: empty candidate list for " + key);
    }
  }
  std::vector<GridPoint> points;
  points.push_back({});
  for (const auto& [key, candidates] : space) {
    std::vector<GridPoint> expanded;
    expanded.reserve(points.size() * candidates.size());
    for (const GridPoint& base : points) {
      for (const nlohmann::json& candidate : candidates) {
        GridPoint next = base;
        next[key] = candidate;
        expanded.push_back(std::move(next));
      }
    }
    points = std::move(expanded);
  }
  return points;
}

GridResult grid_search(const ExperimentConfig& cfg, const GridSpace& space, int workers,
                       const GridObjective& objective) {
  cfg.validate();
  std::vector<GridPoint> points = expand_grid(space);
  std::vector<GridRow> rows(points.size());

  std::vector<SeedPool> pools;
  std::uint64_t seed0 = cfg.seeds.front();
  if (objective == nullptr) {
    ExperimentConfig probe = cfg;
    probe.seeds = {seed0};
    pools = build_pools(probe);
  }

  run_jobs(workers, static_cast<int>(points.size()), [&](int idx) {
    ExperimentConfig candidate = cfg;
    candidate.seeds = {seed0};
    for (const auto& [key, value] : points[static_cast<std::size_t>(idx)]) {
      apply_param(candidate, key, value);
    }
    GridRow& row = rows[static_cast<std::size_t>(idx)];
    row.point = points[static_cast<std::size_t>(idx)];
    if (objective != nullptr) {
      row.val_accuracy = objective(candidate, row.point);
      row.val_f1 = row.val_accuracy;
      return;
    }

    // nested validation: an inner split carved out of each fold's training
    // pool scores the candidate; test folds are never touched
    const SeedPool& pool = pools.front();
    std::vector<Label> labels;
    for (const aug::Sample& s : pool.samples) labels.push_back(s.label);
    auto folds = kfold_split(labels, cfg.folds, mix_seed({seed0, kJobStream}));
    double acc = 0.0;
    double f1 = 0.0;
    for (int fold = 0; fold < cfg.folds; ++fold) {
      std::vector<char> in_test(pool.samples.size(), 0);
      for (int t : folds[static_cast<std::size_t>(fold)]) {
        in_test[static_cast<std::size_t>(t)] = 1;
      }
      std::vector<aug::Sample> outer_train;
      for (std::size_t i = 0; i < pool.samples.size(); ++i) {
        if (!in_test[i]) outer_train.push_back(pool.samples[i]);
      }
      std::vector<Label> train_labels;
      for (const aug::Sample& s : outer_train) train_labels.push_back(s.label);
      auto [inner_train_idx, inner_val_idx] = fed::stratified_split(
          train_labels, 0.2, mix_seed({seed0, kGridStream, static_cast<std::uint64_t>(fold)}));
      std::vector<aug::Sample> inner_train;
      for (int i : inner_train_idx) inner_train.push_back(outer_train[static_cast<std::size_t>(i)]);
      std::vector<align::AlignedSample> inner_val;
      for (int i : inner_val_idx) {
        const aug::Sample& s = outer_train[static_cast<std::size_t>(i)];
        inner_val.push_back(align::build_aligned_sample(
            s.tokens, s.audio_words, s.token_text, candidate.model.max_len, s.label, s.speaker_id));
      }
      std::uint64_t job_seed =
          mix_seed({seed0, static_cast<std::uint64_t>(fold), kGridStream});
      CellOutcome cell =
          run_cell(candidate, inner_train, inner_val, job_seed, pool.generator.get(), "");
      acc += cell.accuracy;
      f1 += cell.f1;
    }
    row.val_accuracy = acc / cfg.folds;
    row.val_f1 = f1 / cfg.folds;
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].val_accuracy > rows[best].val_accuracy) {
      best = i;
      continue;
    }
    if (rows[i].val_accuracy < rows[best].val_accuracy) continue;
    double lr_i = rows[i].point.count("lr") ? rows[i].point.at("lr").get<double>()
                                            : cfg.federation.lr;
    double lr_b = rows[best].point.count("lr") ? rows[best].point.at("lr").get<double>()
                                               : cfg.federation.lr;
    if (lr_i < lr_b) best = i;  // remaining ties keep the earlier index
  }

  GridResult result;
  result.best_point = rows[best].point;
  result.best_config = cfg;
  for (const auto& [key, value] : result.best_point) apply_param(result.best_config, key, value);
  result.rows = std::move(rows);
  return result;
}

// --- reporting -------------------------------------------------------------------

std::string format_percent(double fraction) {
  // snap to 1e-11 first so decimal inputs sitting just under a half-step
  // boundary still round the way their decimal reading suggests
  long long fine = std::llround(fraction * 1e11);
  long long hundredths = (fine + 5'000'000) / 10'000'000;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%02lld", hundredths / 100, hundredths % 100);
  return buf;
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldResult& r : report.folds) {
    folds.push_back({{"seed", r.seed},
                     {"fold", r.fold},
                     {"accuracy", r.accuracy},
                     {"f1", r.f1},
                     {"ensemble_accuracy", r.ensemble_accuracy},
                     {"ensemble_f1", r.ensemble_f1},
                     {"client_accuracy", r.client_accuracy},
                     {"client_f1", r.client_f1}});
  }
  return nlohmann::json{{"name", report.name},
                        {"config_hash", report.hash},
                        {"seeds", report.seeds},
                        {"folds", folds},
                        {"seed_mean_accuracy", report.seed_mean_accuracy},
                        {"seed_mean_f1", report.seed_mean_f1},
                        {"mean_accuracy", report.mean_accuracy},
                        {"mean_f1", report.mean_f1}};
}

RunReport report_from_json(const nlohmann::json& j) {
  RunReport report;
  report.name = j.at("name").get<std::string>();
  report.hash = j.at("config_hash").get<std::string>();
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& f : j.at("folds")) {
    FoldResult r;
    r.seed = f.at("seed").get<std::uint64_t>();
    r.fold = f.at("fold").get<int>();
    r.accuracy = f.at("accuracy").get<double>();
    r.f1 = f.at("f1").get<double>();
    r.ensemble_accuracy = f.at("ensemble_accuracy").get<double>();
    r.ensemble_f1 = f.at("ensemble_f1").get<double>();
    r.client_accuracy = f.at("client_accuracy").get<std::vector<double>>();
    r.client_f1 = f.at("client_f1").get<std::vector<double>>();
    report.folds.push_back(std::move(r));
  }
  report.seed_mean_accuracy = j.at("seed_mean_accuracy").get<std::vector<double>>();
  report.seed_mean_f1 = j.at("seed_mean_f1").get<std::vector<double>>();
  report.mean_accuracy = j.at("mean_accuracy").get<double>();
  report.mean_f1 = j.at("mean_f1").get<double>();
  return report;
}

std::string render_table(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("render_table: no reports");
  std::size_t name_w = 4;
  for (const RunReport& r : reports) name_w = std::max(name_w, r.name.size());
  std::ostringstream out;
  out << std::string(name_w, ' ') << "  Accuracy (%)  F1 (%)\n";
  for (const RunReport& r : reports) {
    out << r.name << std::string(name_w - r.name.size(), ' ') << "  "
        << format_percent(r.mean_accuracy) << std::string(14 - format_percent(r.mean_accuracy).size(), ' ')
        << format_percent(r.mean_f1) << "\n";
  }
  return out.str();
}

std::string emit_report(const std::vector<RunReport>& reports, const std::string& stem) {
  if (reports.empty()) throw std::invalid_argument("emit_report: no reports");
  nlohmann::json all = nlohmann::json::array();
  for (const RunReport& r : reports) all.push_back(report_to_json(r));
  {
    std::ofstream out(stem + ".json", std::ios::trunc);
    if (!out) throw std::runtime_error("emit_report: cannot write " + stem + ".json");
    out << all.dump(2) << "\n";
  }
  {
    std::ofstream out(stem + ".csv", std::ios::trunc);
    if (!out) throw std::runtime_error("emit_report: cannot write " + stem + ".csv");
    out << "name,seed,fold,accuracy,f1,ensemble_accuracy,ensemble_f1\n";
    for (const RunReport& r : reports) {
      for (const FoldResult& f : r.folds) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%llu,%d,%.17g,%.17g,%.17g,%.17g\n", r.name.c_str(),
                      static_cast<unsigned long long>(f.seed), f.fold, f.accuracy, f.f1,
                      f.ensemble_accuracy, f.ensemble_f1);
        out << line;
      }
    }
  }
  {
    nlohmann::json meta = nlohmann::json::array();
    for (const RunReport& r : reports) {
      meta.push_back({{"name", r.name}, {"runtime_seconds", r.runtime_seconds}});
    }
    std::ofstream out(stem + "_meta.json", std::ios::trunc);
    if (!out) throw std::runtime_error("emit_report: cannot write " + stem + "_meta.json");
    out << meta.dump(2) << "\n";
  }
  return render_table(reports);
}

}  // namespace fedfusion::harness
