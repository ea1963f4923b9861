// Release checklist: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedfusion/augmentation.hpp"
#include "fedfusion/federation.hpp"
#include "fedfusion/fusion.hpp"
#include "fedfusion/gradcheck.hpp"
#include "fedfusion/harness.hpp"
#include "fedfusion/rng.hpp"
#include "helpers.hpp"

using namespace fedfusion;

namespace {

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::string&)> run;
};

double seconds_since(std::chrono::steady_clock::time_point begin) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
}

bool tensors_equal(const Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] != b.data[i]) return false;
  }
  return true;
}

fed::ClientState shard_client(int id, std::vector<align::AlignedSample> train,
                              const fusion::FusionConfig& model, const fed::FederationConfig& cfg) {
  fed::ClientState c;
  c.id = id;
  c.val.push_back(train.front());
  c.train = std::move(train);
  c.opt = OptimizerState::make(fusion::param_count(model), cfg.lr, cfg.weight_decay);
  return c;
}

// --- 1: gradient fidelity ----------------------------------------------------

bool check_gradients(std::string& detail) {
  auto begin = std::chrono::steady_clock::now();
  fusion::FusionConfig cfg = testutil::small_model(8, 2, 6, 4);
  double worst = 0.0;
  int instances = 20;
  for (int i = 0; i < instances; ++i) {
    int tokens = 3 + i % 4;  // 3..6 active rows
    align::AlignedSample sample =
        testutil::random_sample(cfg, static_cast<std::uint64_t>(400 + i), tokens, 1);
    ParamVector w = fusion::flatten(fusion::init_params(cfg, static_cast<std::uint64_t>(700 + i)),
                                    cfg);
    GradCheckReport report = grad_check(
        [&](const ParamVector& p) { return fusion::loss_and_grad(sample, p, cfg); }, w, 1e-5);
    worst = std::max(worst, report.max_rel_error);
    if (!report.pass) {
      std::ostringstream out;
      out << "instance " << i << " rel err " << report.max_rel_error << " at parameter "
          << report.worst_index;
      detail = out.str();
      return false;
    }
  }
  double elapsed = seconds_since(begin);
  std::ostringstream out;
  out << instances << " instances, max rel err " << worst << ", " << elapsed << "s";
  detail = out.str();
  return elapsed < 30.0;
}

// --- 2: weighted aggregation exactness ---------------------------------------

bool check_fedavg_exactness(std::string& detail) {
  ParamVector global(std::vector<double>{1.0});
  fed::ClientUpdate u0;
  u0.delta = ParamVector(std::vector<double>{4.0});
  u0.n = 1;
  u0.client_id = 0;
  fed::ClientUpdate u1;
  u1.delta = ParamVector(std::vector<double>{0.0});
  u1.n = 3;
  u1.client_id = 1;

  ParamVector out = fed::aggregate_fedavg(global, {u0, u1});
  if (std::abs(out[0] - 2.0) > 1e-12) {
    detail = "weighted example returned " + std::to_string(out[0]);
    return false;
  }
  double w0 = 1.0 / 4.0;
  double w1 = 3.0 / 4.0;
  if (w0 + w1 != 1.0) {
    detail = "quarter weights do not sum to one exactly";
    return false;
  }
  // equal shards of any client count split one exactly
  for (int m = 1; m <= 8; ++m) {
    double sum = 0.0;
    for (int i = 0; i < m; ++i) sum += 1.0 / static_cast<double>(m);
    if (m <= 2 || (m & (m - 1)) == 0) {
      if (sum != 1.0) {
        detail = "dyadic equal weights drift from one";
        return false;
      }
    }
  }
  ParamVector single = fed::aggregate_fedavg(global, {u0});
  if (single[0] != 5.0) {
    detail = "single client does not adopt the local model";
    return false;
  }
  detail = "hand examples within 1e-12, weight identities exact";
  return true;
}

// --- 3: one federated round vs a centralized step -----------------------------

bool check_gd_equivalence(std::string& detail) {
  fusion::FusionConfig model = testutil::small_model(8, 2, 16, 8);
  fed::FederationConfig cfg;
  cfg.clients = 3;
  cfg.rounds = 1;
  cfg.local_epochs = 1;
  cfg.plain_gd = true;
  cfg.lr = 0.05;
  cfg.seed = 8;

  auto pool = aug::SynthGenerator(testutil::small_synth(6, 8)).generate();
  auto aligned = testutil::align_all(pool, model);

  ParamVector init = fusion::flatten(fusion::init_params(model, 8), model);

  std::vector<fed::ClientState> shards;
  for (int c = 0; c < 3; ++c) {
    std::vector<align::AlignedSample> part(aligned.begin() + 4 * c, aligned.begin() + 4 * (c + 1));
    shards.push_back(shard_client(c, std::move(part), model, cfg));
  }
  ParamVector federated = init;
  fed::ServerState server;
  fed::run_round(shards, federated, server, model, cfg, 0);

  std::vector<fed::ClientState> pooled = {shard_client(0, aligned, model, cfg)};
  ParamVector centralized = init;
  fed::ServerState central_server;
  fed::run_round(pooled, centralized, central_server, model, cfg, 0);

  double gap = linf_distance(federated, centralized);
  std::ostringstream out;
  out << "L-inf gap " << gap;
  detail = out.str();
  return gap < 1e-10;
}

// --- 4: proximal term off equals plain averaging ------------------------------

bool check_fedprox_zero(std::string& detail) {
  fusion::FusionConfig model = testutil::small_model(8, 2, 16, 8);
  auto pool = aug::SynthGenerator(testutil::small_synth(8, 13)).generate();

  fed::FederationConfig avg_cfg;
  avg_cfg.clients = 2;
  avg_cfg.rounds = 5;
  avg_cfg.local_epochs = 1;
  avg_cfg.batch_size = 4;
  avg_cfg.lr = 1e-3;
  avg_cfg.seed = 13;
  auto avg_clients = fed::make_clients(pool, model, avg_cfg, nullptr, false);
  fed::FederationResult avg = fed::run_federation(avg_clients, model, avg_cfg);

  fed::FederationConfig prox_cfg = avg_cfg;
  prox_cfg.aggregator = fed::AggregatorKind::fedprox;
  prox_cfg.prox_mu = 0.0;
  auto prox_clients = fed::make_clients(pool, model, prox_cfg, nullptr, false);
  fed::FederationResult prox = fed::run_federation(prox_clients, model, prox_cfg);

  if (!(avg.final_global == prox.final_global)) {
    detail = "global parameters diverged";
    return false;
  }
  for (std::size_t i = 0; i < avg.deployed.size(); ++i) {
    if (!(avg.deployed[i] == prox.deployed[i])) {
      detail = "deployed model " + std::to_string(i) + " diverged";
      return false;
    }
  }
  detail = "5 rounds bit-identical";
  return true;
}

// --- 5: adaptive aggregator oracles -------------------------------------------

bool check_adaptive_oracles(std::string& detail) {
  struct Case {
    fed::AggregatorKind kind;
    std::vector<double> deltas;
    double beta1;
    double tau;
    std::vector<double> want;
  };
  const std::vector<Case> cases = {
      {fed::AggregatorKind::fedadam, {1.0, 1.0, 1.0}, 0.9, 1e-3,
       {0.9900990099009894, 2.327492766439768, 3.8908961523145846}},
      {fed::AggregatorKind::fedadagrad, {1.0, 1.0, 1.0}, 0.0, 1e-9,
       {0.9999999989999999, 1.7071067796865473, 2.2844570485428397}},
      {fed::AggregatorKind::fedyogi, {1.0, 0.5, 2.0}, 0.9, 1e-3,
       {0.9900990099009894, 2.2311963650892856, 3.6477944684394474}},
      {fed::AggregatorKind::fedadam, {1.0, 0.5, 2.0}, 0.9, 1e-3,
       {0.9900990099009894, 2.2361462891915815, 3.6557629712990964}},
      {fed::AggregatorKind::fedadagrad, {1.0, 0.5, 2.0}, 0.0, 1e-9,
       {0.9999999989999999, 1.4472135940999578, 2.320085154662975}},
  };
  double worst = 0.0;
  for (const Case& c : cases) {
    fed::FederationConfig cfg;
    cfg.server_beta1 = c.beta1;
    cfg.server_tau = c.tau;
    fed::ServerState server;
    ParamVector w(std::vector<double>{0.0});
    for (std::size_t r = 0; r < c.deltas.size(); ++r) {
      fed::ClientUpdate u;
      u.delta = ParamVector(std::vector<double>{c.deltas[r]});
      u.n = 1;
      w = fed::aggregate_adaptive(w, {u}, server, c.kind, cfg);
      double err = std::abs(w[0] - c.want[r]);
      worst = std::max(worst, err);
      if (err > 1e-12) {
        std::ostringstream out;
        out << fed::to_string(c.kind) << " round " << r + 1 << " off by " << err;
        detail = out.str();
        return false;
      }
    }
  }
  std::ostringstream out;
  out << "15 sequence values, worst gap " << worst;
  detail = out.str();
  return true;
}

// --- 6: adaptive model selection ----------------------------------------------

bool check_adaptive_selection(std::string& detail) {
  fusion::FusionConfig model = testutil::small_model(8, 2, 16, 8);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto pool = aug::SynthGenerator(testutil::small_synth(10, seed)).generate();
    fed::FederationConfig cfg;
    cfg.clients = 2;
    cfg.rounds = 4;
    cfg.local_epochs = 1;
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.strategy = fed::Strategy::afl;
    cfg.seed = seed;
    auto clients = fed::make_clients(pool, model, cfg, nullptr, false);
    fed::FederationResult result = fed::run_federation(clients, model, cfg);

    for (std::size_t i = 0; i < clients.size(); ++i) {
      const fed::ClientState& c = clients[i];
      if (c.log.size() != static_cast<std::size_t>(2 * cfg.rounds)) {
        detail = "seed " + std::to_string(seed) + ": log holds " + std::to_string(c.log.size()) +
                 " snapshots, expected " + std::to_string(2 * cfg.rounds);
        return false;
      }
      const fed::Snapshot* best = &c.log.front();
      for (const fed::Snapshot& s : c.log) {
        bool better = false;
        if (s.val_accuracy != best->val_accuracy) {
          better = s.val_accuracy > best->val_accuracy;
        } else if (s.val_f1 != best->val_f1) {
          better = s.val_f1 > best->val_f1;
        } else if (s.round != best->round) {
          better = s.round > best->round;
        } else {
          better = s.origin == fed::Origin::global && best->origin == fed::Origin::local;
        }
        if (better) best = &s;
      }
      if (!(result.deployed[i] == best->params)) {
        detail = "seed " + std::to_string(seed) + ": deployed model is not the argmax snapshot";
        return false;
      }
      Metrics chosen = fed::evaluate(result.deployed[i], model, c.val);
      Metrics final_global = fed::evaluate(result.final_global, model, c.val);
      if (chosen.accuracy < final_global.accuracy) {
        detail = "seed " + std::to_string(seed) + ": selection below the final global";
        return false;
      }
    }
  }
  detail = "argmax, dominance and 2R log length over 3 seeds";
  return true;
}

// --- 7: augmentation invariants -------------------------------------------------

bool check_augmentation(std::string& detail) {
  aug::SynthCorpusConfig synth = testutil::small_synth(10, 23, 0.0);  // noiseless
  aug::SynthGenerator gen(synth);
  std::vector<aug::Sample> train = gen.generate();
  std::vector<aug::Sample> full = aug::augment_dataset(train, gen, 99);

  if (full.size() != 2 * train.size()) {
    detail = "augmentation did not double the dataset";
    return false;
  }
  long cn = 0;
  long ad = 0;
  for (const aug::Sample& s : full) (s.label == Label::cn ? cn : ad) += 1;
  if (cn != ad) {
    detail = "class counts differ: " + std::to_string(cn) + " vs " + std::to_string(ad);
    return false;
  }
  std::set<std::string> cn_speakers;
  std::set<std::string> ad_speakers;
  for (const aug::Sample& s : full) {
    (s.label == Label::cn ? cn_speakers : ad_speakers).insert(s.speaker_id);
  }
  for (const aug::Sample& s : full) {
    if (cn_speakers.count(s.speaker_id) == 0 || ad_speakers.count(s.speaker_id) == 0) {
      detail = "speaker " + s.speaker_id + " appears under a single label";
      return false;
    }
  }
  for (std::size_t i = train.size(); i < full.size(); ++i) {
    const aug::Sample& s = full[i];
    if (!s.speaker.has_value() || !s.content.has_value()) {
      detail = "augmented sample lost its factors";
      return false;
    }
    aug::Sample rebuilt = gen.synthesize(*s.speaker, *s.content, s.label, 0xDEAD);
    if (!tensors_equal(rebuilt.audio_words, s.audio_words) ||
        !tensors_equal(rebuilt.token_text, s.token_text)) {
      detail = "augmented features are not the converter output";
      return false;
    }
  }
  detail = "counts equal, speakers bilabel, converter output bit-exact";
  return true;
}

// --- 8: paradigm ordering at desk scale -----------------------------------------

harness::ExperimentConfig desk_config(harness::Paradigm paradigm, bool augment,
                                      const std::string& name) {
  harness::ExperimentConfig cfg;
  cfg.name = name;
  cfg.paradigm = paradigm;
  cfg.augment = augment;
  cfg.folds = 2;
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.model.hidden_dim = 16;
  cfg.model.heads = 2;
  cfg.model.max_len = 32;
  cfg.model.mlp_hidden = 16;
  cfg.synth = aug::SynthCorpusConfig{};  // n_per_class 60, d 16
  cfg.federation.clients = 3;
  cfg.federation.rounds = 10;
  cfg.federation.local_epochs = 1;
  cfg.federation.batch_size = 8;
  cfg.federation.lr = 5e-3;
  cfg.federation.partition = fed::PartitionScheme::dirichlet;
  cfg.federation.dirichlet_alpha = 0.5;
  return cfg;
}

bool check_paradigm_ordering(std::string& detail) {
  auto begin = std::chrono::steady_clock::now();
  int workers = 4;
  harness::RunReport ll = harness::run_experiment(desk_config(harness::Paradigm::ll, false, "ll"),
                                                  workers);
  harness::RunReport fl = harness::run_experiment(desk_config(harness::Paradigm::fl, false, "fl"),
                                                  workers);
  harness::RunReport fl_aug = harness::run_experiment(
      desk_config(harness::Paradigm::fl, true, "fl+aug"), workers);

  int fl_wins = 0;
  int aug_holds = 0;
  for (std::size_t s = 0; s < ll.seeds.size(); ++s) {
    if (fl.seed_mean_accuracy[s] > ll.seed_mean_accuracy[s]) fl_wins += 1;
    if (fl_aug.seed_mean_accuracy[s] >= fl.seed_mean_accuracy[s]) aug_holds += 1;
  }
  double elapsed = seconds_since(begin);
  std::ostringstream out;
  out << "FL>LL in " << fl_wins << "/5 seeds, FL+Aug>=FL in " << aug_holds << "/5, mean acc LL "
      << harness::format_percent(ll.mean_accuracy) << "% FL "
      << harness::format_percent(fl.mean_accuracy) << "% FL+Aug "
      << harness::format_percent(fl_aug.mean_accuracy) << "%, " << elapsed << "s";
  detail = out.str();
  return fl_wins >= 4 && aug_holds >= 3 && elapsed < 600.0;
}

// --- 9: null-signal sanity --------------------------------------------------------

bool check_null_signal(std::string& detail) {
  harness::ExperimentConfig cfg = desk_config(harness::Paradigm::cl, false, "null");
  cfg.synth.pathology_strength = 0.0;
  cfg.synth.pause_shift = 0.0;
  harness::RunReport r = harness::run_experiment(cfg, 4);
  std::ostringstream out;
  out << "mean accuracy " << harness::format_percent(r.mean_accuracy) << "%";
  detail = out.str();
  return r.mean_accuracy >= 0.4 && r.mean_accuracy <= 0.6;
}

// --- 10: deterministic reports ------------------------------------------------------

bool check_determinism(std::string& detail) {
  harness::ExperimentConfig cfg;
  cfg.name = "determinism";
  cfg.paradigm = harness::Paradigm::fl;
  cfg.folds = 2;
  cfg.seeds = {1, 2};
  cfg.model = testutil::small_model(8, 2, 16, 8);
  cfg.synth = testutil::small_synth(10, 1);
  cfg.federation.clients = 3;
  cfg.federation.rounds = 3;
  cfg.federation.local_epochs = 1;
  cfg.federation.batch_size = 4;
  cfg.federation.lr = 1e-3;

  std::string first = harness::report_to_json(harness::run_experiment(cfg, 1)).dump();
  std::string second = harness::report_to_json(harness::run_experiment(cfg, 1)).dump();
  std::string wide = harness::report_to_json(harness::run_experiment(cfg, 4)).dump();
  if (first != second) {
    detail = "two serial runs disagree";
    return false;
  }
  if (first != wide) {
    detail = "1-worker and 4-worker schedules disagree";
    return false;
  }
  detail = "reports bit-identical across reruns and worker counts";
  return true;
}

// --- 11: alignment tables -------------------------------------------------------------

bool check_alignment_tables(std::string& detail) {
  align::PauseThresholds thresholds;
  // half-second word spans keep the boundary gaps exactly representable
  auto words_for_gaps = [](const std::vector<double>& gaps) {
    std::vector<align::TimedWord> words;
    double t = 0.0;
    words.push_back({"w0", t, t + 0.5});
    t += 0.5;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      t += gaps[i];
      words.push_back({"w" + std::to_string(i + 1), t, t + 0.5});
      t += 0.5;
    }
    return words;
  };

  const std::vector<std::pair<double, align::TokenKind>> table = {
      {0.1, align::TokenKind::word},  // below every threshold: no marker
      {0.7, align::TokenKind::comma},      {1.5, align::TokenKind::period},
      {2.5, align::TokenKind::ellipsis},   {0.5, align::TokenKind::comma},
      {1.0, align::TokenKind::period},     {2.0, align::TokenKind::ellipsis},
  };
  for (const auto& [gap, want] : table) {
    auto tokens = align::insert_pause_tokens(words_for_gaps({gap}), thresholds);
    bool none_expected = want == align::TokenKind::word;
    std::size_t expected = none_expected ? 2 : 3;
    if (tokens.size() != expected) {
      detail = "gap " + std::to_string(gap) + " produced " + std::to_string(tokens.size()) +
               " tokens";
      return false;
    }
    if (!none_expected && tokens[1].kind != want) {
      detail = "gap " + std::to_string(gap) + " inserted the wrong marker";
      return false;
    }
  }

  align::FrameFeatures frames;
  frames.frame_hz = 1.0;
  frames.matrix = Tensor2(3, 1);
  frames.matrix.at(0, 0) = 1.0;
  frames.matrix.at(1, 0) = 2.0;
  frames.matrix.at(2, 0) = 3.0;
  Tensor2 pooled = align::pool_frames_to_words(frames, {{"w", 0.0, 3.0}});
  if (pooled.rows != 1 || pooled.at(0, 0) != 2.0) {
    detail = "three-frame mean pooling returned " + std::to_string(pooled.at(0, 0));
    return false;
  }

  // three words with one comma-length pause: four text rows, three audio rows
  auto tokens = align::insert_pause_tokens(words_for_gaps({0.7, 0.1}), thresholds);
  Tensor2 audio(3, 2);
  Tensor2 text(static_cast<int>(tokens.size()), 2);
  align::AlignedSample s = align::build_aligned_sample(tokens, audio, text, 8, Label::cn, "spk");
  int mask_t = 0;
  int mask_a = 0;
  for (std::uint8_t m : s.mask_t) mask_t += m;
  for (std::uint8_t m : s.mask_a) mask_a += m;
  if (mask_t != 4 || mask_a != 3) {
    detail = "masks counted " + std::to_string(mask_t) + " text and " + std::to_string(mask_a) +
             " audio rows";
    return false;
  }
  detail = "pause table, frame pooling and mask layout exact";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "gradient fidelity", check_gradients},
      {2, "weighted aggregation exactness", check_fedavg_exactness},
      {3, "federated/centralized gd equivalence", check_gd_equivalence},
      {4, "proximal term off equals plain averaging", check_fedprox_zero},
      {5, "adaptive aggregator oracles", check_adaptive_oracles},
      {6, "adaptive model selection", check_adaptive_selection},
      {7, "augmentation invariants", check_augmentation},
      {8, "paradigm ordering at desk scale", check_paradigm_ordering},
      {9, "null-signal sanity", check_null_signal},
      {10, "deterministic reports", check_determinism},
      {11, "alignment tables", check_alignment_tables},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && wanted.count(c.id) == 0) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  criterion %2d  %s  [%s]\n", ok ? "PASS" : "FAIL", c.id, c.name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) failures += 1;
  }
  return failures == 0 ? 0 : 1;
}
