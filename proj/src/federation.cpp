#include "fedfusion/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedfusion/profile.hpp"
#include "fedfusion/rng.hpp"

namespace fedfusion::fed {

namespace {

// stream tags hung off the run seed
constexpr std::uint64_t kInitStream = 0xF0;
constexpr std::uint64_t kPartitionStream = 0xF1;
constexpr std::uint64_t kSplitStream = 0xF2;
constexpr std::uint64_t kAugmentStream = 0xF3;
constexpr std::uint64_t kBatchStream = 0xF4;
constexpr std::uint64_t kFineTuneStream = 0xF5;

std::string round_file(int round, Origin origin, int client_id) {
  char buf[64];
  if (origin == Origin::global) {
    std::snprintf(buf, sizeof(buf), "round_%04d_global.fpv", round);
  } else {
    std::snprintf(buf, sizeof(buf), "round_%04d_local_%02d.fpv", round, client_id);
  }
  return buf;
}

}  // namespace

std::string to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::fedavg: return "fedavg";
    case AggregatorKind::fedprox: return "fedprox";
    case AggregatorKind::fedadam: return "fedadam";
    case AggregatorKind::fedadagrad: return "fedadagrad";
    default: return "fedyogi";
  }
}

AggregatorKind aggregator_from_string(const std::string& s) {
  if (s == "fedavg") return AggregatorKind::fedavg;
  if (s == "fedprox") return AggregatorKind::fedprox;
  if (s == "fedadam") return AggregatorKind::fedadam;
  if (s == "fedadagrad") return AggregatorKind::fedadagrad;
  if (s == "fedyogi") return AggregatorKind::fedyogi;
  throw std::invalid_argument("unknown aggregator: " + s);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::sfl: return "sfl";
    case Strategy::pfl: return "pfl";
    default: return "afl";
  }
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "sfl") return Strategy::sfl;
  if (s == "pfl") return Strategy::pfl;
  if (s == "afl") return Strategy::afl;
  throw std::invalid_argument("unknown strategy: " + s);
}

std::string to_string(PartitionScheme s) {
  return s == PartitionScheme::uniform ? "uniform" : "dirichlet";
}

PartitionScheme partition_from_string(const std::string& s) {
  if (s == "uniform") return PartitionScheme::uniform;
  if (s == "dirichlet") return PartitionScheme::dirichlet;
  throw std::invalid_argument("unknown partition scheme: " + s);
}

void FederationConfig::validate() const {
  if (clients < 1) throw std::invalid_argument("FederationConfig: clients must be >= 1");
  if (rounds < 1) throw std::invalid_argument("FederationConfig: rounds must be >= 1");
  if (local_epochs < 0) throw std::invalid_argument("FederationConfig: local_epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("FederationConfig: batch_size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("FederationConfig: lr must be positive");
  if (prox_mu < 0.0) throw std::invalid_argument("FederationConfig: prox_mu must be >= 0");
  if (server_tau <= 0.0) throw std::invalid_argument("FederationConfig: tau must be positive");
  if (pfl_epochs < 0) throw std::invalid_argument("FederationConfig: pfl_epochs must be >= 0");
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw std::invalid_argument("FederationConfig: val_fraction must lie in (0,1)");
  }
  if (dirichlet_alpha <= 0.0) {
    throw std::invalid_argument("FederationConfig: dirichlet_alpha must be positive");
  }
}

std::vector<std::vector<int>> partition(const std::vector<Label>& labels, PartitionScheme scheme,
                                        int m, double alpha, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("partition: client count must be >= 1");
  if (static_cast<int>(labels.size()) < m) {
    throw std::invalid_argument("partition: dataset smaller than client count");
  }
  std::vector<std::vector<int>> shards(static_cast<std::size_t>(m));
  Rng rng(seed);
  if (scheme == PartitionScheme::uniform) {
    std::vector<int> order(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (std::size_t p = 0; p < order.size(); ++p) {
      shards[p % static_cast<std::size_t>(m)].push_back(order[p]);
    }
  } else {
    // label-skew: per class, split the (shuffled) class members by
    // Dirichlet(alpha) proportions, largest remainders first
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<int> members;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (static_cast<int>(labels[i]) == cls) members.push_back(static_cast<int>(i));
      }
      if (members.empty()) continue;
      rng.shuffle(members);
      std::vector<double> w(static_cast<std::size_t>(m));
      double total = 0.0;
      for (double& x : w) {
        x = rng.gamma(alpha);
        total += x;
      }
      std::vector<int> counts(static_cast<std::size_t>(m), 0);
      std::vector<std::pair<double, int>> remainders;
      int assigned = 0;
      for (int i = 0; i < m; ++i) {
        double share = w[static_cast<std::size_t>(i)] / total * static_cast<double>(members.size());
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(share));
        assigned += counts[static_cast<std::size_t>(i)];
        remainders.emplace_back(share - std::floor(share), i);
      }
      std::stable_sort(remainders.begin(), remainders.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (int r = 0; r < static_cast<int>(members.size()) - assigned; ++r) {
        counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r)].second)] += 1;
      }
      std::size_t cursor = 0;
      for (int i = 0; i < m; ++i) {
        for (int c = 0; c < counts[static_cast<std::size_t>(i)]; ++c) {
          shards[static_cast<std::size_t>(i)].push_back(members[cursor++]);
        }
      }
    }
    // keep every client non-empty: move one sample from the largest shard
    for (std::size_t i = 0; i < shards.size(); ++i) {
      while (shards[i].empty()) {
        std::size_t donor = 0;
        for (std::size_t j = 1; j < shards.size(); ++j) {
          if (shards[j].size() > shards[donor].size()) donor = j;
        }
        if (shards[donor].size() <= 1) {
          throw std::runtime_error("partition: cannot fill empty shard");
        }
        shards[i].push_back(shards[donor].back());
        shards[donor].pop_back();
      }
    }
  }
  for (auto& shard : shards) std::sort(shard.begin(), shard.end());
  return shards;
}

std::pair<std::vector<int>, std::vector<int>> stratified_split(const std::vector<Label>& labels,
                                                               double val_fraction,
                                                               std::uint64_t seed) {
  std::vector<int> train;
  std::vector<int> val;
  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<int> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<int>(labels[i]) == cls) members.push_back(static_cast<int>(i));
    }
    if (members.empty()) continue;
    rng.shuffle(members);
    std::size_t n_val =
        static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * val_fraction));
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_val ? val : train).push_back(members[i]);
    }
  }
  if (val.empty() && train.size() > 1) {
    val.push_back(train.back());
    train.pop_back();
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

std::vector<ClientState> make_clients(const std::vector<aug::Sample>& pool,
                                      const fusion::FusionConfig& model,
                                      const FederationConfig& cfg,
                                      const aug::VoiceConverter* converter, bool augment) {
  cfg.validate();
  std::vector<Label> labels;
  labels.reserve(pool.size());
  for (const aug::Sample& s : pool) labels.push_back(s.label);
  auto shards = partition(labels, cfg.partition, cfg.clients, cfg.dirichlet_alpha,
                          mix_seed({cfg.seed, kPartitionStream}));

  auto align_sample = [&model](const aug::Sample& s) {
    return align::build_aligned_sample(s.tokens, s.audio_words, s.token_text, model.max_len,
                                       s.label, s.speaker_id);
  };

  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    std::vector<Label> local_labels;
    for (int idx : shards[i]) local_labels.push_back(pool[static_cast<std::size_t>(idx)].label);
    auto [train_idx, val_idx] = stratified_split(
        local_labels, cfg.val_fraction, mix_seed({cfg.seed, kSplitStream, i}));

    std::vector<aug::Sample> train;
    for (int t : train_idx) {
      train.push_back(pool[static_cast<std::size_t>(shards[i][static_cast<std::size_t>(t)])]);
    }
    if (augment) {
      bool has_ad = false;
      bool has_cn = false;
      for (const aug::Sample& s : train) (s.label == Label::ad ? has_ad : has_cn) = true;
      if (!has_ad || !has_cn) {
        std::fprintf(stderr,
                     "make_clients: client %zu train split holds a single class; "
                     "skipping augmentation\n",
                     i);
      } else {
        if (converter == nullptr) {
          throw std::invalid_argument("make_clients: augmentation requires a converter");
        }
        train = aug::augment_dataset(train, *converter, mix_seed({cfg.seed, kAugmentStream, i}));
      }
    }

    ClientState client;
    client.id = static_cast<int>(i);
    for (const aug::Sample& s : train) client.train.push_back(align_sample(s));
    for (int v : val_idx) {
      client.val.push_back(
          align_sample(pool[static_cast<std::size_t>(shards[i][static_cast<std::size_t>(v)])]));
    }
    if (client.val.empty()) {
      // a single-sample shard cannot spare a held-out split; validate in-sample
      client.val = client.train;
    }
    client.opt = OptimizerState::make(fusion::param_count(model), cfg.lr, cfg.weight_decay);
    client.opt.beta1 = cfg.adam_beta1;
    client.opt.beta2 = cfg.adam_beta2;
    client.opt.eps = cfg.adam_eps;
    clients.push_back(std::move(client));
  }
  return clients;
}

Metrics evaluate(const ParamVector& params, const fusion::FusionConfig& model,
                 const std::vector<align::AlignedSample>& samples) {
  fusion::FusionParams p = fusion::load(params, model);
  std::vector<int> preds;
  std::vector<int> truth;
  preds.reserve(samples.size());
  truth.reserve(samples.size());
  for (const align::AlignedSample& s : samples) {
    auto [logits, trace] = fusion::forward(s, p, model);
    preds.push_back(logits[1] > logits[0] ? 1 : 0);
    truth.push_back(static_cast<int>(s.label));
  }
  return compute_metrics(preds, truth);
}

Metrics evaluate_ensemble(const std::vector<ParamVector>& models,
                          const fusion::FusionConfig& model_cfg,
                          const std::vector<align::AlignedSample>& samples) {
  if (models.empty()) throw std::invalid_argument("evaluate_ensemble: no models");
  std::vector<fusion::FusionParams> loaded;
  loaded.reserve(models.size());
  for (const ParamVector& m : models) loaded.push_back(fusion::load(m, model_cfg));
  std::vector<int> preds;
  std::vector<int> truth;
  for (const align::AlignedSample& s : samples) {
    double sum0 = 0.0;
    double sum1 = 0.0;
    for (const fusion::FusionParams& p : loaded) {
      auto [logits, trace] = fusion::forward(s, p, model_cfg);
      sum0 += logits[0];
      sum1 += logits[1];
    }
    preds.push_back(sum1 > sum0 ? 1 : 0);
    truth.push_back(static_cast<int>(s.label));
  }
  return compute_metrics(preds, truth);
}

ParamVector fedprox_grad(const ParamVector& w, const ParamVector& anchor, double mu) {
  if (w.size() != anchor.size()) throw std::invalid_argument("fedprox_grad: size mismatch");
  ParamVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out.v[i] = mu * (w[i] - anchor[i]);
  return out;
}

namespace {

// Mean gradient over the given sample positions, reduced in ascending order.
ParamVector batch_gradient(const std::vector<align::AlignedSample>& samples,
                           const std::vector<int>& members, const ParamVector& params,
                           const fusion::FusionConfig& model) {
  ParamVector sum(params.size());
  for (int idx : members) {
    auto [loss, grad] = fusion::loss_and_grad(samples[static_cast<std::size_t>(idx)], params, model);
    sum += grad;
  }
  double inv = 1.0 / static_cast<double>(members.size());
  for (double& x : sum.v) x *= inv;
  return sum;
}

// Shared mini-batch loop for local rounds and post-hoc fine-tuning. Epoch
// indices are global so a round-resumed run replays identical batches.
ParamVector train_epochs(const std::vector<align::AlignedSample>& train, ParamVector params,
                         const ParamVector* anchor, double mu, OptimizerState& opt,
                         const fusion::FusionConfig& model, const FederationConfig& cfg,
                         int client_id, int epoch_begin, int epoch_end,
                         std::uint64_t stream_tag) {
  std::vector<int> all(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) all[i] = static_cast<int>(i);
  for (int epoch = epoch_begin; epoch < epoch_end; ++epoch) {
    if (cfg.plain_gd) {
      ParamVector grad = batch_gradient(train, all, params, model);
      if (anchor != nullptr && mu > 0.0) grad += fedprox_grad(params, *anchor, mu);
      params = gd_step(params, grad, cfg.lr);
      continue;
    }
    std::vector<int> order = all;
    Rng rng(mix_seed({cfg.seed, stream_tag, static_cast<std::uint64_t>(client_id),
                      static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t stop = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<int> batch(order.begin() + static_cast<long>(at),
                             order.begin() + static_cast<long>(stop));
      std::sort(batch.begin(), batch.end());
      ParamVector grad = batch_gradient(train, batch, params, model);
      if (anchor != nullptr && mu > 0.0) grad += fedprox_grad(params, *anchor, mu);
      params = adamw_step(params, grad, opt);
    }
  }
  return params;
}

ParamVector weighted_delta(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: empty update list");
  std::vector<const ClientUpdate*> ordered;
  ordered.reserve(updates.size());
  for (const ClientUpdate& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  long n = 0;
  for (const ClientUpdate* u : ordered) {
    if (u->n < 1) throw std::invalid_argument("aggregate: client reported no samples");
    if (u->delta.size() != ordered.front()->delta.size()) {
      throw std::invalid_argument("aggregate: delta length mismatch");
    }
    n += u->n;
  }
  ParamVector acc(ordered.front()->delta.size());
  for (const ClientUpdate* u : ordered) {
    double w = static_cast<double>(u->n) / static_cast<double>(n);
    for (std::size_t i = 0; i < acc.size(); ++i) acc.v[i] += w * u->delta[i];
  }
  return acc;
}

}  // namespace

ClientUpdate local_update(ClientState& client, const ParamVector& global_params,
                          const fusion::FusionConfig& model, const FederationConfig& cfg,
                          int round) {
  if (client.train.empty()) throw std::runtime_error("local_update: empty train split");
  double mu = cfg.aggregator == AggregatorKind::fedprox ? cfg.prox_mu : 0.0;
  ParamVector params =
      train_epochs(client.train, global_params, &global_params, mu, client.opt, model, cfg,
                   client.id, round * cfg.local_epochs, (round + 1) * cfg.local_epochs,
                   kBatchStream);
  quantize(params.v);
  Metrics m = evaluate(params, model, client.val);

  Snapshot snap;
  snap.round = round;
  snap.origin = Origin::local;
  snap.client_id = client.id;
  snap.params = params;
  snap.val_accuracy = m.accuracy;
  snap.val_f1 = m.f1;
  client.log.push_back(std::move(snap));

  ClientUpdate update;
  update.delta = params - global_params;
  update.n = client.n_train();
  update.round = round;
  update.client_id = client.id;
  update.val_accuracy = m.accuracy;
  update.val_f1 = m.f1;
  return update;
}

ParamVector aggregate_fedavg(const ParamVector& global_params,
                             const std::vector<ClientUpdate>& updates) {
  ParamVector delta = weighted_delta(updates);
  if (delta.size() != global_params.size()) {
    throw std::invalid_argument("aggregate_fedavg: length mismatch");
  }
  ParamVector out = global_params + delta;
  quantize(out.v);
  return out;
}

ParamVector aggregate_adaptive(const ParamVector& global_params,
                               const std::vector<ClientUpdate>& updates, ServerState& server,
                               AggregatorKind kind, const FederationConfig& cfg) {
  if (cfg.server_tau <= 0.0) throw std::invalid_argument("aggregate_adaptive: tau must be positive");
  ParamVector delta = weighted_delta(updates);
  if (delta.size() != global_params.size()) {
    throw std::invalid_argument("aggregate_adaptive: length mismatch");
  }
  if (server.m.size() == 0) {
    server.m = ParamVector(delta.size());
    server.v = ParamVector(delta.size());
  }
  if (server.m.size() != delta.size()) {
    throw std::invalid_argument("aggregate_adaptive: server state length mismatch");
  }
  ParamVector out(global_params.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double d = delta[i];
    double d2 = d * d;
    server.m.v[i] = cfg.server_beta1 * server.m[i] + (1.0 - cfg.server_beta1) * d;
    switch (kind) {
      case AggregatorKind::fedadagrad: server.v.v[i] += d2; break;
      case AggregatorKind::fedadam:
        server.v.v[i] = cfg.server_beta2 * server.v[i] + (1.0 - cfg.server_beta2) * d2;
        break;
      case AggregatorKind::fedyogi: {
        double gap = server.v[i] - d2;
        double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
        server.v.v[i] -= (1.0 - cfg.server_beta2) * d2 * sign;
        break;
      }
      default: throw std::invalid_argument("aggregate_adaptive: not an adaptive aggregator");
    }
    out.v[i] =
        global_params[i] + cfg.server_lr * server.m[i] / (std::sqrt(server.v[i]) + cfg.server_tau);
  }
  quantize(out.v);
  return out;
}

void run_round(std::vector<ClientState>& clients, ParamVector& global_params, ServerState& server,
               const fusion::FusionConfig& model, const FederationConfig& cfg, int round,
               SnapshotStore* store) {
  std::vector<ClientUpdate> updates;
  updates.reserve(clients.size());
  for (ClientState& client : clients) {
    updates.push_back(local_update(client, global_params, model, cfg, round));
  }
  switch (cfg.aggregator) {
    case AggregatorKind::fedavg:
    case AggregatorKind::fedprox:
      global_params = aggregate_fedavg(global_params, updates);
      break;
    default:
      global_params = aggregate_adaptive(global_params, updates, server, cfg.aggregator, cfg);
      break;
  }
  for (ClientState& client : clients) {
    Metrics m = evaluate(global_params, model, client.val);
    Snapshot snap;
    snap.round = round;
    snap.origin = Origin::global;
    snap.client_id = client.id;
    snap.params = global_params;
    snap.val_accuracy = m.accuracy;
    snap.val_f1 = m.f1;
    client.log.push_back(std::move(snap));
  }
  if (store != nullptr) store->record_round(round, global_params, server, clients);
}

std::vector<ParamVector> finalize(std::vector<ClientState>& clients,
                                  const ParamVector& final_global,
                                  const fusion::FusionConfig& model, const FederationConfig& cfg) {
  std::vector<ParamVector> deployed;
  deployed.reserve(clients.size());
  for (ClientState& client : clients) {
    switch (cfg.strategy) {
      case Strategy::sfl: deployed.push_back(final_global); break;
      case Strategy::pfl: {
        OptimizerState opt = OptimizerState::make(final_global.size(), cfg.lr, cfg.weight_decay);
        opt.beta1 = cfg.adam_beta1;
        opt.beta2 = cfg.adam_beta2;
        opt.eps = cfg.adam_eps;
        ParamVector tuned = train_epochs(client.train, final_global, nullptr, 0.0, opt, model,
                                         cfg, client.id, 0, cfg.pfl_epochs, kFineTuneStream);
        quantize(tuned.v);
        deployed.push_back(std::move(tuned));
        break;
      }
      case Strategy::afl: {
        if (client.log.empty()) throw std::runtime_error("finalize: empty snapshot log");
        const Snapshot* best = &client.log.front();
        for (const Snapshot& s : client.log) {
          bool better = false;
          if (s.val_accuracy != best->val_accuracy) {
            better = s.val_accuracy > best->val_accuracy;
          } else if (s.val_f1 != best->val_f1) {
            better = s.val_f1 > best->val_f1;
          } else if (s.round != best->round) {
            better = s.round > best->round;
          } else {
            better = s.origin == Origin::global && best->origin == Origin::local;
          }
          if (better) best = &s;
        }
        deployed.push_back(best->params);
        break;
      }
    }
  }
  return deployed;
}

FederationResult run_federation(std::vector<ClientState>& clients,
                                const fusion::FusionConfig& model, const FederationConfig& cfg,
                                SnapshotStore* store) {
  cfg.validate();
  if (clients.empty()) throw std::invalid_argument("run_federation: no clients");
  ParamVector global = fusion::flatten(
      fusion::init_params(model, mix_seed({cfg.seed, kInitStream})), model);
  quantize(global.v);
  ServerState server;

  int start = 0;
  if (store != nullptr && store->completed_rounds() > 0) {
    start = std::min(store->completed_rounds(), cfg.rounds);
    global = store->load_global(start - 1);
    server = store->load_server();
    store->restore_clients(clients);
  }
  for (int r = start; r < cfg.rounds; ++r) {
    run_round(clients, global, server, model, cfg, r, store);
  }

  FederationResult result;
  result.deployed = finalize(clients, global, model, cfg);
  result.final_global = std::move(global);
  return result;
}

std::vector<ParamVector> run_local_only(std::vector<ClientState>& clients,
                                        const fusion::FusionConfig& model,
                                        const FederationConfig& cfg) {
  cfg.validate();
  if (clients.empty()) throw std::invalid_argument("run_local_only: no clients");
  ParamVector init = fusion::flatten(
      fusion::init_params(model, mix_seed({cfg.seed, kInitStream})), model);
  quantize(init.v);
  std::vector<ParamVector> finals;
  finals.reserve(clients.size());
  for (ClientState& client : clients) {
    ParamVector params = init;
    for (int r = 0; r < cfg.rounds; ++r) {
      local_update(client, params, model, cfg, r);
      params = client.log.back().params;  // continue from the local model
    }
    finals.push_back(std::move(params));
  }
  return finals;
}

// --- snapshot store ----------------------------------------------------------

SnapshotStore::SnapshotStore(std::filesystem::path dir, std::string config_hash)
    : dir_(std::move(dir)), config_hash_(std::move(config_hash)) {
  std::filesystem::create_directories(dir_);
  std::filesystem::path manifest = dir_ / "manifest.json";
  if (!std::filesystem::exists(manifest)) return;
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("SnapshotStore: cannot read manifest");
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("config_hash", "") != config_hash_) {
    throw std::runtime_error("SnapshotStore: directory belongs to a different config");
  }
  completed_rounds_ = j.value("rounds_completed", 0);
  for (const auto& r : j.value("records", nlohmann::json::array())) {
    Record rec;
    rec.round = r.at("round").get<int>();
    rec.origin = r.at("origin").get<std::string>() == "global" ? Origin::global : Origin::local;
    rec.client_id = r.at("client_id").get<int>();
    rec.val_accuracy = r.at("val_accuracy").get<double>();
    rec.val_f1 = r.at("val_f1").get<double>();
    rec.file = r.at("file").get<std::string>();
    records_.push_back(std::move(rec));
  }
  for (const auto& c : j.value("clients", nlohmann::json::array())) {
    client_opt_steps_.push_back(c.at("opt_step").get<long>());
  }
}

void SnapshotStore::write_manifest() {
  nlohmann::json j;
  j["format"] = "fedfusion-snapshots-v1";
  j["config_hash"] = config_hash_;
  j["rounds_completed"] = completed_rounds_;
  nlohmann::json records = nlohmann::json::array();
  for (const Record& r : records_) {
    records.push_back({{"round", r.round},
                       {"origin", r.origin == Origin::global ? "global" : "local"},
                       {"client_id", r.client_id},
                       {"val_accuracy", r.val_accuracy},
                       {"val_f1", r.val_f1},
                       {"file", r.file}});
  }
  j["records"] = records;
  nlohmann::json clients = nlohmann::json::array();
  for (std::size_t i = 0; i < client_opt_steps_.size(); ++i) {
    char m_file[48];
    char v_file[48];
    std::snprintf(m_file, sizeof(m_file), "client_%02zu_opt_m.fpv", i);
    std::snprintf(v_file, sizeof(v_file), "client_%02zu_opt_v.fpv", i);
    clients.push_back({{"id", static_cast<int>(i)},
                       {"opt_step", client_opt_steps_[i]},
                       {"opt_m", m_file},
                       {"opt_v", v_file}});
  }
  j["clients"] = clients;
  j["server"] = {{"m", "server_m.fpv"}, {"v", "server_v.fpv"}};

  std::filesystem::path tmp = dir_ / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("SnapshotStore: cannot write manifest");
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir_ / "manifest.json");
}

void SnapshotStore::record_round(int round, const ParamVector& global_params,
                                 const ServerState& server,
                                 const std::vector<ClientState>& clients) {
  // snapshot parameter files are always written full-width so a resumed run
  // continues bit-exactly
  std::string global_file = round_file(round, Origin::global, 0);
  save_fpv(dir_ / global_file, global_params, 8);
  for (const ClientState& client : clients) {
    for (const Snapshot& s : client.log) {
      if (s.round != round) continue;
      Record rec;
      rec.round = round;
      rec.origin = s.origin;
      rec.client_id = client.id;
      rec.val_accuracy = s.val_accuracy;
      rec.val_f1 = s.val_f1;
      if (s.origin == Origin::local) {
        rec.file = round_file(round, Origin::local, client.id);
        save_fpv(dir_ / rec.file, s.params, 8);
      } else {
        rec.file = global_file;
      }
      records_.push_back(std::move(rec));
    }
  }
  save_fpv(dir_ / "server_m.fpv", server.m, 8);
  save_fpv(dir_ / "server_v.fpv", server.v, 8);
  client_opt_steps_.assign(clients.size(), 0);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    char m_file[48];
    char v_file[48];
    std::snprintf(m_file, sizeof(m_file), "client_%02zu_opt_m.fpv", i);
    std::snprintf(v_file, sizeof(v_file), "client_%02zu_opt_v.fpv", i);
    save_fpv(dir_ / m_file, ParamVector(clients[i].opt.m), 8);
    save_fpv(dir_ / v_file, ParamVector(clients[i].opt.v), 8);
    client_opt_steps_[i] = clients[i].opt.step;
  }
  completed_rounds_ = round + 1;
  write_manifest();
}

ParamVector SnapshotStore::load_global(int round) const {
  return load_fpv(dir_ / round_file(round, Origin::global, 0));
}

ServerState SnapshotStore::load_server() const {
  ServerState s;
  if (std::filesystem::exists(dir_ / "server_m.fpv")) {
    s.m = load_fpv(dir_ / "server_m.fpv");
    s.v = load_fpv(dir_ / "server_v.fpv");
  }
  return s;
}

void SnapshotStore::restore_clients(std::vector<ClientState>& clients) const {
  if (client_opt_steps_.size() != clients.size()) {
    throw std::runtime_error("SnapshotStore: client count mismatch");
  }
  for (ClientState& client : clients) client.log.clear();
  for (const Record& rec : records_) {
    if (rec.round >= completed_rounds_) continue;
    if (rec.client_id < 0 || rec.client_id >= static_cast<int>(clients.size())) {
      throw std::runtime_error("SnapshotStore: record for unknown client");
    }
    Snapshot s;
    s.round = rec.round;
    s.origin = rec.origin;
    s.client_id = rec.client_id;
    s.params = load_fpv(dir_ / rec.file);
    s.val_accuracy = rec.val_accuracy;
    s.val_f1 = rec.val_f1;
    clients[static_cast<std::size_t>(rec.client_id)].log.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < clients.size(); ++i) {
    char m_file[48];
    char v_file[48];
    std::snprintf(m_file, sizeof(m_file), "client_%02zu_opt_m.fpv", i);
    std::snprintf(v_file, sizeof(v_file), "client_%02zu_opt_v.fpv", i);
    if (std::filesystem::exists(dir_ / m_file)) {
      clients[i].opt.m = load_fpv(dir_ / m_file).v;
      clients[i].opt.v = load_fpv(dir_ / v_file).v;
      clients[i].opt.step = client_opt_steps_[i];
    }
  }
}

}  // namespace fedfusion::fed
