#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedfusion/augmentation.hpp"
#include "fedfusion/fusion.hpp"
#include "fedfusion/metrics.hpp"
#include "fedfusion/numerics.hpp"
#include "fedfusion/param_vector.hpp"

namespace fedfusion::fed {

enum class AggregatorKind { fedavg, fedprox, fedadam, fedadagrad, fedyogi };
enum class Strategy { sfl, pfl, afl };
enum class PartitionScheme { uniform, dirichlet };
enum class Origin { local, global };

std::string to_string(AggregatorKind k);
AggregatorKind aggregator_from_string(const std::string& s);
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
std::string to_string(PartitionScheme s);
PartitionScheme partition_from_string(const std::string& s);

struct FederationConfig {
  int clients = 3;       // M
  int rounds = 30;       // R
  int local_epochs = 1;  // E
  int batch_size = 64;
  double lr = 5e-5;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool plain_gd = false;  // full-batch gradient descent instead of AdamW
  AggregatorKind aggregator = AggregatorKind::fedavg;
  double prox_mu = 0.0;  // FedProx proximal coefficient
  double server_lr = 1.0;
  double server_beta1 = 0.9;
  double server_beta2 = 0.99;
  double server_tau = 1e-3;
  Strategy strategy = Strategy::sfl;
  int pfl_epochs = 1;
  PartitionScheme partition = PartitionScheme::uniform;
  double dirichlet_alpha = 0.5;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Snapshot {
  int round = 0;
  Origin origin = Origin::local;
  int client_id = 0;
  ParamVector params;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
};

struct ClientState {
  int id = 0;
  std::vector<align::AlignedSample> train;
  std::vector<align::AlignedSample> val;
  OptimizerState opt;  // persists across rounds
  std::vector<Snapshot> log;

  long n_train() const { return static_cast<long>(train.size()); }
};

struct ClientUpdate {
  ParamVector delta;
  long n = 0;
  int round = 0;
  int client_id = 0;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
};

// Adaptive server-optimizer state, zero-initialized, persisted across rounds.
struct ServerState {
  ParamVector m;
  ParamVector v;
};

// --- data plumbing ---------------------------------------------------------

// Splits sample indices into M disjoint, exhaustive shards. uniform deals a
// seeded shuffle round-robin; dirichlet draws per-class client proportions
// from Dirichlet(alpha) (label skew). Every shard is left non-empty.
std::vector<std::vector<int>> partition(const std::vector<Label>& labels, PartitionScheme scheme,
                                        int m, double alpha, std::uint64_t seed);

// Seeded stratified train/val index split (val_fraction rounded down per class).
std::pair<std::vector<int>, std::vector<int>> stratified_split(const std::vector<Label>& labels,
                                                               double val_fraction,
                                                               std::uint64_t seed);

// Builds client states from a training pool: partition, per-client
// stratified val split, optional per-client augmentation of the train part
// (skipped with a note for single-class shards), alignment to max_len.
std::vector<ClientState> make_clients(const std::vector<aug::Sample>& pool,
                                      const fusion::FusionConfig& model,
                                      const FederationConfig& cfg,
                                      const aug::VoiceConverter* converter, bool augment);

Metrics evaluate(const ParamVector& params, const fusion::FusionConfig& model,
                 const std::vector<align::AlignedSample>& samples);

// Mean-logit ensemble of several models over a sample set.
Metrics evaluate_ensemble(const std::vector<ParamVector>& models,
                          const fusion::FusionConfig& model_cfg,
                          const std::vector<align::AlignedSample>& samples);

// --- protocol ---------------------------------------------------------------

// Gradient of the proximal term (mu/2)||w - anchor||^2.
ParamVector fedprox_grad(const ParamVector& w, const ParamVector& anchor, double mu);

// E local epochs from the distributed global parameters; appends the
// local-origin snapshot and returns the delta with the sample count.
ClientUpdate local_update(ClientState& client, const ParamVector& global_params,
                          const fusion::FusionConfig& model, const FederationConfig& cfg,
                          int round);

// Sample-count weighted delta average added to the previous global
// parameters. Weights n_i / sum(n_j), reduced in ascending client id order.
ParamVector aggregate_fedavg(const ParamVector& global_params,
                             const std::vector<ClientUpdate>& updates);

// Server-side adaptive aggregation over the pseudo-gradient (no bias
// correction): m <- b1 m + (1-b1) d; Adagrad v += d^2; Adam
// v <- b2 v + (1-b2) d^2; Yogi v <- v - (1-b2) d^2 sign(v - d^2);
// w <- w + lr_s * m / (sqrt(v) + tau).
ParamVector aggregate_adaptive(const ParamVector& global_params,
                               const std::vector<ClientUpdate>& updates, ServerState& server,
                               AggregatorKind kind, const FederationConfig& cfg);

class SnapshotStore;

// One communication round: distribute, local updates, aggregate, re-evaluate
// the new global on every client (global-origin snapshots).
void run_round(std::vector<ClientState>& clients, ParamVector& global_params, ServerState& server,
               const fusion::FusionConfig& model, const FederationConfig& cfg, int round,
               SnapshotStore* store = nullptr);

// Per-client deployment models: sFL final global; pFL locally fine-tuned
// final global; aFL per-client best snapshot (accuracy, then f1, then later
// round, then global over local).
std::vector<ParamVector> finalize(std::vector<ClientState>& clients,
                                  const ParamVector& final_global,
                                  const fusion::FusionConfig& model, const FederationConfig& cfg);

struct FederationResult {
  ParamVector final_global;
  std::vector<ParamVector> deployed;
};

// Full R-round protocol from seeded initial parameters. When a store is
// given the run records every round and resumes from the last completed
// round left by a previous matching run.
FederationResult run_federation(std::vector<ClientState>& clients,
                                const fusion::FusionConfig& model, const FederationConfig& cfg,
                                SnapshotStore* store = nullptr);

// No-communication baseline: every client trains alone from the shared
// seeded initialization for rounds * local_epochs epochs. Returns each
// client's final local model.
std::vector<ParamVector> run_local_only(std::vector<ClientState>& clients,
                                        const fusion::FusionConfig& model,
                                        const FederationConfig& cfg);

// --- snapshot store ---------------------------------------------------------

// Directory-per-run persistence: manifest.json with the config hash and
// per-snapshot records plus FPV parameter files. Manifest updates are
// atomic (write temp, rename) so a run is resumable from the last round.
class SnapshotStore {
 public:
  SnapshotStore(std::filesystem::path dir, std::string config_hash);

  // Rounds already completed by a previous run with the same config hash.
  int completed_rounds() const { return completed_rounds_; }

  void record_round(int round, const ParamVector& global_params, const ServerState& server,
                    const std::vector<ClientState>& clients);

  ParamVector load_global(int round) const;
  ServerState load_server() const;
  void restore_clients(std::vector<ClientState>& clients) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void write_manifest();

  std::filesystem::path dir_;
  std::string config_hash_;
  int completed_rounds_ = 0;
  // snapshot records mirrored in memory: round, origin, client, metrics, file
  struct Record {
    int round;
    Origin origin;
    int client_id;
    double val_accuracy;
    double val_f1;
    std::string file;
    long opt_step = 0;
  };
  std::vector<Record> records_;
  std::vector<long> client_opt_steps_;
};

}  // namespace fedfusion::fed
