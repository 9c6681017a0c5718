#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "ldawa/aggregation.hpp"
#include "ldawa/config.hpp"
#include "ldawa/dataset.hpp"
#include "ldawa/params.hpp"
#include "ldawa/partition.hpp"
#include "ldawa/rng.hpp"
#include "ldawa/telemetry.hpp"

namespace ldawa {

/// K distinct ids from [0, M), sorted ascending. Uniform without replacement
/// within a round, independent across rounds, fixed by (seed, round).
/// K == M returns every id.
std::vector<ClientId> sample_clients(std::size_t total, std::size_t per_round, std::size_t round,
                                     std::uint64_t seed);

struct FeduDecision {
  double distance = 0.0;  // ||global backbone - previous local backbone||
  bool keep = false;      // keep the local non-backbone layers
};

/// Client-side FedU rule. The backbone is every layer whose name starts with
/// "encoder."; the client keeps its own remaining layers when the backbone
/// distance strictly exceeds `threshold`, and adopts the global ones otherwise
/// (a tie adopts). Throws when the threshold is not positive.
FeduDecision fedu_policy(const ParamSet& global, const ParamSet& client_prev, double threshold);

/// The initialization a client starts local training from: global backbone,
/// plus either the global or the client's own remaining layers.
ParamSet fedu_initialize(const ParamSet& global, const ParamSet& client_prev, const FeduDecision& decision);

struct RunState {
  ParamSet global;
  std::size_t round = 0;  // index of the next round to run
  std::vector<RoundRecord> history;
  // Last local model per client. Only kept for the FedU policy.
  std::map<ClientId, ParamSet> client_models;
};

/// Local training hook: (client id, initial params, client rng) -> update.
using LocalTrainer = std::function<ClientUpdate(ClientId, const ParamSet&, Rng&)>;

struct RoundOptions {
  bool keep_updates = false;  // return the uploaded client updates
  bool probe = true;          // evaluate on the configured cadence
};

struct RoundOutcome {
  RoundRecord record;
  std::vector<ClientUpdate> updates;  // ascending client id, when kept
};

struct FinalProbe {
  double fraction = 1.0;
  double accuracy = 0.0;
};

struct RunResult {
  RunState state;
  ParamSet initial;
  std::vector<FinalProbe> final_probes;
};

/// Data, partition and round loop for one ExperimentConfig.
class Experiment {
 public:
  /// Validates the config, then builds datasets and the partition.
  explicit Experiment(ExperimentConfig cfg);
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const Dataset& train_set() const noexcept { return train_; }
  const Dataset& test_set() const noexcept { return test_; }
  const Partition& partition() const noexcept { return partition_; }
  const Dataset& client_data(ClientId id) const { return clients_.at(id); }

  /// Replaces the default trainer (train_local on the client's shard).
  void set_local_trainer(LocalTrainer trainer) { trainer_ = std::move(trainer); }

  /// Worker-pool size: config.workers, else LDAWA_WORKERS, else hardware concurrency.
  std::size_t workers() const;
  void set_workers(std::size_t n) { cfg_.workers = n; }

  RunState initial_state() const;

  /// One federated round on `state`: sample, train, aggregate, record.
  RoundOutcome run_round(RunState& state, const RoundOptions& options = {}) const;

  /// Linear-probe accuracy of the encoder for SSL runs, test accuracy of the
  /// federated classifier for supervised runs.
  double evaluate(const ParamSet& global, double fraction) const;

  /// evaluate() at every label fraction, reusing the final round's probe.
  std::vector<FinalProbe> final_probes(const RunState& state) const;

  /// All rounds from the seeded initial model, plus probes at every label fraction.
  RunResult run() const;

 private:
  bool probe_due(std::size_t round) const;

  ExperimentConfig cfg_;
  Dataset train_;
  Dataset test_;
  Partition partition_;
  std::vector<Dataset> clients_;
  LocalTrainer trainer_;
};

/// Runs the experiment and writes run.json, partition.json, rounds.csv,
/// clients.csv, summary.json, initial.ckpt, final.ckpt and optional
/// checkpoints/round_XXXX.ckpt into cfg.output.dir.
RunResult run_experiment(const ExperimentConfig& cfg);

}  // namespace ldawa
