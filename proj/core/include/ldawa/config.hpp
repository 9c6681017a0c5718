#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ldawa/aggregation.hpp"
#include "ldawa/dataset.hpp"
#include "ldawa/eval.hpp"
#include "ldawa/model.hpp"
#include "ldawa/partition.hpp"
#include "ldawa/trainer.hpp"

namespace ldawa {

struct DatasetConfig {
  enum class Kind { kBlobs, kCsv };
  Kind kind = Kind::kBlobs;
  BlobSpec blobs;                          // kBlobs
  std::size_t test_samples_per_class = 50;  // kBlobs
  std::string train_path;                  // kCsv
  std::string test_path;                   // kCsv, optional: evaluate on the training set when empty
  std::optional<std::size_t> num_classes;  // kCsv, optional
};

struct OutputConfig {
  std::string dir;
  bool record_timing = true;      // agg_time_ms column; off gives byte-reproducible rounds.csv
  std::size_t checkpoint_every = 0;  // 0 writes only initial and final checkpoints
};

/// Declarative description of one simulated federated run.
struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionSpec partition;  // num_clients mirrors total_clients
  std::size_t total_clients = 10;      // M
  std::size_t clients_per_round = 10;  // K
  std::size_t rounds = 30;             // R
  TrainerSpec trainer;
  ModelSpec model;
  AggregationSpec aggregation;
  EvalSpec eval;
  std::uint64_t run_seed = 0;
  std::size_t workers = 0;  // 0: LDAWA_WORKERS env var, else hardware concurrency
  OutputConfig output;

  bool cross_silo() const { return clients_per_round == total_clients; }
};

/// Warm-up applied when the config leaves aggregation.warmup_rounds unset.
std::size_t default_warmup_rounds(Strategy s);

/// Parses a JSON config, applying "dotted.key=value" overrides first. Values
/// are read as JSON when they parse as JSON and as strings otherwise. Unknown
/// keys anywhere are rejected. Defaults are filled in and the result validated.
ExperimentConfig parse_config(std::string_view json_text, std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::string& path, std::span<const std::string> overrides = {});

/// Fully resolved config (every default spelled out) as pretty JSON.
std::string config_to_json(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

/// The JSON Schema describing the config file.
std::string config_schema();

}  // namespace ldawa
