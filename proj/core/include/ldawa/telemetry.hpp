#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ldawa/aggregation.hpp"
#include "ldawa/divergence.hpp"

namespace ldawa {

struct ClientRecord {
  ClientId client_id = 0;
  double model_delta = 1.0;
  double layer_delta_mean = 1.0;
  double train_loss = 0.0;
  std::size_t num_samples = 0;
  std::optional<bool> fedu_kept;        // set when the FedU client policy ran
  std::optional<double> fedu_distance;  // backbone distance it compared
};

struct RoundRecord {
  std::size_t round = 0;
  Strategy strategy_effective = Strategy::kFedAvg;
  double mu_delta_model = 1.0;
  double mu_delta_layer = 1.0;
  double mean_local_loss = 0.0;
  std::optional<double> agg_time_ms;
  std::optional<double> probe_acc;
  std::vector<ClientRecord> clients;  // ascending client id
};

/// Fixed leading columns of rounds.csv, in order. Per-client columns
/// client_<id>_delta (whole-model delta, empty when not sampled) follow.
const std::vector<std::string>& rounds_csv_columns();

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

std::string rounds_csv(const std::vector<RoundRecord>& history, std::size_t total_clients);
/// round,client_id,num_samples,train_loss,model_delta,layer_delta_mean,fedu_kept,fedu_distance
std::string clients_csv(const std::vector<RoundRecord>& history);

/// rounds.csv as rows keyed by column name. Throws ParseError naming the file
/// and the expected schema when the leading columns do not match.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_rounds_csv(const std::filesystem::path& path);

/// Long-format merge of several rounds.csv tables:
/// run_name,round,strategy_effective,probe_acc,mu_delta_model,mu_delta_layer,mean_local_loss,agg_time_ms
std::string merge_rounds(const std::vector<std::pair<std::string, CsvTable>>& runs);

}  // namespace ldawa
