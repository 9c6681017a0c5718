#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ldawa/dataset.hpp"

namespace ldawa {

enum class PartitionScheme { kIid, kDirichlet, kSingleClass };

std::string_view to_string(PartitionScheme s);
PartitionScheme parse_partition_scheme(std::string_view s);

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::kIid;
  double alpha = 0.5;             // Dirichlet concentration, dirichlet only
  std::size_t num_clients = 10;   // M
  std::uint64_t seed = 0;
  bool allow_class_reuse = false;  // single_class with M > C
  // Dirichlet draws are repeated until every client holds at least this many
  // samples (0 disables the check).
  std::size_t min_client_samples = 2;
};

void validate(const PartitionSpec& spec);

/// One index list per client, each sorted ascending.
using Partition = std::vector<std::vector<std::size_t>>;

/// Shuffled equal split; client sizes differ by at most one.
Partition iid_partition(const Dataset& ds, const PartitionSpec& spec);

/// Label-skew split: for each class, proportions over clients are drawn from
/// Dirichlet(alpha * 1_M) and the class's shuffled indices are cut by
/// largest-remainder rounding, so every sample is assigned exactly once.
Partition dirichlet_partition(const Dataset& ds, const PartitionSpec& spec);

/// Client m holds samples of class m only (class m mod C with reuse, where
/// clients sharing a class split it evenly). Counts are truncated to the
/// smallest share so every client holds the same number of samples; the
/// lowest indices of each share are kept.
Partition single_class_partition(const Dataset& ds, const PartitionSpec& spec);

Partition make_partition(const Dataset& ds, const PartitionSpec& spec);

/// Largest-remainder rounding of `total * weights[i] / sum(weights)`.
/// Ties in the fractional part go to the lower index.
std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights);

/// Shannon entropy (nats) of each client's label histogram. Empty clients score 0.
std::vector<double> client_label_entropy(const Dataset& ds, const Partition& parts);

/// {"scheme":..., "clients":[[indices...], ...]}
std::string partition_to_json(const Partition& parts, const PartitionSpec& spec);
Partition partition_from_json(std::string_view text);

}  // namespace ldawa
