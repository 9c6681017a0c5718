#include "ldawa/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "ldawa/errors.hpp"
#include "ldawa/rng.hpp"

namespace ldawa {

namespace {

constexpr std::size_t kMaxDirichletAttempts = 1000;

void require_nonempty(const Dataset& ds, const char* op) {
  if (ds.empty()) throw ValidationError(std::string(op) + ": dataset is empty");
}

void sort_lists(Partition& parts) {
  for (auto& p : parts) std::sort(p.begin(), p.end());
}

// Gamma(alpha) draws underflow to exactly 0 for small alpha; the sum can vanish.
std::vector<double> sample_dirichlet(double alpha, std::size_t m, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(m);
  double s = 0.0;
  for (auto& x : p) {
    x = gamma(rng);
    s += x;
  }
  if (s <= 0.0 || !std::isfinite(s)) {
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::fill(p.begin(), p.end(), 0.0);
    p[pick(rng)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace

std::string_view to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::kIid: return "iid";
    case PartitionScheme::kDirichlet: return "dirichlet";
    case PartitionScheme::kSingleClass: return "single_class";
  }
  return "?";
}

PartitionScheme parse_partition_scheme(std::string_view s) {
  if (s == "iid") return PartitionScheme::kIid;
  if (s == "dirichlet") return PartitionScheme::kDirichlet;
  if (s == "single_class") return PartitionScheme::kSingleClass;
  throw ValidationError("unknown partition scheme '" + std::string(s) + "' (expected iid|dirichlet|single_class)");
}

void validate(const PartitionSpec& spec) {
  if (spec.num_clients < 1) throw ValidationError("partition.num_clients must be >= 1");
  if (spec.scheme == PartitionScheme::kDirichlet && !(spec.alpha > 0.0 && std::isfinite(spec.alpha))) {
    throw ValidationError("partition.alpha must be a positive finite number for the dirichlet scheme");
  }
}

std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  if (weights.empty() || total == 0) return counts;
  if (!(wsum > 0.0)) throw ValidationError("largest_remainder: weights must have a positive sum");

  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / wsum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  // Floating-point rounding can overshoot by a unit in pathological cases.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size()) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

Partition iid_partition(const Dataset& ds, const PartitionSpec& spec) {
  require_nonempty(ds, "iid_partition");
  validate(spec);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(spec.seed, {stream::kPartition, 0}));
  std::shuffle(idx.begin(), idx.end(), rng);

  const std::size_t m = spec.num_clients;
  Partition parts(m);
  const std::size_t base = ds.size() / m;
  const std::size_t extra = ds.size() % m;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < m; ++c) {
    const std::size_t n = base + (c < extra ? 1 : 0);
    parts[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                    idx.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  sort_lists(parts);
  return parts;
}

Partition dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
  require_nonempty(ds, "dirichlet_partition");
  validate(spec);
  const std::size_t m = spec.num_clients;
  if (m == 1) {
    Partition one(1, std::vector<std::size_t>(ds.size()));
    std::iota(one[0].begin(), one[0].end(), 0);
    return one;
  }
  const std::size_t min_size = spec.min_client_samples;
  if (min_size * m > ds.size()) {
    throw ValidationError("dirichlet_partition: " + std::to_string(ds.size()) + " samples cannot give " +
                          std::to_string(m) + " clients at least " + std::to_string(min_size) + " each");
  }

  Rng rng(derive_seed(spec.seed, {stream::kPartition, 1}));
  for (std::size_t attempt = 0; attempt < kMaxDirichletAttempts; ++attempt) {
    Partition parts(m);
    for (std::uint32_t c = 0; c < ds.num_classes(); ++c) {
      auto idx = ds.indices_of_class(c);
      if (idx.empty()) continue;
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto p = sample_dirichlet(spec.alpha, m, rng);
      const auto counts = largest_remainder(idx.size(), p);
      std::size_t pos = 0;
      for (std::size_t k = 0; k < m; ++k) {
        parts[k].insert(parts[k].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                        idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
        pos += counts[k];
      }
    }
    const bool ok = std::all_of(parts.begin(), parts.end(),
                                [&](const auto& p) { return p.size() >= min_size; });
    if (ok) {
      sort_lists(parts);
      return parts;
    }
  }
  throw ValidationError("dirichlet_partition: no draw within " + std::to_string(kMaxDirichletAttempts) +
                        " attempts gave every client at least " + std::to_string(min_size) +
                        " samples; lower partition.min_client_samples or raise alpha");
}

Partition single_class_partition(const Dataset& ds, const PartitionSpec& spec) {
  require_nonempty(ds, "single_class_partition");
  validate(spec);
  const std::size_t m = spec.num_clients;
  const std::size_t classes = ds.num_classes();
  if (m > classes && !spec.allow_class_reuse) {
    throw ValidationError("single_class_partition: " + std::to_string(m) + " clients but only " +
                          std::to_string(classes) + " classes (set partition.allow_class_reuse)");
  }

  // Clients sharing class c, in ascending order.
  std::vector<std::vector<std::size_t>> sharers(classes);
  for (std::size_t k = 0; k < m; ++k) sharers[k % classes].push_back(k);

  Partition parts(m);
  for (std::uint32_t c = 0; c < classes; ++c) {
    if (sharers[c].empty()) continue;
    const auto idx = ds.indices_of_class(c);
    const std::size_t share = idx.size() / sharers[c].size();
    for (std::size_t j = 0; j < sharers[c].size(); ++j) {
      parts[sharers[c][j]].assign(idx.begin() + static_cast<std::ptrdiff_t>(j * share),
                                  idx.begin() + static_cast<std::ptrdiff_t>((j + 1) * share));
    }
  }
  std::size_t smallest = parts[0].size();
  for (const auto& p : parts) smallest = std::min(smallest, p.size());
  if (smallest == 0) {
    throw ValidationError("single_class_partition: some client's class has no samples");
  }
  for (auto& p : parts) p.resize(smallest);
  return parts;
}

Partition make_partition(const Dataset& ds, const PartitionSpec& spec) {
  switch (spec.scheme) {
    case PartitionScheme::kIid: return iid_partition(ds, spec);
    case PartitionScheme::kDirichlet: return dirichlet_partition(ds, spec);
    case PartitionScheme::kSingleClass: return single_class_partition(ds, spec);
  }
  throw ValidationError("unknown partition scheme");
}

std::vector<double> client_label_entropy(const Dataset& ds, const Partition& parts) {
  std::vector<double> out;
  out.reserve(parts.size());
  for (const auto& p : parts) {
    std::vector<std::size_t> hist(ds.num_classes(), 0);
    for (std::size_t i : p) ++hist[ds.label(i)];
    double h = 0.0;
    for (std::size_t c : hist) {
      if (c == 0) continue;
      const double q = static_cast<double>(c) / static_cast<double>(p.size());
      h -= q * std::log(q);
    }
    out.push_back(h);
  }
  return out;
}

std::string partition_to_json(const Partition& parts, const PartitionSpec& spec) {
  nlohmann::json doc = {{"scheme", to_string(spec.scheme)},
                        {"num_clients", spec.num_clients},
                        {"seed", spec.seed},
                        {"clients", parts}};
  if (spec.scheme == PartitionScheme::kDirichlet) doc["alpha"] = spec.alpha;
  return doc.dump() + "\n";
}

Partition partition_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    return doc.at("clients").get<Partition>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("partition manifest: ") + e.what());
  }
}

}  // namespace ldawa
