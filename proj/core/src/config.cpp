#include "ldawa/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ldawa/errors.hpp"

namespace ldawa {

namespace {

using nlohmann::json;

// Reads keys from one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(where() + " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ValidationError(field(key) + " is required");
    return convert<T>(key);
  }

  double get_extended_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "infinity" || s == "+inf") return std::numeric_limits<double>::infinity();
      throw ValidationError(field(key) + ": expected a number or \"inf\", got \"" + s + "\"");
    }
    return convert<double>(key);
  }

  Section child(const std::string& key) {
    if (!has(key)) return Section(empty_object(), field(key));
    return Section(obj_.at(key), field(key));
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("unknown config key '" + field(it.key()) + "'");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  static const json& empty_object() {
    static const json e = json::object();
    return e;
  }

  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  template <typename T>
  T convert(const std::string& key) {
    const auto& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ValidationError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ValidationError("");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ValidationError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ValidationError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ValidationError(field(key) + ": invalid value " + v.dump());
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override '" + assignment + "' must look like dotted.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ValidationError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json extended_double(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

}  // namespace

std::size_t default_warmup_rounds(Strategy s) { return is_divergence_aware(s) ? 2 : 0; }

ExperimentConfig parse_config(std::string_view json_text, std::span<const std::string> overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);

  ExperimentConfig cfg;
  Section root(doc, "");
  cfg.run_seed = root.get<std::uint64_t>("run_seed", 0);
  cfg.total_clients = root.get<std::size_t>("total_clients", cfg.total_clients);
  cfg.clients_per_round = root.get<std::size_t>("clients_per_round", cfg.total_clients);
  cfg.rounds = root.get<std::size_t>("rounds", cfg.rounds);
  cfg.workers = root.get<std::size_t>("workers", 0);

  {
    auto ds = root.child("dataset");
    const auto kind = ds.get<std::string>("kind", "blobs");
    if (kind == "blobs") {
      cfg.dataset.kind = DatasetConfig::Kind::kBlobs;
      auto& b = cfg.dataset.blobs;
      b.num_classes = ds.get<std::size_t>("num_classes", b.num_classes);
      b.samples_per_class = ds.get<std::size_t>("samples_per_class", b.samples_per_class);
      b.dim = ds.get<std::size_t>("dim", b.dim);
      b.spread = ds.get<double>("spread", b.spread);
      b.separation = ds.get<double>("separation", b.separation);
      b.seed = ds.get<std::uint64_t>("seed", cfg.run_seed);
      cfg.dataset.test_samples_per_class = ds.get<std::size_t>("test_samples_per_class", cfg.dataset.test_samples_per_class);
    } else if (kind == "csv") {
      cfg.dataset.kind = DatasetConfig::Kind::kCsv;
      cfg.dataset.train_path = ds.require<std::string>("train_path");
      cfg.dataset.test_path = ds.get<std::string>("test_path", "");
      if (ds.has("num_classes")) cfg.dataset.num_classes = ds.require<std::size_t>("num_classes");
    } else {
      throw ValidationError("dataset.kind: unknown dataset kind '" + kind + "' (expected blobs|csv)");
    }
    ds.finish();
  }

  {
    auto t = root.child("trainer");
    auto& tr = cfg.trainer;
    tr.method = parse_train_method(t.get<std::string>("method", std::string(to_string(tr.method))));
    tr.temperature = t.get<double>("temperature", tr.temperature);
    tr.lambda = t.get<double>("lambda", tr.lambda);
    tr.lr = t.get<double>("lr", tr.lr);
    tr.momentum = t.get<double>("momentum", tr.momentum);
    tr.weight_decay = t.get<double>("weight_decay", tr.weight_decay);
    tr.batch_size = t.get<std::size_t>("batch_size", tr.batch_size);
    tr.local_epochs = t.get<std::size_t>("local_epochs", tr.local_epochs);
    tr.augment_noise_std = t.get<double>("augment_noise_std", tr.augment_noise_std);
    tr.augment_mask_prob = t.get<double>("augment_mask_prob", tr.augment_mask_prob);
    t.finish();
  }

  {
    auto m = root.child("model");
    auto& ms = cfg.model;
    if (m.has("encoder_dims")) {
      ms.encoder_dims = m.require<std::vector<std::size_t>>("encoder_dims");
    } else if (cfg.dataset.kind == DatasetConfig::Kind::kBlobs) {
      ms.encoder_dims = {cfg.dataset.blobs.dim, 64, 32};
    } else {
      throw ValidationError("model.encoder_dims is required for csv datasets");
    }
    ms.activation = parse_activation(m.get<std::string>("activation", "relu"));
    const bool ssl = is_ssl(cfg.trainer.method);
    if (m.has("projector_dims")) {
      ms.projector_dims = m.require<std::vector<std::size_t>>("projector_dims");
    } else if (ssl && !ms.encoder_dims.empty()) {
      ms.projector_dims = {ms.encoder_dims.back(), 32};
    }
    if (m.has("head_classes")) {
      ms.head_classes = m.require<std::size_t>("head_classes");
    } else if (!ssl) {
      if (cfg.dataset.kind == DatasetConfig::Kind::kBlobs) {
        ms.head_classes = cfg.dataset.blobs.num_classes;
      } else if (cfg.dataset.num_classes) {
        ms.head_classes = cfg.dataset.num_classes;
      } else {
        throw ValidationError("model.head_classes (or dataset.num_classes) is required for supervised csv runs");
      }
    }
    m.finish();
  }

  {
    auto p = root.child("partition");
    auto& ps = cfg.partition;
    ps.scheme = parse_partition_scheme(p.get<std::string>("scheme", "iid"));
    ps.alpha = p.get<double>("alpha", ps.alpha);
    ps.seed = p.get<std::uint64_t>("seed", cfg.run_seed);
    ps.allow_class_reuse = p.get<bool>("allow_class_reuse", false);
    ps.min_client_samples = p.get<std::size_t>("min_client_samples", ps.min_client_samples);
    ps.num_clients = cfg.total_clients;
    p.finish();
  }

  {
    auto a = root.child("aggregation");
    auto& as = cfg.aggregation;
    as.strategy = parse_strategy(a.get<std::string>("strategy", "fedavg"));
    as.warmup_rounds = a.get<std::size_t>("warmup_rounds", default_warmup_rounds(as.strategy));
    as.fedu_threshold = a.get_extended_double("fedu_threshold", as.fedu_threshold);
    as.renormalize = a.get<bool>("renormalize", false);
    a.finish();
  }

  {
    auto e = root.child("eval");
    auto& es = cfg.eval;
    es.label_fractions = e.get<std::vector<double>>("label_fractions", es.label_fractions);
    es.epochs = e.get<std::size_t>("epochs", es.epochs);
    es.lr = e.get<double>("lr", es.lr);
    es.momentum = e.get<double>("momentum", es.momentum);
    es.batch_size = e.get<std::size_t>("batch_size", es.batch_size);
    es.milestones = e.get<std::vector<std::size_t>>("milestones", es.milestones);
    es.decay = e.get<double>("decay", es.decay);
    es.epoch_scale = e.get<double>("epoch_scale", es.epoch_scale);
    es.every = e.get<std::size_t>("every", es.every);
    es.seed = e.get<std::uint64_t>("seed", cfg.run_seed);
    es.mean_delta_mode = parse_mean_delta_mode(e.get<std::string>("mean_delta_mode", "model"));
    e.finish();
  }

  {
    auto o = root.child("output");
    cfg.output.dir = o.get<std::string>("dir", "");
    cfg.output.record_timing = o.get<bool>("record_timing", true);
    cfg.output.checkpoint_every = o.get<std::size_t>("checkpoint_every", 0);
    o.finish();
  }

  root.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::span<const std::string> overrides) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), overrides);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.total_clients < 1) throw ValidationError("total_clients must be >= 1");
  if (cfg.clients_per_round < 1) throw ValidationError("clients_per_round must be >= 1");
  if (cfg.clients_per_round > cfg.total_clients) {
    throw ValidationError("clients_per_round (K=" + std::to_string(cfg.clients_per_round) +
                          ") must not exceed total_clients (M=" + std::to_string(cfg.total_clients) + ")");
  }
  if (cfg.rounds < 1) throw ValidationError("rounds must be >= 1");
  if (cfg.partition.num_clients != cfg.total_clients) {
    throw ValidationError("partition.num_clients must equal total_clients");
  }
  validate(cfg.partition);
  validate(cfg.trainer, cfg.model);
  validate(cfg.eval);
  if (!(cfg.aggregation.fedu_threshold > 0.0)) {
    throw ValidationError("aggregation.fedu_threshold must be positive");
  }

  if (cfg.dataset.kind == DatasetConfig::Kind::kBlobs) {
    const auto& b = cfg.dataset.blobs;
    if (b.num_classes < 2) throw ValidationError("dataset.num_classes must be >= 2");
    if (b.samples_per_class < 1) throw ValidationError("dataset.samples_per_class must be >= 1");
    if (b.dim < 1) throw ValidationError("dataset.dim must be >= 1");
    if (!(b.spread >= 0.0)) throw ValidationError("dataset.spread must be non-negative");
    if (!(b.separation > 0.0)) throw ValidationError("dataset.separation must be positive");
    if (cfg.dataset.test_samples_per_class < 1) throw ValidationError("dataset.test_samples_per_class must be >= 1");
    if (cfg.model.input_dim() != b.dim) {
      throw ValidationError("model.encoder_dims[0] (" + std::to_string(cfg.model.input_dim()) +
                            ") must equal dataset.dim (" + std::to_string(b.dim) + ")");
    }
    if (cfg.model.head_classes && *cfg.model.head_classes != b.num_classes) {
      throw ValidationError("model.head_classes (" + std::to_string(*cfg.model.head_classes) +
                            ") must equal dataset.num_classes (" + std::to_string(b.num_classes) + ")");
    }
    if (cfg.partition.scheme == PartitionScheme::kSingleClass && cfg.total_clients > b.num_classes &&
        !cfg.partition.allow_class_reuse) {
      throw ValidationError("partition.scheme single_class with total_clients (" + std::to_string(cfg.total_clients) +
                            ") > dataset.num_classes (" + std::to_string(b.num_classes) +
                            ") needs partition.allow_class_reuse");
    }
  } else if (cfg.dataset.train_path.empty()) {
    throw ValidationError("dataset.train_path is required for csv datasets");
  }
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json ds;
  if (cfg.dataset.kind == DatasetConfig::Kind::kBlobs) {
    const auto& b = cfg.dataset.blobs;
    ds = {{"kind", "blobs"},
          {"num_classes", b.num_classes},
          {"samples_per_class", b.samples_per_class},
          {"test_samples_per_class", cfg.dataset.test_samples_per_class},
          {"dim", b.dim},
          {"spread", b.spread},
          {"separation", b.separation},
          {"seed", b.seed}};
  } else {
    ds = {{"kind", "csv"}, {"train_path", cfg.dataset.train_path}, {"test_path", cfg.dataset.test_path}};
    if (cfg.dataset.num_classes) ds["num_classes"] = *cfg.dataset.num_classes;
  }
  const auto& t = cfg.trainer;
  json model = {{"encoder_dims", cfg.model.encoder_dims},
                {"projector_dims", cfg.model.projector_dims},
                {"activation", to_string(cfg.model.activation)}};
  if (cfg.model.head_classes) model["head_classes"] = *cfg.model.head_classes;
  json partition = {{"scheme", to_string(cfg.partition.scheme)},
                    {"alpha", cfg.partition.alpha},
                    {"seed", cfg.partition.seed},
                    {"allow_class_reuse", cfg.partition.allow_class_reuse},
                    {"min_client_samples", cfg.partition.min_client_samples}};
  const auto& e = cfg.eval;
  json doc = {
      {"run_seed", cfg.run_seed},
      {"total_clients", cfg.total_clients},
      {"clients_per_round", cfg.clients_per_round},
      {"rounds", cfg.rounds},
      {"workers", cfg.workers},
      {"dataset", ds},
      {"partition", partition},
      {"trainer",
       {{"method", to_string(t.method)},
        {"temperature", t.temperature},
        {"lambda", t.lambda},
        {"lr", t.lr},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"batch_size", t.batch_size},
        {"local_epochs", t.local_epochs},
        {"augment_noise_std", t.augment_noise_std},
        {"augment_mask_prob", t.augment_mask_prob}}},
      {"model", model},
      {"aggregation",
       {{"strategy", to_string(cfg.aggregation.strategy)},
        {"warmup_rounds", cfg.aggregation.warmup_rounds},
        {"fedu_threshold", extended_double(cfg.aggregation.fedu_threshold)},
        {"renormalize", cfg.aggregation.renormalize}}},
      {"eval",
       {{"label_fractions", e.label_fractions},
        {"epochs", e.epochs},
        {"lr", e.lr},
        {"momentum", e.momentum},
        {"batch_size", e.batch_size},
        {"milestones", e.milestones},
        {"decay", e.decay},
        {"epoch_scale", e.epoch_scale},
        {"every", e.every},
        {"seed", e.seed},
        {"mean_delta_mode", to_string(e.mean_delta_mode)}}},
      {"output",
       {{"dir", cfg.output.dir},
        {"record_timing", cfg.output.record_timing},
        {"checkpoint_every", cfg.output.checkpoint_every}}},
  };
  return doc.dump(2) + "\n";
}

std::string config_schema() {
  const json integer = {{"type", "integer"}, {"minimum", 0}};
  const json number = {{"type", "number"}};
  const json boolean = {{"type", "boolean"}};
  const json string = {{"type", "string"}};
  const json int_array = {{"type", "array"}, {"items", integer}};
  auto object = [](json props, json required = json::array()) {
    return json{{"type", "object"}, {"additionalProperties", false}, {"properties", std::move(props)},
                {"required", std::move(required)}};
  };
  json strategies = json::array();
  for (auto s : all_strategies()) strategies.push_back(to_string(s));

  json schema = object({
      {"run_seed", integer},
      {"total_clients", {{"type", "integer"}, {"minimum", 1}}},
      {"clients_per_round", {{"type", "integer"}, {"minimum", 1}}},
      {"rounds", {{"type", "integer"}, {"minimum", 1}}},
      {"workers", integer},
      {"dataset", object({{"kind", {{"enum", {"blobs", "csv"}}}},
                          {"num_classes", integer},
                          {"samples_per_class", integer},
                          {"test_samples_per_class", integer},
                          {"dim", integer},
                          {"spread", number},
                          {"separation", number},
                          {"seed", integer},
                          {"train_path", string},
                          {"test_path", string}})},
      {"partition", object({{"scheme", {{"enum", {"iid", "dirichlet", "single_class"}}}},
                            {"alpha", {{"type", "number"}, {"exclusiveMinimum", 0}}},
                            {"seed", integer},
                            {"allow_class_reuse", boolean},
                            {"min_client_samples", integer}})},
      {"trainer", object({{"method", {{"enum", {"supervised", "simclr", "barlow_twins"}}}},
                          {"temperature", number},
                          {"lambda", number},
                          {"lr", number},
                          {"momentum", number},
                          {"weight_decay", number},
                          {"batch_size", integer},
                          {"local_epochs", integer},
                          {"augment_noise_std", number},
                          {"augment_mask_prob", number}})},
      {"model", object({{"encoder_dims", int_array},
                        {"projector_dims", int_array},
                        {"activation", {{"enum", {"relu", "tanh"}}}},
                        {"head_classes", integer}})},
      {"aggregation", object({{"strategy", {{"enum", strategies}}},
                              {"warmup_rounds", integer},
                              {"fedu_threshold", {{"oneOf", {number, {{"enum", {"inf", "infinity", "+inf"}}}}}}},
                              {"renormalize", boolean}})},
      {"eval", object({{"label_fractions", {{"type", "array"}, {"items", number}}},
                       {"epochs", integer},
                       {"lr", number},
                       {"momentum", number},
                       {"batch_size", integer},
                       {"milestones", int_array},
                       {"decay", number},
                       {"epoch_scale", number},
                       {"every", integer},
                       {"seed", integer},
                       {"mean_delta_mode", {{"enum", {"model", "layer"}}}}})},
      {"output", object({{"dir", string}, {"record_timing", boolean}, {"checkpoint_every", integer}})},
  });
  schema["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  schema["title"] = "ldawa experiment config";
  return schema.dump(2) + "\n";
}

}  // namespace ldawa
