#include "ldawa/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "ldawa/checkpoint.hpp"
#include "ldawa/errors.hpp"
#include "ldawa/eval.hpp"
#include "ldawa/model.hpp"
#include "ldawa/trainer.hpp"

namespace ldawa {

std::vector<ClientId> sample_clients(std::size_t total, std::size_t per_round, std::size_t round,
                                     std::uint64_t seed) {
  if (per_round < 1 || per_round > total) {
    throw ValidationError("sample_clients: need 1 <= K <= M, got K=" + std::to_string(per_round) +
                          ", M=" + std::to_string(total));
  }
  std::vector<ClientId> ids(total);
  std::iota(ids.begin(), ids.end(), ClientId{0});
  if (per_round == total) return ids;
  Rng rng(derive_seed(seed, {stream::kSampling, round}));
  // Partial Fisher-Yates: the first K slots end up a uniform K-subset.
  for (std::size_t i = 0; i < per_round; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

FeduDecision fedu_policy(const ParamSet& global, const ParamSet& client_prev, double threshold) {
  if (!(threshold > 0.0)) throw ValidationError("fedu threshold must be positive");
  require_compatible(global, client_prev);
  double ss = 0.0;
  for (std::size_t l = 0; l < global.num_layers(); ++l) {
    if (!is_encoder_layer(global.layer(l).name())) continue;
    const auto g = global.layer(l).values();
    const auto c = client_prev.layer(l).values();
    for (std::size_t i = 0; i < g.size(); ++i) ss += (g[i] - c[i]) * (g[i] - c[i]);
  }
  FeduDecision d;
  d.distance = std::sqrt(ss);
  d.keep = d.distance > threshold;
  return d;
}

ParamSet fedu_initialize(const ParamSet& global, const ParamSet& client_prev, const FeduDecision& decision) {
  require_compatible(global, client_prev);
  if (!decision.keep) return global;
  std::vector<LayerTensor> layers;
  layers.reserve(global.num_layers());
  for (std::size_t l = 0; l < global.num_layers(); ++l) {
    const bool backbone = is_encoder_layer(global.layer(l).name());
    layers.push_back(backbone ? global.layer(l) : client_prev.layer(l));
  }
  return ParamSet(std::move(layers));
}

namespace {

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& dc) {
  if (dc.kind == DatasetConfig::Kind::kBlobs) {
    BlobSpec test_spec = dc.blobs;
    test_spec.samples_per_class = dc.test_samples_per_class;
    return {make_blobs(dc.blobs, 1), make_blobs(test_spec, 2)};
  }
  Dataset train = load_csv(dc.train_path, dc.num_classes);
  if (dc.test_path.empty()) return {train, train};
  Dataset test = load_csv(dc.test_path, train.num_classes());
  if (test.dim() != train.dim()) {
    throw ValidationError("dataset.test_path has " + std::to_string(test.dim()) + " features, train has " +
                          std::to_string(train.dim()));
  }
  return {std::move(train), std::move(test)};
}

template <typename T>
double mean_of(const std::vector<T>& xs, auto&& f) {
  double s = 0.0;
  for (const auto& x : xs) s += f(x);
  return s / static_cast<double>(xs.size());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("error writing '" + path.string() + "'");
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  std::tie(train_, test_) = load_datasets(cfg_.dataset);
  if (train_.dim() != cfg_.model.input_dim()) {
    throw ValidationError("model.encoder_dims[0] (" + std::to_string(cfg_.model.input_dim()) +
                          ") must equal the dataset dimension (" + std::to_string(train_.dim()) + ")");
  }
  if (cfg_.model.head_classes && *cfg_.model.head_classes != train_.num_classes()) {
    throw ValidationError("model.head_classes (" + std::to_string(*cfg_.model.head_classes) +
                          ") must equal the dataset class count (" + std::to_string(train_.num_classes()) + ")");
  }
  partition_ = make_partition(train_, cfg_.partition);
  clients_.reserve(partition_.size());
  for (const auto& idx : partition_) clients_.push_back(train_.subset(idx));

  trainer_ = [this](ClientId id, const ParamSet& init, Rng& rng) {
    return train_local(clients_.at(id), init, cfg_.trainer, cfg_.model, rng, id);
  };
}

std::size_t Experiment::workers() const {
  if (cfg_.workers > 0) return cfg_.workers;
  if (const char* env = std::getenv("LDAWA_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunState Experiment::initial_state() const {
  RunState s;
  s.global = init_params(cfg_.model, derive_seed(cfg_.run_seed, {stream::kInit}));
  return s;
}

bool Experiment::probe_due(std::size_t round) const {
  if (round + 1 == cfg_.rounds) return true;
  return cfg_.eval.every > 0 && (round + 1) % cfg_.eval.every == 0;
}

double Experiment::evaluate(const ParamSet& global, double fraction) const {
  if (is_ssl(cfg_.trainer.method)) {
    return linear_probe(encoder_params(global, cfg_.model), cfg_.model, train_, test_, cfg_.eval, fraction);
  }
  return classifier_accuracy(global, cfg_.model, test_);
}

RoundOutcome Experiment::run_round(RunState& state, const RoundOptions& options) const {
  const std::size_t r = state.round;
  const auto ids = sample_clients(cfg_.total_clients, cfg_.clients_per_round, r, cfg_.run_seed);
  const Strategy effective = effective_strategy(cfg_.aggregation, r);
  const bool fedu = effective == Strategy::kLDawaFedU;

  // Client initializations are decided up front; workers only read them.
  std::vector<ParamSet> inits(ids.size(), state.global);
  std::vector<std::optional<FeduDecision>> decisions(ids.size());
  if (fedu) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto prev = state.client_models.find(ids[i]);
      if (prev == state.client_models.end()) {
        decisions[i] = FeduDecision{};
        continue;
      }
      decisions[i] = fedu_policy(state.global, prev->second, cfg_.aggregation.fedu_threshold);
      inits[i] = fedu_initialize(state.global, prev->second, *decisions[i]);
    }
  }

  std::vector<std::optional<ClientUpdate>> results(ids.size());
  std::vector<std::exception_ptr> errors(ids.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < ids.size(); i = next++) {
      try {
        Rng rng(derive_seed(cfg_.run_seed, {stream::kClientTraining, r, ids[i]}));
        results[i] = trainer_(ids[i], inits[i], rng);
        results[i]->client_id = ids[i];
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t pool = std::min(workers(), ids.size());
  if (pool <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!errors[i]) continue;
    const std::string where = "round " + std::to_string(r) + ": client " + std::to_string(ids[i]) + ": ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    } catch (...) {
      throw std::runtime_error(where + "unknown error");
    }
  }

  std::vector<ClientUpdate> updates;
  updates.reserve(ids.size());
  for (auto& u : results) updates.push_back(std::move(*u));

  const auto t0 = std::chrono::steady_clock::now();
  AggregationResult agg = aggregate(cfg_.aggregation, r, state.global, updates);
  const auto t1 = std::chrono::steady_clock::now();

  RoundRecord rec;
  rec.round = r;
  rec.strategy_effective = agg.effective;
  if (cfg_.output.record_timing) rec.agg_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  rec.mu_delta_model = mean_of(agg.reports, [](const DivergenceReport& d) { return d.model_delta; });
  rec.mu_delta_layer = mean_of(agg.reports, [](const DivergenceReport& d) { return d.mean_layer_delta(); });
  rec.mean_local_loss = mean_of(updates, [](const ClientUpdate& u) { return u.train_loss; });
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ClientRecord c;
    c.client_id = ids[i];
    c.model_delta = agg.reports[i].model_delta;
    c.layer_delta_mean = agg.reports[i].mean_layer_delta();
    c.train_loss = updates[i].train_loss;
    c.num_samples = updates[i].num_samples;
    if (decisions[i]) {
      c.fedu_kept = decisions[i]->keep;
      if (state.client_models.count(ids[i])) c.fedu_distance = decisions[i]->distance;
    }
    rec.clients.push_back(c);
  }

  if (cfg_.aggregation.strategy == Strategy::kLDawaFedU) {
    for (const auto& u : updates) state.client_models[u.client_id] = u.params;
  }
  state.global = std::move(agg.params);
  if (options.probe && probe_due(r)) rec.probe_acc = evaluate(state.global, cfg_.eval.label_fractions.front());
  state.history.push_back(rec);
  state.round = r + 1;

  RoundOutcome out;
  out.record = std::move(rec);
  if (options.keep_updates) out.updates = std::move(updates);
  return out;
}

std::vector<FinalProbe> Experiment::final_probes(const RunState& state) const {
  if (state.history.empty()) throw ValidationError("final_probes: no rounds have run");
  const auto& last = state.history.back();
  std::vector<FinalProbe> out;
  for (std::size_t i = 0; i < cfg_.eval.label_fractions.size(); ++i) {
    const double f = cfg_.eval.label_fractions[i];
    out.push_back({f, i == 0 && last.probe_acc ? *last.probe_acc : evaluate(state.global, f)});
  }
  return out;
}

RunResult Experiment::run() const {
  RunResult res;
  res.state = initial_state();
  res.initial = res.state.global;
  while (res.state.round < cfg_.rounds) run_round(res.state);
  res.final_probes = final_probes(res.state);
  return res;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.output.dir.empty()) throw ValidationError("output.dir is required");
  Experiment exp(cfg);
  const std::filesystem::path dir(cfg.output.dir);
  std::filesystem::create_directories(dir);
  write_text(dir / "run.json", config_to_json(cfg));
  write_text(dir / "partition.json", partition_to_json(exp.partition(), cfg.partition));

  RunResult res;
  res.state = exp.initial_state();
  res.initial = res.state.global;
  checkpoint::save(dir / "initial.ckpt", res.initial);
  while (res.state.round < cfg.rounds) {
    exp.run_round(res.state);
    const std::size_t done = res.state.round;
    if (cfg.output.checkpoint_every > 0 && done % cfg.output.checkpoint_every == 0) {
      std::filesystem::create_directories(dir / "checkpoints");
      char name[32];
      std::snprintf(name, sizeof(name), "round_%04zu.ckpt", done - 1);
      checkpoint::save(dir / "checkpoints" / name, res.state.global);
    }
  }
  res.final_probes = exp.final_probes(res.state);

  checkpoint::save(dir / "final.ckpt", res.state.global);
  write_text(dir / "rounds.csv", rounds_csv(res.state.history, cfg.total_clients));
  write_text(dir / "clients.csv", clients_csv(res.state.history));

  nlohmann::json summary;
  summary["rounds"] = cfg.rounds;
  summary["strategy"] = to_string(cfg.aggregation.strategy);
  summary["warmup_rounds"] = cfg.aggregation.warmup_rounds;
  summary["metric"] = is_ssl(cfg.trainer.method) ? "linear_probe_accuracy" : "test_accuracy";
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : res.final_probes) probes.push_back({{"fraction", p.fraction}, {"accuracy", p.accuracy}});
  summary["final"] = probes;
  double sm = 0.0, sl = 0.0;
  std::size_t n = 0;
  for (const auto& r : res.state.history) {
    if (r.round < cfg.aggregation.warmup_rounds) continue;
    sm += r.mu_delta_model;
    sl += r.mu_delta_layer;
    ++n;
  }
  if (n > 0) {
    summary["mean_mu_delta_model_after_warmup"] = sm / static_cast<double>(n);
    summary["mean_mu_delta_layer_after_warmup"] = sl / static_cast<double>(n);
    summary["mean_mu_delta_after_warmup"] =
        (cfg.eval.mean_delta_mode == MeanDeltaMode::kWholeModel ? sm : sl) / static_cast<double>(n);
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return res;
}

}  // namespace ldawa
