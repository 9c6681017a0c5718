#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>

#include "ldawa/checkpoint.hpp"
#include "ldawa/engine.hpp"
#include "ldawa/errors.hpp"
#include "oracles.hpp"

using namespace ldawa;

namespace {

ExperimentConfig small_config(const std::string& strategy = "fedavg", std::size_t rounds = 3) {
  nlohmann::json j = {
      {"run_seed", 7},
      {"total_clients", 4},
      {"rounds", rounds},
      {"workers", 1},
      {"dataset", {{"num_classes", 4}, {"samples_per_class", 20}, {"dim", 6}, {"test_samples_per_class", 10}}},
      {"model", {{"encoder_dims", {6, 8, 4}}, {"projector_dims", {4, 4}}}},
      {"trainer", {{"batch_size", 8}}},
      {"aggregation", {{"strategy", strategy}}},
      {"eval", {{"epoch_scale", 0.1}}},
      {"output", {{"record_timing", false}}},
  };
  return parse_config(j.dump());
}

// Deterministic stand-in for local training: shifts every value by an
// amount that depends on the client and on the layer.
LocalTrainer scripted() {
  return [](ClientId id, const ParamSet& init, Rng&) {
    ParamSet p = init;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      auto v = p.mutable_layers()[l].mutable_values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] += 0.1 * std::sin(1.0 + id * 3.0 + l * 1.7 + i * 0.3) * (1.0 + id);
      }
    }
    ClientUpdate u;
    u.params = std::move(p);
    u.num_samples = 10 + 5 * id;
    u.train_loss = 1.0 + 0.25 * id;
    return u;
  };
}

ParamSet wider_backbone() {
  return ParamSet({LayerTensor("encoder.0.weight", {3}, {0, 0, 0}), LayerTensor("head.weight", {1}, {0})});
}

}  // namespace

TEST(Sampling, DistinctSortedAndSeeded) {
  for (std::size_t round = 0; round < 50; ++round) {
    auto ids = sample_clients(20, 7, round, 3);
    EXPECT_EQ(ids.size(), 7u);
    EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    EXPECT_EQ(std::set<ClientId>(ids.begin(), ids.end()).size(), 7u);
    EXPECT_EQ(ids, sample_clients(20, 7, round, 3));
    for (auto id : ids) EXPECT_LT(id, 20u);
  }
  EXPECT_NE(sample_clients(20, 7, 0, 3), sample_clients(20, 7, 1, 3));
  EXPECT_EQ(sample_clients(5, 5, 9, 1), (std::vector<ClientId>{0, 1, 2, 3, 4}));
  EXPECT_THROW(sample_clients(5, 6, 0, 1), ValidationError);
  EXPECT_THROW(sample_clients(5, 0, 0, 1), ValidationError);
}

TEST(Sampling, RoughlyUniformInclusion) {
  std::vector<int> hits(10, 0);
  const int rounds = 4000;
  for (int r = 0; r < rounds; ++r)
    for (auto id : sample_clients(10, 3, static_cast<std::size_t>(r), 11)) ++hits[id];
  // Each client is included with probability 0.3; sd of the count ~ 29.
  for (int h : hits) EXPECT_NEAR(h, 0.3 * rounds, 150);
}

TEST(Fedu, BoundaryAtThreshold) {
  // Backbone distance is exactly 5 (a 3-4-5 triangle).
  ParamSet g({LayerTensor("encoder.0.weight", {2}, {0, 0}), LayerTensor("head.weight", {1}, {1})});
  ParamSet c({LayerTensor("encoder.0.weight", {2}, {3, 4}), LayerTensor("head.weight", {1}, {9})});
  auto at = fedu_policy(g, c, 5.0);
  EXPECT_DOUBLE_EQ(at.distance, 5.0);
  EXPECT_FALSE(at.keep);
  EXPECT_EQ(fedu_initialize(g, c, at), g);
  auto below = fedu_policy(g, c, 4.999);
  EXPECT_TRUE(below.keep);
  auto init = fedu_initialize(g, c, below);
  EXPECT_EQ(init.layer("encoder.0.weight"), g.layer("encoder.0.weight"));
  EXPECT_EQ(init.layer("head.weight"), c.layer("head.weight"));
  EXPECT_FALSE(fedu_policy(g, c, std::numeric_limits<double>::infinity()).keep);
  EXPECT_THROW(fedu_policy(g, c, 0.0), ValidationError);
  EXPECT_THROW(fedu_policy(g, wider_backbone(), 1.0), IncompatibleError);
}

TEST(Fedu, OnlyBackboneCountsTowardDistance) {
  ParamSet g({LayerTensor("encoder.0.weight", {1}, {0}), LayerTensor("projector.0.weight", {1}, {0})});
  ParamSet c({LayerTensor("encoder.0.weight", {1}, {0}), LayerTensor("projector.0.weight", {1}, {100})});
  EXPECT_EQ(fedu_policy(g, c, 1.0).distance, 0.0);
}

TEST(Experiment, ScriptedRoundMatchesBruteForceLdawa) {
  auto cfg = small_config("ldawa", 2);
  cfg.aggregation.warmup_rounds = 0;
  Experiment exp(cfg);
  exp.set_local_trainer(scripted());
  auto state = exp.initial_state();
  const ParamSet before = state.global;
  auto out = exp.run_round(state, {true, false});
  ASSERT_EQ(out.updates.size(), 4u);
  EXPECT_LT(oracle::max_abs_diff(state.global, oracle::brute_ldawa(before, out.updates)), 1e-12);
  EXPECT_EQ(out.record.strategy_effective, Strategy::kLDawa);
  EXPECT_FALSE(out.record.probe_acc);
  EXPECT_FALSE(out.record.agg_time_ms);
}

TEST(Experiment, WarmupLabelsRounds) {
  auto cfg = small_config("ldawa", 4);
  Experiment exp(cfg);
  exp.set_local_trainer(scripted());
  auto state = exp.initial_state();
  std::vector<Strategy> seen;
  for (int r = 0; r < 4; ++r) seen.push_back(exp.run_round(state, {false, false}).record.strategy_effective);
  EXPECT_EQ(seen, (std::vector<Strategy>{Strategy::kFedAvg, Strategy::kFedAvg, Strategy::kLDawa, Strategy::kLDawa}));
}

TEST(Experiment, ZeroLocalEpochsIsAFixedPoint) {
  for (auto s : all_strategies()) {
    auto cfg = small_config(std::string(to_string(s)), 3);
    cfg.trainer.local_epochs = 0;
    cfg.aggregation.warmup_rounds = 0;
    Experiment exp(cfg);
    auto state = exp.initial_state();
    const ParamSet init = state.global;
    for (int r = 0; r < 3; ++r) exp.run_round(state, {false, false});
    EXPECT_LT(oracle::max_abs_diff(state.global, init), 1e-12) << to_string(s);
    EXPECT_DOUBLE_EQ(state.history.back().mu_delta_model, 1.0);
  }
}

TEST(Experiment, RoundIsPureGivenState) {
  Experiment exp(small_config("ldawa_loss"));
  auto a = exp.initial_state();
  auto b = a;
  exp.run_round(a, {false, false});
  exp.run_round(b, {false, false});
  EXPECT_EQ(a.global, b.global);
  EXPECT_EQ(rounds_csv(a.history, 4), rounds_csv(b.history, 4));
}

TEST(Experiment, WorkerCountDoesNotChangeResults) {
  auto cfg = small_config("ldawa_fedavg", 3);
  cfg.workers = 1;
  Experiment one(cfg);
  cfg.workers = 8;
  Experiment eight(cfg);
  EXPECT_EQ(eight.workers(), 8u);
  auto a = one.run(), b = eight.run();
  EXPECT_EQ(a.state.global, b.state.global);
  EXPECT_EQ(rounds_csv(a.state.history, 4), rounds_csv(b.state.history, 4));
  EXPECT_EQ(clients_csv(a.state.history), clients_csv(b.state.history));
}

TEST(Experiment, CrossDeviceSamplesKClients) {
  auto cfg = small_config("fedavg", 3);
  cfg.clients_per_round = 2;
  Experiment exp(cfg);
  exp.set_local_trainer(scripted());
  auto state = exp.initial_state();
  for (int r = 0; r < 3; ++r) {
    auto rec = exp.run_round(state, {false, false}).record;
    ASSERT_EQ(rec.clients.size(), 2u);
    EXPECT_EQ(rec.clients[0].client_id, sample_clients(4, 2, r, cfg.run_seed)[0]);
  }
}

TEST(Experiment, FeduRecordsDecisionsAfterFirstParticipation) {
  auto cfg = small_config("ldawa_fedu", 4);
  cfg.aggregation.fedu_threshold = 1e-9;
  Experiment exp(cfg);
  exp.set_local_trainer(scripted());
  auto state = exp.initial_state();
  for (int r = 0; r < 4; ++r) exp.run_round(state, {false, false});
  EXPECT_FALSE(state.history[1].clients[0].fedu_kept);
  const auto& c = state.history[2].clients[0];
  ASSERT_TRUE(c.fedu_kept);
  EXPECT_TRUE(*c.fedu_kept);
  EXPECT_GT(*c.fedu_distance, 0.0);
  EXPECT_EQ(state.client_models.size(), 4u);
}

TEST(Experiment, InfiniteFeduThresholdMatchesLdawaFedavg) {
  auto fedu = small_config("ldawa_fedu", 4);
  fedu.aggregation.fedu_threshold = std::numeric_limits<double>::infinity();
  auto plain = small_config("ldawa_fedavg", 4);
  auto a = Experiment(fedu).run(), b = Experiment(plain).run();
  EXPECT_EQ(a.state.global, b.state.global);
}

TEST(Experiment, ClientFailureNamesRoundAndClient) {
  Experiment exp(small_config());
  exp.set_local_trainer([](ClientId id, const ParamSet& init, Rng&) -> ClientUpdate {
    if (id == 2) throw std::runtime_error("boom");
    ClientUpdate u;
    u.params = init;
    return u;
  });
  auto state = exp.initial_state();
  try {
    exp.run_round(state);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_EQ(std::string(e.what()), "round 0: client 2: boom");
  }
  EXPECT_EQ(state.round, 0u);
  EXPECT_TRUE(state.history.empty());
}

TEST(Experiment, RejectsMismatchedModel) {
  auto cfg = small_config();
  cfg.model.encoder_dims = {5, 8, 4};
  EXPECT_THROW(Experiment{cfg}, ValidationError);
}

TEST(Experiment, ProbeCadence) {
  auto cfg = small_config("fedavg", 4);
  cfg.eval.every = 2;
  auto res = Experiment(cfg).run();
  std::vector<bool> probed;
  for (const auto& r : res.state.history) probed.push_back(r.probe_acc.has_value());
  EXPECT_EQ(probed, (std::vector<bool>{false, true, false, true}));
  ASSERT_EQ(res.final_probes.size(), 1u);
  EXPECT_EQ(res.final_probes[0].accuracy, *res.state.history.back().probe_acc);
}

TEST(RunExperiment, WritesArtifacts) {
  oracle::TempDir dir("run");
  auto cfg = small_config("ldawa", 4);
  cfg.output.dir = (dir / "out").string();
  cfg.output.checkpoint_every = 2;
  cfg.eval.label_fractions = {1.0, 0.5};
  auto res = run_experiment(cfg);
  const auto out = dir / "out";
  for (const char* f : {"run.json", "partition.json", "initial.ckpt", "final.ckpt", "rounds.csv", "clients.csv",
                        "summary.json", "checkpoints/round_0001.ckpt", "checkpoints/round_0003.ckpt"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  EXPECT_EQ(checkpoint::load(out / "final.ckpt"), res.state.global);
  EXPECT_EQ(checkpoint::load(out / "initial.ckpt"), res.initial);
  EXPECT_EQ(config_to_json(load_config((out / "run.json").string())), config_to_json(cfg));
  auto rounds = read_rounds_csv(out / "rounds.csv");
  EXPECT_EQ(rounds.rows.size(), 4u);
  auto summary = nlohmann::json::parse(oracle::slurp(out / "summary.json"));
  EXPECT_EQ(summary["final"].size(), 2u);
  EXPECT_EQ(summary["warmup_rounds"], 2);
  double mean = (res.state.history[2].mu_delta_model + res.state.history[3].mu_delta_model) / 2;
  EXPECT_DOUBLE_EQ(summary["mean_mu_delta_after_warmup"].get<double>(), mean);
  EXPECT_EQ(partition_from_json(oracle::slurp(out / "partition.json")), Experiment(cfg).partition());
}

TEST(RunExperiment, ByteIdenticalReruns) {
  oracle::TempDir dir("rerun");
  auto cfg = small_config("ldawa_loss", 3);
  cfg.output.dir = (dir / "a").string();
  run_experiment(cfg);
  cfg.output.dir = (dir / "b").string();
  run_experiment(cfg);
  for (const char* f : {"rounds.csv", "clients.csv", "final.ckpt", "summary.json", "partition.json"}) {
    EXPECT_EQ(oracle::slurp(dir / "a" / f), oracle::slurp(dir / "b" / f)) << f;
  }
}

TEST(RunExperiment, RequiresOutputDir) { EXPECT_THROW(run_experiment(small_config()), ValidationError); }
