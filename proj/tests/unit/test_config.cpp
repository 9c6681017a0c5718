#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "ldawa/config.hpp"
#include "ldawa/errors.hpp"

using namespace ldawa;
using nlohmann::json;

namespace {

std::string message_of(const std::string& text, std::vector<std::string> overrides = {}) {
  try {
    parse_config(text, overrides);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyObjectGetsDefaults) {
  auto c = parse_config("{}");
  EXPECT_EQ(c.total_clients, 10u);
  EXPECT_EQ(c.clients_per_round, 10u);
  EXPECT_TRUE(c.cross_silo());
  EXPECT_EQ(c.rounds, 30u);
  EXPECT_EQ(c.aggregation.strategy, Strategy::kFedAvg);
  EXPECT_EQ(c.aggregation.warmup_rounds, 0u);
  EXPECT_EQ(c.model.encoder_dims, (std::vector<std::size_t>{16, 64, 32}));
  EXPECT_EQ(c.model.projector_dims, (std::vector<std::size_t>{32, 32}));
  EXPECT_FALSE(c.model.head_classes);
  EXPECT_EQ(c.partition.num_clients, 10u);
}

TEST(Config, WarmupDefaultsByStrategy) {
  for (auto s : all_strategies()) {
    auto c = parse_config(json{{"aggregation", {{"strategy", std::string(to_string(s))}}}}.dump());
    EXPECT_EQ(c.aggregation.warmup_rounds, is_divergence_aware(s) ? 2u : 0u) << to_string(s);
  }
  auto c = parse_config(R"({"aggregation": {"strategy": "ldawa", "warmup_rounds": 0}})");
  EXPECT_EQ(c.aggregation.warmup_rounds, 0u);
}

TEST(Config, SeedsInheritRunSeed) {
  auto c = parse_config(R"({"run_seed": 17})");
  EXPECT_EQ(c.dataset.blobs.seed, 17u);
  EXPECT_EQ(c.partition.seed, 17u);
  EXPECT_EQ(c.eval.seed, 17u);
  auto d = parse_config(R"({"run_seed": 17, "partition": {"seed": 3}})");
  EXPECT_EQ(d.partition.seed, 3u);
}

TEST(Config, SupervisedGetsHeadNotProjector) {
  auto c = parse_config(R"({"trainer": {"method": "supervised"}, "dataset": {"num_classes": 4, "dim": 5}})");
  EXPECT_EQ(c.model.head_classes, 4u);
  EXPECT_TRUE(c.model.projector_dims.empty());
  EXPECT_EQ(c.model.encoder_dims.front(), 5u);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_NE(message_of(R"({"round": 3})").find("unknown config key 'round'"), std::string::npos);
  EXPECT_NE(message_of(R"({"trainer": {"learning_rate": 0.1}})").find("'trainer.learning_rate'"), std::string::npos);
  EXPECT_THROW(parse_config(R"({"trainer": {"learning_rate": 0.1}})"), ValidationError);
}

TEST(Config, ClientsPerRoundAboveTotal) {
  EXPECT_EQ(message_of(R"({"clients_per_round": 12})"),
            "clients_per_round (K=12) must not exceed total_clients (M=10)");
  EXPECT_THROW(parse_config(R"({"clients_per_round": 0})"), ValidationError);
}

TEST(Config, Overrides) {
  auto c = parse_config("{}", std::vector<std::string>{"rounds=5", "aggregation.strategy=ldawa",
                                                       "eval.label_fractions=[0.1,1.0]", "output.dir=out"});
  EXPECT_EQ(c.rounds, 5u);
  EXPECT_EQ(c.aggregation.strategy, Strategy::kLDawa);
  EXPECT_EQ(c.eval.label_fractions, (std::vector<double>{0.1, 1.0}));
  EXPECT_EQ(c.output.dir, "out");
  EXPECT_THROW(parse_config("{}", std::vector<std::string>{"roundz=5"}), ValidationError);
  EXPECT_THROW(parse_config("{}", std::vector<std::string>{"rounds"}), ValidationError);
}

TEST(Config, InfiniteFeduThreshold) {
  auto c = parse_config(R"({"aggregation": {"strategy": "ldawa_fedu", "fedu_threshold": "inf"}})");
  EXPECT_TRUE(std::isinf(c.aggregation.fedu_threshold));
  EXPECT_EQ(json::parse(config_to_json(c))["aggregation"]["fedu_threshold"], "inf");
  EXPECT_THROW(parse_config(R"({"aggregation": {"fedu_threshold": 0}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"aggregation": {"fedu_threshold": "big"}})"), ValidationError);
}

TEST(Config, ResolvedJsonRoundTrips) {
  auto c = parse_config(R"({"run_seed": 5, "total_clients": 6, "clients_per_round": 3,
                            "aggregation": {"strategy": "ldawa_loss", "renormalize": true},
                            "partition": {"scheme": "dirichlet", "alpha": 0.1},
                            "trainer": {"method": "barlow_twins", "lambda": 0.01}})");
  const auto text = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config(text)), text);
}

TEST(Config, ValidationErrors) {
  EXPECT_THROW(parse_config(R"({"aggregation": {"strategy": "fedprox"}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"partition": {"scheme": "dirichlet", "alpha": -1}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"partition": {"scheme": "single_class"}, "dataset": {"num_classes": 4}})"),
               ValidationError);
  EXPECT_NO_THROW(parse_config(
      R"({"partition": {"scheme": "single_class", "allow_class_reuse": true}, "dataset": {"num_classes": 4}})"));
  EXPECT_THROW(parse_config(R"({"model": {"encoder_dims": [3, 8]}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"dataset": {"kind": "csv"}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"rounds": "ten"})"), ValidationError);
  EXPECT_THROW(parse_config("[1, 2]"), std::exception);
  EXPECT_THROW(parse_config("{"), std::exception);
}

TEST(Config, SchemaListsEverySection) {
  auto s = json::parse(config_schema());
  EXPECT_EQ(s["type"], "object");
  EXPECT_EQ(s["additionalProperties"], false);
  auto defaults = json::parse(config_to_json(parse_config("{}")));
  for (const auto& [key, value] : defaults.items()) {
    ASSERT_TRUE(s["properties"].contains(key)) << key;
    if (value.is_object()) {
      for (const auto& [inner, _] : value.items()) {
        EXPECT_TRUE(s["properties"][key]["properties"].contains(inner)) << key << "." << inner;
      }
    }
  }
}
