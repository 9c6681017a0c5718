#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "json.hpp"
#include "ldawa/divergence.hpp"
#include "ldawa/errors.hpp"
#include "oracles.hpp"

using namespace ldawa;

namespace {

LayerTensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return LayerTensor("t", {n}, std::move(v));
}

}  // namespace

TEST(Cosine, HandValues) {
  EXPECT_DOUBLE_EQ(cosine(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine(vec({1, 2}), vec({2, 4})), 1.0);
  EXPECT_DOUBLE_EQ(cosine(vec({1, 2}), vec({-1, -2})), -1.0);
  EXPECT_NEAR(cosine(vec({1, 0}), vec({1, 1})), 1 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, ZeroNormConvention) {
  EXPECT_EQ(cosine(vec({0, 0}), vec({0, 0})), 1.0);
  EXPECT_EQ(cosine(vec({0, 0}), vec({1, 0})), 0.0);
  EXPECT_EQ(cosine(vec({1, 0}), vec({1e-13, 0})), 0.0);
}

TEST(Cosine, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> pos(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = n01(rng);
    for (auto& x : b) x = n01(rng);
    const double c = cosine(vec(a), vec(b));
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    const double s = pos(rng);
    auto as = a;
    for (auto& x : as) x *= s;
    EXPECT_NEAR(cosine(vec(as), vec(b)), c, 1e-12);
    EXPECT_NEAR(cosine(vec(b), vec(a)), c, 1e-15);
  }
}

TEST(LayerDivergence, IdentityAndNegation) {
  std::mt19937_64 rng(4);
  auto g = oracle::random_params(rng, 3, 6);
  auto r = layer_divergence(g, g, 7);
  EXPECT_EQ(r.client_id, 7u);
  EXPECT_NEAR(r.model_delta, 1.0, 1e-15);
  for (auto& [name, d] : r.per_layer_delta) EXPECT_NEAR(d, 1.0, 1e-15) << name;
  for (auto& [name, e] : r.per_layer_euclid) EXPECT_EQ(e, 0.0) << name;

  std::vector<double> neg_coeff{-1.0};
  std::vector<ParamSet> one{g};
  auto neg = weighted_sum(one, neg_coeff);
  auto rn = layer_divergence(g, neg);
  EXPECT_NEAR(rn.model_delta, -1.0, 1e-15);
  for (auto& [name, d] : rn.per_layer_delta) EXPECT_NEAR(d, -1.0, 1e-15) << name;
}

TEST(LayerDivergence, TwoLayerHandCase) {
  ParamSet g({LayerTensor("a", {2}, {1, 0}), LayerTensor("b", {2}, {0, 1})});
  ParamSet k({LayerTensor("a", {2}, {1, 1}), LayerTensor("b", {2}, {0, -2})});
  auto r = layer_divergence(g, k);
  EXPECT_NEAR(r.per_layer_delta[0].second, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.per_layer_delta[1].second, -1.0, 1e-15);
  // flat: g = (1,0,0,1), k = (1,1,0,-2): dot = -1, |g| = sqrt2, |k| = sqrt6
  EXPECT_NEAR(r.model_delta, -1 / std::sqrt(12.0), 1e-15);
  EXPECT_NEAR(r.per_layer_euclid[0].second, 1.0, 1e-15);
  EXPECT_NEAR(r.per_layer_euclid[1].second, 3.0, 1e-15);
  EXPECT_EQ(r.per_layer_delta[0].first, "a");
  EXPECT_NEAR(r.mean_layer_delta(), (1 / std::sqrt(2.0) - 1) / 2, 1e-15);
}

TEST(LayerDivergence, MatchesIndependentOracle) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    auto g = oracle::random_params(rng, 1 + i % 5, 32);
    auto k = oracle::perturbed(g, rng, 0.1 + (i % 7));
    auto r = layer_divergence(g, k);
    EXPECT_NEAR(r.model_delta, oracle::cosine(oracle::concat(g), oracle::concat(k)), 1e-13);
    for (std::size_t l = 0; l < g.num_layers(); ++l) {
      EXPECT_NEAR(r.per_layer_delta[l].second,
                  oracle::cosine(oracle::values_of(g.layer(l)), oracle::values_of(k.layer(l))), 1e-13);
    }
  }
}

TEST(LayerDivergence, ModelDeltaEqualsFlattenedCosineExactly) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 50; ++i) {
    auto g = oracle::random_params(rng, 1 + i % 5, 32);
    auto k = oracle::perturbed(g, rng, 1.0);
    EXPECT_EQ(layer_divergence(g, k).model_delta, cosine(flatten(g), flatten(k)));
  }
}

TEST(LayerDivergence, SingleLayerDeltasCoincide) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 30; ++i) {
    auto g = oracle::random_params(rng, 1, 20);
    auto k = oracle::perturbed(g, rng, 2.0);
    auto r = layer_divergence(g, k);
    EXPECT_NEAR(r.model_delta, r.per_layer_delta[0].second, 1e-14);
  }
}

TEST(LayerDivergence, RejectsIncompatible) {
  ParamSet g({LayerTensor("a", {2}, {1, 0})});
  ParamSet k({LayerTensor("a", {3}, {1, 0, 0})});
  EXPECT_THROW(layer_divergence(g, k), IncompatibleError);
}

TEST(MeanDelta, BothModes) {
  std::vector<DivergenceReport> reps(3);
  const double md[] = {0.9, 0.8, 0.7};
  for (int i = 0; i < 3; ++i) {
    reps[i].client_id = static_cast<ClientId>(i);
    reps[i].model_delta = md[i];
    reps[i].per_layer_delta = {{"a", 1.0}, {"b", md[i] - 0.1}};
  }
  EXPECT_NEAR(mean_delta(reps, MeanDeltaMode::kWholeModel), 0.8, 1e-15);
  EXPECT_NEAR(mean_delta(reps, MeanDeltaMode::kPerLayerAveraged), (0.9 + 0.85 + 0.8) / 3, 1e-15);
  EXPECT_THROW(mean_delta(std::span<const DivergenceReport>{}, MeanDeltaMode::kWholeModel), ValidationError);
  EXPECT_EQ(parse_mean_delta_mode("layer"), MeanDeltaMode::kPerLayerAveraged);
  EXPECT_EQ(to_string(MeanDeltaMode::kWholeModel), "model");
  EXPECT_THROW(parse_mean_delta_mode("bogus"), ValidationError);
}

TEST(DivergenceJson, OneObjectPerClient) {
  ParamSet g({LayerTensor("a", {2}, {1, 0}), LayerTensor("b", {1}, {2})});
  ParamSet k({LayerTensor("a", {2}, {0, 1}), LayerTensor("b", {1}, {3})});
  std::vector<DivergenceReport> reps{layer_divergence(g, k, 3), layer_divergence(g, g, 5)};
  auto doc = nlohmann::json::parse(reports_to_json(reps));
  ASSERT_EQ(doc.size(), 2u);
  EXPECT_EQ(doc[0]["client_id"], 3);
  EXPECT_EQ(doc[0]["layers"][0]["name"], "a");
  EXPECT_EQ(doc[0]["layers"][0]["delta"].get<double>(), 0.0);
  EXPECT_EQ(doc[0]["layers"][1]["euclid"].get<double>(), 1.0);
  EXPECT_EQ(doc[1]["model_delta"].get<double>(), reps[1].model_delta);
}
