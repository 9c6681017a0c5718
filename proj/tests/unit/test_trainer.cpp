#include <gtest/gtest.h>

#include <cmath>

#include "ldawa/errors.hpp"
#include "ldawa/trainer.hpp"
#include "oracles.hpp"

using namespace ldawa;

namespace {

Dataset small_blobs(std::size_t per_class = 30) {
  BlobSpec b;
  b.num_classes = 3;
  b.samples_per_class = per_class;
  b.dim = 6;
  b.seed = 2;
  return make_blobs(b);
}

ModelSpec ssl_model() {
  ModelSpec m;
  m.encoder_dims = {6, 12, 8};
  m.projector_dims = {8, 8};
  return m;
}

ModelSpec sup_model() {
  ModelSpec m;
  m.encoder_dims = {6, 12};
  m.head_classes = 3;
  return m;
}

TrainerSpec trainer(TrainMethod method) {
  TrainerSpec t;
  t.method = method;
  t.batch_size = 16;
  return t;
}

}  // namespace

TEST(Trainer, ValidatesModelAgainstMethod) {
  EXPECT_NO_THROW(validate(trainer(TrainMethod::kSimclr), ssl_model()));
  EXPECT_THROW(validate(trainer(TrainMethod::kSimclr), sup_model()), ValidationError);
  EXPECT_THROW(validate(trainer(TrainMethod::kSupervised), ssl_model()), ValidationError);
  auto t = trainer(TrainMethod::kSimclr);
  t.temperature = 0;
  EXPECT_THROW(validate(t, ssl_model()), ValidationError);
  t = trainer(TrainMethod::kSimclr);
  t.batch_size = 0;
  EXPECT_THROW(validate(t, ssl_model()), ValidationError);
  EXPECT_THROW(parse_train_method("byol"), ValidationError);
}

TEST(Trainer, ViewsAreIndependentPerturbations) {
  Rng rng(3);
  Matrix x = Matrix::Ones(20, 5);
  auto v = make_views(x, 0.1, 0.0, rng);
  EXPECT_FALSE(v.a.isApprox(v.b));
  EXPECT_LT((v.a - x).cwiseAbs().maxCoeff(), 1.0);
  auto masked = make_views(x, 0.0, 1.0, rng);
  EXPECT_EQ(masked.a.cwiseAbs().sum(), 0.0);
  auto clean = make_views(x, 0.0, 0.0, rng);
  EXPECT_EQ(clean.a, x);
}

TEST(Trainer, SslObjectiveGradient) {
  for (auto method : {TrainMethod::kSimclr, TrainMethod::kBarlowTwins}) {
    auto model = ssl_model();
    model.activation = Activation::kTanh;
    auto t = trainer(method);
    auto p = init_params(model, 5);
    std::mt19937_64 rng(1);
    Matrix a = oracle::random_matrix(rng, 6, 6), b = oracle::random_matrix(rng, 6, 6);
    auto obj = ssl_objective(p, model, t, a, b);
    auto f = [&](const ParamSet& q) { return ssl_objective(q, model, t, a, b).loss; };
    EXPECT_LT(oracle::rel_err(obj.grads, oracle::numeric_grad(f, p)), 1e-6) << to_string(method);
  }
}

TEST(Trainer, SupervisedObjectiveGradient) {
  auto model = sup_model();
  model.activation = Activation::kTanh;
  auto p = init_params(model, 6);
  std::mt19937_64 rng(2);
  Matrix x = oracle::random_matrix(rng, 5, 6);
  std::vector<std::uint32_t> y{0, 2, 1, 1, 0};
  auto obj = supervised_objective(p, model, x, y);
  auto f = [&](const ParamSet& q) { return supervised_objective(q, model, x, y).loss; };
  EXPECT_LT(oracle::rel_err(obj.grads, oracle::numeric_grad(f, p)), 1e-7);
}

TEST(Trainer, DeterministicGivenRng) {
  auto data = small_blobs();
  auto model = ssl_model();
  auto init = init_params(model, 1);
  Rng r1(9), r2(9), r3(10);
  auto a = train_local(data, init, trainer(TrainMethod::kSimclr), model, r1, 4);
  auto b = train_local(data, init, trainer(TrainMethod::kSimclr), model, r2, 4);
  auto c = train_local(data, init, trainer(TrainMethod::kSimclr), model, r3, 4);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_NE(a.params, c.params);
  EXPECT_EQ(a.client_id, 4u);
  EXPECT_EQ(a.num_samples, data.size());
}

TEST(Trainer, ZeroEpochsIsANoOp) {
  auto data = small_blobs();
  auto model = ssl_model();
  auto init = init_params(model, 1);
  auto t = trainer(TrainMethod::kBarlowTwins);
  t.local_epochs = 0;
  Rng rng(1);
  auto u = train_local(data, init, t, model, rng);
  EXPECT_EQ(u.params, init);
  EXPECT_TRUE(std::isfinite(u.train_loss));
}

TEST(Trainer, SupervisedTrainingReducesLoss) {
  auto data = small_blobs(60);
  auto model = sup_model();
  auto init = init_params(model, 1);
  auto t = trainer(TrainMethod::kSupervised);
  t.local_epochs = 0;
  Rng rng(1);
  const double before = train_local(data, init, t, model, rng).train_loss;
  t.local_epochs = 10;
  const double after = train_local(data, init, t, model, rng).train_loss;
  EXPECT_LT(after, 0.5 * before);
}

TEST(Trainer, SslTrainingReducesLoss) {
  auto data = small_blobs(60);
  auto model = ssl_model();
  auto init = init_params(model, 1);
  auto t = trainer(TrainMethod::kSimclr);
  t.local_epochs = 0;
  Rng rng(1);
  const double before = train_local(data, init, t, model, rng).train_loss;
  t.local_epochs = 20;
  const double after = train_local(data, init, t, model, rng).train_loss;
  EXPECT_LT(after, before);
}

TEST(Trainer, TinyShards) {
  auto model = ssl_model();
  auto init = init_params(model, 1);
  Dataset two("t", 6, 3, std::vector<double>(12, 0.5), {0, 1});
  Rng rng(1);
  auto u = train_local(two, init, trainer(TrainMethod::kSimclr), model, rng);
  EXPECT_EQ(u.num_samples, 2u);
  Dataset none("t", 6, 3, {}, {});
  EXPECT_THROW(train_local(none, init, trainer(TrainMethod::kSimclr), model, rng), std::exception);
}
