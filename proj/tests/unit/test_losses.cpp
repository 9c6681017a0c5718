#include <gtest/gtest.h>

#include <cmath>

#include "ldawa/losses.hpp"
#include "oracles.hpp"

using namespace ldawa;

TEST(Xent, HandValueAndGradient) {
  Matrix logits(2, 3);
  logits << 0, 0, 0, 1, 2, 3;
  std::vector<std::uint32_t> y{1, 2};
  auto r = loss_xent(logits, y);
  const double l0 = std::log(3.0);
  const double l1 = -3 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  EXPECT_NEAR(r.loss, (l0 + l1) / 2, 1e-14);
  auto f = [&](const Matrix& m) { return loss_xent(m, y).loss; };
  EXPECT_LT(oracle::rel_err(r.grad, oracle::numeric_grad(f, logits)), 1e-8);
}

TEST(Xent, StableForLargeLogits) {
  Matrix logits(1, 2);
  logits << 1000, 0;
  std::vector<std::uint32_t> y{0};
  auto r = loss_xent(logits, y);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(NtXent, MatchesReferenceExpressionUpToSign) {
  std::mt19937_64 rng(5);
  for (int n : {2, 3, 8}) {
    for (double tau : {0.1, 0.5, 1.0}) {
      Matrix a = oracle::random_matrix(rng, n, 4), b = oracle::random_matrix(rng, n, 4);
      EXPECT_NEAR(loss_ntxent(a, b, tau).loss, -oracle::simclr_reference_mean(a, b, tau), 1e-10)
          << n << " " << tau;
    }
  }
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  Matrix a = oracle::random_matrix(rng, 5, 3), b = oracle::random_matrix(rng, 5, 3);
  auto r = loss_ntxent(a, b, 0.3);
  auto fa = [&](const Matrix& m) { return loss_ntxent(m, b, 0.3).loss; };
  auto fb = [&](const Matrix& m) { return loss_ntxent(a, m, 0.3).loss; };
  EXPECT_LT(oracle::rel_err(r.grad_a, oracle::numeric_grad(fa, a)), 1e-7);
  EXPECT_LT(oracle::rel_err(r.grad_b, oracle::numeric_grad(fb, b)), 1e-7);
}

TEST(NtXent, ScaleInvariantAndSymmetric) {
  std::mt19937_64 rng(7);
  Matrix a = oracle::random_matrix(rng, 4, 3), b = oracle::random_matrix(rng, 4, 3);
  EXPECT_NEAR(loss_ntxent(a, b, 0.5).loss, loss_ntxent(3.0 * a, b, 0.5).loss, 1e-12);
  EXPECT_NEAR(loss_ntxent(a, b, 0.5).loss, loss_ntxent(b, a, 0.5).loss, 1e-12);
}

TEST(NtXent, AlignedViewsBeatRandomOnes) {
  std::mt19937_64 rng(8);
  Matrix a = oracle::random_matrix(rng, 6, 6);
  Matrix b = oracle::random_matrix(rng, 6, 6);
  EXPECT_LT(loss_ntxent(a, a, 0.2).loss, loss_ntxent(a, b, 0.2).loss);
}

TEST(Barlow, MatchesReferenceExpression) {
  std::mt19937_64 rng(9);
  for (double lambda : {5e-3, 0.1, 1.0}) {
    Matrix a = oracle::random_matrix(rng, 7, 4), b = oracle::random_matrix(rng, 7, 4);
    EXPECT_NEAR(loss_barlow(a, b, lambda).loss, oracle::barlow_reference(a, b, lambda), 1e-10);
  }
}

TEST(Barlow, ZeroAtIdentityCorrelation) {
  Matrix c = Matrix::Identity(5, 5);
  EXPECT_EQ(barlow_from_correlation(c, 0.3), 0.0);
  c(0, 1) = 0.5;
  c(2, 2) = 0.0;
  EXPECT_DOUBLE_EQ(barlow_from_correlation(c, 0.3), 1.0 + 0.3 * 0.25);
}

TEST(Barlow, CorrelationOfIdenticalViews) {
  std::mt19937_64 rng(10);
  Matrix a = oracle::random_matrix(rng, 50, 3);
  Matrix c = barlow_cross_correlation(a, a);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(c(i, i), 1.0, 1e-6);
  EXPECT_TRUE(c.isApprox(c.transpose(), 1e-12));
}

TEST(Barlow, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Matrix a = oracle::random_matrix(rng, 6, 3), b = oracle::random_matrix(rng, 6, 3);
  auto r = loss_barlow(a, b, 0.05);
  auto fa = [&](const Matrix& m) { return loss_barlow(m, b, 0.05).loss; };
  auto fb = [&](const Matrix& m) { return loss_barlow(a, m, 0.05).loss; };
  EXPECT_LT(oracle::rel_err(r.grad_a, oracle::numeric_grad(fa, a)), 1e-6);
  EXPECT_LT(oracle::rel_err(r.grad_b, oracle::numeric_grad(fb, b)), 1e-6);
}

TEST(Barlow, ConstantColumnStaysFinite) {
  Matrix a(4, 2), b(4, 2);
  a << 1, 0, 1, 1, 1, 2, 1, 3;
  b << 2, 1, 2, 0, 2, 3, 2, 2;
  auto r = loss_barlow(a, b, 0.01);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad_a.allFinite());
}
