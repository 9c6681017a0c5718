#include "ldawa/losses.hpp"

#include <cmath>
#include <limits>

#include "ldawa/errors.hpp"

namespace ldawa {

namespace {

constexpr double kMinRowNorm = 1e-12;

struct Standardized {
  Matrix values;  // (z - mean) / (std + eps)
  Eigen::RowVectorXd std;
};

Standardized standardize(const Matrix& z) {
  const double n = static_cast<double>(z.rows());
  Standardized s;
  const Eigen::RowVectorXd mean = z.colwise().mean();
  Matrix centred = z.rowwise() - mean;
  s.std = (centred.colwise().squaredNorm() / n).cwiseSqrt();
  s.values = centred;
  for (Eigen::Index j = 0; j < z.cols(); ++j) s.values.col(j) /= (s.std(j) + kBarlowEps);
  return s;
}

// Gradient wrt the raw column values given the gradient wrt the standardized ones.
//   dx_k = (g_k - mean(g)) / s  -  c_k / (N sigma s^2) * sum_i g_i c_i,   s = sigma + eps
Matrix standardize_backward(const Matrix& z, const Standardized& st, const Matrix& g) {
  const double n = static_cast<double>(z.rows());
  Matrix out(z.rows(), z.cols());
  const Eigen::RowVectorXd mean = z.colwise().mean();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double sigma = st.std(j);
    const double s = sigma + kBarlowEps;
    const Eigen::VectorXd c = z.col(j).array() - mean(j);
    const Eigen::VectorXd gj = g.col(j);
    Eigen::VectorXd dx = (gj.array() - gj.mean()) / s;
    if (sigma > 0.0) dx -= c * (gj.dot(c) / (n * sigma * s * s));
    out.col(j) = dx;
  }
  return out;
}

void require_pair(const Matrix& za, const Matrix& zb, const char* op) {
  if (za.rows() != zb.rows() || za.cols() != zb.cols()) {
    throw IncompatibleError(std::string(op) + ": views have different shapes");
  }
  if (za.rows() < 2) throw ValidationError(std::string(op) + ": batch must contain at least 2 rows");
}

}  // namespace

LossGrad loss_xent(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw IncompatibleError("loss_xent: " + std::to_string(logits.rows()) + " logit rows for " +
                            std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ValidationError("loss_xent: empty batch");
  const Eigen::Index classes = logits.cols();
  const double n = static_cast<double>(labels.size());
  LossGrad out;
  out.grad.resize(logits.rows(), classes);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(y) >= classes) {
      throw ValidationError("loss_xent: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double se = e.sum();
    total += std::log(se) - (logits(i, y) - mx);
    out.grad.row(i) = e / se;
    out.grad(i, y) -= 1.0;
  }
  out.grad /= n;
  out.loss = total / n;
  return out;
}

PairLossGrad loss_ntxent(const Matrix& za, const Matrix& zb, double tau) {
  require_pair(za, zb, "loss_ntxent");
  if (!(tau > 0.0)) throw ValidationError("loss_ntxent: temperature must be positive");
  const Eigen::Index n = za.rows();
  const Eigen::Index m = 2 * n;

  Matrix z(m, za.cols());
  z << za, zb;
  Eigen::VectorXd norms = z.rowwise().norm().cwiseMax(kMinRowNorm);
  Matrix u = z.array().colwise() / norms.array();

  const Matrix logits = (u * u.transpose()) / tau;
  // dL/dlogits, anchors on rows.
  Matrix g = Matrix::Zero(m, m);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index pos = i < n ? i + n : i - n;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) mx = std::max(mx, logits(i, j));
    }
    double se = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) se += std::exp(logits(i, j) - mx);
    }
    total += -logits(i, pos) + mx + std::log(se);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) g(i, j) = std::exp(logits(i, j) - mx) / se;
    }
    g(i, pos) -= 1.0;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  g *= inv_m;

  // logits = U U^T / tau, so dU = (G + G^T) U / tau.
  const Matrix du = ((g + g.transpose()) * u) / tau;
  // u = z / |z|: dz = (du - u (u . du)) / |z|.
  Matrix dz(m, z.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const double proj = u.row(r).dot(du.row(r));
    dz.row(r) = (du.row(r) - proj * u.row(r)) / norms(r);
  }

  PairLossGrad out;
  out.loss = total * inv_m;
  out.grad_a = dz.topRows(n);
  out.grad_b = dz.bottomRows(n);
  return out;
}

Matrix barlow_cross_correlation(const Matrix& za, const Matrix& zb) {
  require_pair(za, zb, "barlow_cross_correlation");
  const auto a = standardize(za);
  const auto b = standardize(zb);
  return (a.values.transpose() * b.values) / static_cast<double>(za.rows());
}

double barlow_from_correlation(const Matrix& c, double lambda) {
  double on = 0.0, off = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      if (i == j) {
        const double d = 1.0 - c(i, i);
        on += d * d;
      } else {
        off += c(i, j) * c(i, j);
      }
    }
  }
  return on + lambda * off;
}

PairLossGrad loss_barlow(const Matrix& za, const Matrix& zb, double lambda) {
  require_pair(za, zb, "loss_barlow");
  if (!(lambda >= 0.0)) throw ValidationError("loss_barlow: lambda must be non-negative");
  const double n = static_cast<double>(za.rows());
  const auto a = standardize(za);
  const auto b = standardize(zb);
  const Matrix c = (a.values.transpose() * b.values) / n;

  Matrix gc(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      gc(i, j) = i == j ? -2.0 * (1.0 - c(i, i)) : 2.0 * lambda * c(i, j);
    }
  }
  // C_ij = sum_n A_ni B_nj / N
  const Matrix ga = (b.values * gc.transpose()) / n;
  const Matrix gb = (a.values * gc) / n;

  PairLossGrad out;
  out.loss = barlow_from_correlation(c, lambda);
  out.grad_a = standardize_backward(za, a, ga);
  out.grad_b = standardize_backward(zb, b, gb);
  return out;
}

}  // namespace ldawa
