#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "madp/types.hpp"

namespace madp::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kPinvRcond = 1e-12;

namespace detail {

inline Eigen::JacobiSVD<Matrix> svd_of(const Matrix& a) {
  return Eigen::JacobiSVD<Matrix>(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

}  // namespace detail

// Moore-Penrose pseudoinverse via SVD. Singular values below
// rcond * sigma_max are treated as zero.
inline Matrix pinv(const Matrix& a, double rcond = kPinvRcond) {
  if (a.rows() == 0 || a.cols() == 0) return Matrix::Zero(a.cols(), a.rows());
  auto svd = detail::svd_of(a);
  const auto& sv = svd.singularValues();
  double cutoff = rcond * (sv.size() > 0 ? sv(0) : 0.0);
  Vector inv_sv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv_sv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

inline int rank(const Matrix& a, double rcond = kPinvRcond) {
  if (a.rows() == 0 || a.cols() == 0) return 0;
  auto svd = detail::svd_of(a);
  const auto& sv = svd.singularValues();
  double cutoff = rcond * (sv.size() > 0 ? sv(0) : 0.0);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  return r;
}

// Largest L1 norm over columns; the per-record sensitivity of answering the
// strategy's rows jointly.
inline double max_col_l1(const Matrix& a) {
  double best = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    best = std::max(best, a.col(j).cwiseAbs().sum());
  return best;
}

// Total expected squared error of the matrix mechanism answering workload W
// through strategy A at budget epsilon:
//   (2 / epsilon^2) * |A|_1^2 * |W A^+|_F^2.
inline double mm_expected_error(const Matrix& w, const Matrix& a, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (w.cols() != a.cols()) throw std::invalid_argument("W and A must share a domain");
  if (rank(a) < a.cols()) throw RankDeficient("strategy matrix lacks full column rank");
  double l1 = max_col_l1(a);
  double fro2 = (w * pinv(a)).squaredNorm();
  return 2.0 / (epsilon * epsilon) * l1 * l1 * fro2;
}

// Least-squares estimate of the data vector from a cache of noisy answers.
// Row j and answer j are scaled by the budget spent on them, so rows bought
// with more budget count for more. Returns q . A~^+ . y~.
inline double reconstruct(const Matrix& cache, const Vector& budgets,
                          const Vector& answers, const LinearQuery& q) {
  if (cache.rows() != budgets.size() || cache.rows() != answers.size())
    throw std::invalid_argument("cache, budgets, and answers must align");
  if (q.dim() != cache.cols())
    throw std::invalid_argument("query dimension must match the cache");
  if (rank(cache) < cache.cols())
    throw RankDeficient("cache does not span the data domain");
  Matrix scaled = budgets.asDiagonal() * cache;
  Vector scaled_answers = budgets.cwiseProduct(answers);
  Vector estimate = pinv(scaled) * scaled_answers;
  double out = 0;
  for (int j = 0; j < q.dim(); ++j) out += q.coef[static_cast<std::size_t>(j)] * estimate(j);
  return out;
}

}  // namespace madp::linalg
