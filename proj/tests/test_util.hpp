#pragma once

#include <random>

#include "resesop/resesop.hpp"

namespace testutil {

using resesop::DenseMatrix;
using resesop::Vec;

inline Vec randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vec v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline DenseMatrix randn(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  DenseMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// rows x cols with orthonormal rows (rows <= cols).
inline DenseMatrix orthonormal_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = randn(cols, rows, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(cols),
                                                                          static_cast<Eigen::Index>(rows));
  return q.transpose();
}

/// Relative mismatch of <Ax, y> and <x, A*y> for one random pair.
inline double adjoint_mismatch(const resesop::LinearOperator& op, std::mt19937_64& rng) {
  const Vec x = randn(op.domain_size(), rng), y = randn(op.range_size(), rng);
  const Vec ax = op.apply_to(x), aty = op.adjoint_to(y);
  const double lhs = resesop::dot(ax, y), rhs = resesop::dot(x, aty);
  const double scale = std::max(resesop::norm(ax) * resesop::norm(y), resesop::norm(x) * resesop::norm(aty));
  return scale > 0.0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline resesop::MeasurementVector measurement(Vec values, std::vector<std::size_t> lengths) {
  return {std::move(values), resesop::SubproblemPartition::from_lengths(lengths)};
}

}  // namespace testutil
