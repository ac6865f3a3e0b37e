#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "resesop/operators.hpp"

namespace resesop {

enum class Severity { negligible, moderate, severe };

inline std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::negligible: return "negligible";
    case Severity::moderate: return "moderate";
    case Severity::severe: return "severe";
  }
  return "unknown";
}

/// Heuristic cut points between the observed clusters of B_i / ||A_i||.
inline constexpr double kNegligibleRatio = 0.10;
inline constexpr double kModerateRatio = 0.60;

inline Severity classify_redundancy(double ratio) {
  require(ratio >= 0.0 && !std::isnan(ratio), "redundancy ratio must be >= 0");
  if (ratio <= kNegligibleRatio) return Severity::negligible;
  if (ratio <= kModerateRatio) return Severity::moderate;
  return Severity::severe;
}

struct RedundancyReport {
  struct Entry {
    double b = 0.0;
    double norm = 0.0;
    double ratio = 0.0;
    Severity severity = Severity::negligible;
  };
  std::vector<Entry> blocks;
  std::size_t rank = 0;
  Vec singular_values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  /// True when the B_i of equally sized blocks differ by more than `rel`.
  bool asymmetric(double rel = 0.01) const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& e : blocks) {
      lo = std::min(lo, e.b);
      hi = std::max(hi, e.b);
    }
    return hi - lo > rel * std::max(hi, std::numeric_limits<double>::min());
  }
};

namespace detail {

/// Largest eigenvalue of a symmetric matrix (lower triangle referenced).
inline double top_eigenvalue(const Eigen::MatrixXd& sym) {
  if (sym.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  return es.eigenvalues()[sym.rows() - 1];
}

/// Full left singular basis (M x M) and singular values of A.
struct LeftSvd {
  Eigen::MatrixXd u;
  Vec sigma;
  double at(std::size_t r, std::size_t k) const {
    return u(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
  }
};

inline LeftSvd left_svd(DenseMatrix a) {
  const auto m = a.rows(), n = a.cols();
  LeftSvd out;
  Eigen::BDCSVD<Eigen::MatrixXd> svd;
  if (m <= n) {
    // Row-major A is column-major A^T (n x m). QR of A^T = QR in place leaves
    // A = R^T Q^T, so the left singular vectors of A are the right singular
    // vectors of the m x m factor R.
    Eigen::Map<Eigen::MatrixXd> at(a.data(), n, m);
    Eigen::MatrixXd r;
    {
      Eigen::HouseholderQR<Eigen::Ref<Eigen::MatrixXd>> qr(at);
      r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    }
    a = DenseMatrix();
    svd.compute(r, Eigen::ComputeFullV);
    out.u = svd.matrixV();
  } else {
    svd.compute(Eigen::MatrixXd(a), Eigen::ComputeFullU);
    out.u = svd.matrixU();
  }
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD did not converge for a " + std::to_string(m) + " x " + std::to_string(n) + " matrix");
  out.sigma.assign(svd.singularValues().data(), svd.singularValues().data() + svd.singularValues().size());
  return out;
}

inline std::size_t numerical_rank(std::span<const double> sigma, double rank_tol) {
  if (sigma.empty() || sigma[0] <= 0.0) return 0;
  std::size_t k = 0;
  for (double s : sigma)
    if (s > rank_tol * sigma[0]) ++k;
  return k;
}

}  // namespace detail

inline constexpr std::size_t kDenseCap = 100'000'000;

/// B_i = ||A_i^* U_i diag(0_K, I_{M-K}) U^*||, ||A_i|| and their ratio for
/// every block. Writing U = [T | N] per block, A_i = T diag(sigma) V_K^*, so
/// B_i = ||diag(sigma) T_i^* N_i|| and ||A_i||^2 = lambda_max(X X^*) with
/// X = T_i diag(sigma).
inline RedundancyReport compute_B(DenseMatrix a, const SubproblemPartition& partition, double rank_tol = 1e-10,
                                  std::size_t cap = kDenseCap) {
  const std::size_t m = static_cast<std::size_t>(a.rows()), n = static_cast<std::size_t>(a.cols());
  require(m > 0 && n > 0, "compute_B needs a non-empty matrix");
  require(partition.total() == m, "partition does not match the matrix rows");
  require(rank_tol > 0.0 && rank_tol < 1.0, "rank_tol must lie in (0, 1)");
  if (m > cap / n)
    throw InputError("compute_B: " + std::to_string(m) + " x " + std::to_string(n) +
                     " exceeds the dense cap of " + std::to_string(cap) + " entries");
  if (!a.allFinite()) throw InputError("compute_B: matrix contains non-finite values");

  const detail::LeftSvd svd = detail::left_svd(std::move(a));
  RedundancyReport rep;
  rep.rows = m;
  rep.cols = n;
  rep.singular_values = svd.sigma;
  rep.rank = detail::numerical_rank(svd.sigma, rank_tol);
  const std::size_t k = rep.rank, nk = m - k;

  for (std::size_t b = 0; b < partition.count(); ++b) {
    const auto blk = partition[b];
    const auto mi = static_cast<Eigen::Index>(blk.length);
    Eigen::MatrixXd x(mi, static_cast<Eigen::Index>(k));
    for (Eigen::Index r = 0; r < mi; ++r)
      for (std::size_t c = 0; c < k; ++c)
        x(r, static_cast<Eigen::Index>(c)) = svd.at(blk.offset + static_cast<std::size_t>(r), c) * svd.sigma[c];
    RedundancyReport::Entry e;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(mi, mi);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
    e.norm = std::sqrt(std::max(0.0, detail::top_eigenvalue(gram)));
    if (nk > 0 && k > 0) {
      Eigen::MatrixXd null_part(mi, static_cast<Eigen::Index>(nk));
      for (Eigen::Index r = 0; r < mi; ++r)
        for (std::size_t c = 0; c < nk; ++c)
          null_part(r, static_cast<Eigen::Index>(c)) = svd.at(blk.offset + static_cast<std::size_t>(r), k + c);
      const Eigen::MatrixXd y = x.transpose() * null_part;  // K x (M-K)
      double top = 0.0;
      if (nk <= k) {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(y.cols(), y.cols());
        w.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose());
        top = detail::top_eigenvalue(w);
      } else {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(y.rows(), y.rows());
        w.selfadjointView<Eigen::Lower>().rankUpdate(y);
        top = detail::top_eigenvalue(w);
      }
      e.b = std::sqrt(std::max(0.0, top));
    }
    e.ratio = e.norm > 0.0 ? e.b / e.norm : 0.0;
    e.severity = classify_redundancy(e.ratio);
    rep.blocks.push_back(e);
  }
  return rep;
}

inline RedundancyReport compute_B(const LinearOperator& op, const SubproblemPartition& partition,
                                  double rank_tol = 1e-10, std::size_t cap = kDenseCap) {
  return compute_B(materialize_dense(op, cap), partition, rank_tol, cap);
}

// ---------------------------------------------------------------------------

struct OrthogonalityMatrix {
  Eigen::MatrixXd norms;  // entry (i, j) = ||A_i A_j^*||
  std::vector<double> block_norms;
  double tol = 1e-10;

  bool orthogonal(std::size_t i, std::size_t j) const {
    return norms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <=
           tol * block_norms[i] * block_norms[j];
  }
  bool pairwise_orthogonal() const {
    for (std::size_t i = 0; i < block_norms.size(); ++i)
      for (std::size_t j = 0; j < block_norms.size(); ++j)
        if (i != j && !orthogonal(i, j)) return false;
    return true;
  }
};

/// ||A_i A_j^*|| for every pair. Small blocks are materialized and measured
/// exactly; larger ones use power iteration on the composed map.
inline OrthogonalityMatrix orthogonality_matrix(std::span<const OperatorHandle> ops, double tol = 1e-10,
                                                std::size_t dense_cap = 4'000'000, int power_iters = 200) {
  require(!ops.empty(), "orthogonality_matrix needs suboperators");
  const std::size_t n = ops.size();
  OrthogonalityMatrix out;
  out.tol = tol;
  out.norms = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.block_norms.resize(n);
  std::size_t total = 0;
  for (const auto& op : ops) total += op->range_size() * op->domain_size();
  if (total <= dense_cap) {
    std::vector<DenseMatrix> mats;
    for (const auto& op : ops) mats.push_back(materialize_dense(*op));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const Eigen::MatrixXd prod = mats[i] * mats[j].transpose();
        Eigen::BDCSVD<Eigen::MatrixXd> svd(prod);
        const double v = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
        out.norms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        out.norms(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        ComposedOperator gram(ops[i], std::make_shared<AdjointView>(ops[j]));
        const double v = operator_norm(gram, power_iters, i * n + j);
        out.norms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        out.norms(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
  }
  for (std::size_t i = 0; i < n; ++i)
    out.block_norms[i] = std::sqrt(out.norms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
  return out;
}

// ---------------------------------------------------------------------------

struct ExtractedDirections {
  std::vector<Vec> directions;
  std::size_t rank = 0;
  bool full_row_rank = false;
  /// B_i per block; all zero for full row rank. ||u_i - u_bar_i|| <= B_i ||As - y||.
  Vec bound_factors;

  Vec error_bounds(double residual_norm) const {
    Vec out(bound_factors.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = bound_factors[i] * residual_norm;
    return out;
  }
};

/// Recovers u_i = A_i^* w_i from u^Sigma = A^* w: w_bar = (A^*)^+ u^Sigma is
/// split by the partition and lifted per block. Exact when A has full row rank.
inline ExtractedDirections extract_search_directions(std::span<const double> u_sigma, const DenseMatrix& a,
                                                     const SubproblemPartition& partition,
                                                     double rank_tol = 1e-10) {
  const auto m = a.rows(), n = a.cols();
  require(static_cast<std::size_t>(n) == u_sigma.size(), "gradient size does not match matrix columns");
  require(partition.total() == static_cast<std::size_t>(m), "partition does not match matrix rows");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(a), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  ExtractedDirections out;
  out.rank = detail::numerical_rank(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), rank_tol);
  out.full_row_rank = out.rank == static_cast<std::size_t>(m);
  const auto k = static_cast<Eigen::Index>(out.rank);
  Eigen::Map<const Eigen::VectorXd> g(u_sigma.data(), n);
  const Eigen::VectorXd coeff =
      (svd.matrixV().leftCols(k).transpose() * g).cwiseQuotient(s.head(k));
  const Eigen::VectorXd w = svd.matrixU().leftCols(k) * coeff;
  for (std::size_t i = 0; i < partition.count(); ++i) {
    const auto blk = partition[i];
    const auto off = static_cast<Eigen::Index>(blk.offset), len = static_cast<Eigen::Index>(blk.length);
    const Eigen::VectorXd ui = a.middleRows(off, len).transpose() * w.segment(off, len);
    out.directions.emplace_back(ui.data(), ui.data() + ui.size());
  }
  out.bound_factors.assign(partition.count(), 0.0);
  if (!out.full_row_rank) {
    const RedundancyReport rep = compute_B(a, partition, rank_tol);
    for (std::size_t i = 0; i < partition.count(); ++i) out.bound_factors[i] = rep.blocks[i].b;
  }
  return out;
}

}  // namespace resesop
