#pragma once

#include <Eigen/Dense>

#include <memory>
#include <random>
#include <sstream>
#include <string_view>
#include <utility>

#include "resesop/core.hpp"
#include "resesop/image.hpp"

namespace resesop {

/// Dense matrices are row-major so a materialized operator can be read as
/// its own transpose without copying.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class OperatorKind {
  radon,
  masked_fourier_sense,
  nonuniform_dft,
  dense_matrix,
  augmented,
  row_block_view,
  finite_difference,
  composed,
};

inline std::string_view to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::radon: return "radon";
    case OperatorKind::masked_fourier_sense: return "masked_fourier_sense";
    case OperatorKind::nonuniform_dft: return "nonuniform_dft";
    case OperatorKind::dense_matrix: return "dense_matrix";
    case OperatorKind::augmented: return "augmented";
    case OperatorKind::row_block_view: return "row_block_view";
    case OperatorKind::finite_difference: return "finite_difference";
    case OperatorKind::composed: return "composed";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

/// Ordered, disjoint, contiguous blocks of measurement scalars. Complex data
/// occupies two scalars per sample, so complex blocks have even lengths.
class SubproblemPartition {
 public:
  struct Block {
    std::size_t offset = 0;
    std::size_t length = 0;
    std::size_t end() const { return offset + length; }
  };

  SubproblemPartition() = default;

  /// Validates that the blocks tile [0, total) in order.
  SubproblemPartition(std::vector<Block> blocks, std::size_t total) : blocks_(std::move(blocks)) {
    require(!blocks_.empty(), "partition needs at least one block");
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      if (b.offset < cursor)
        throw InputError("partition block " + std::to_string(i) + " overlaps its predecessor");
      if (b.offset > cursor)
        throw InputError("partition leaves rows [" + std::to_string(cursor) + ", " +
                         std::to_string(b.offset) + ") uncovered");
      require(b.length > 0, "partition block " + std::to_string(i) + " is empty");
      cursor = b.end();
    }
    if (cursor != total)
      throw InputError("partition covers " + std::to_string(cursor) + " rows, operator has " +
                       std::to_string(total));
  }

  static SubproblemPartition single(std::size_t total) { return {{{0, total}}, total}; }

  /// Splits `units` consecutive units of `unit_size` scalars into `count`
  /// nearly equal groups; unit k goes to block floor(k * count / units).
  static SubproblemPartition even(std::size_t units, std::size_t unit_size, std::size_t count) {
    require(count >= 1 && count <= units, "partition count must lie in [1, units]");
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t lo = (i * units + count - 1) / count;
      const std::size_t hi = ((i + 1) * units + count - 1) / count;
      blocks.push_back({lo * unit_size, (hi - lo) * unit_size});
    }
    return {std::move(blocks), units * unit_size};
  }

  /// Blocks given by their lengths, in order.
  static SubproblemPartition from_lengths(const std::vector<std::size_t>& lengths) {
    std::vector<Block> blocks;
    std::size_t off = 0;
    for (auto len : lengths) {
      blocks.push_back({off, len});
      off += len;
    }
    return {std::move(blocks), off};
  }

  std::size_t count() const { return blocks_.size(); }
  std::size_t total() const { return blocks_.empty() ? 0 : blocks_.back().end(); }
  const Block& operator[](std::size_t i) const { return blocks_.at(i); }
  const std::vector<Block>& blocks() const { return blocks_; }

  SubproblemPartition with_appended(std::size_t length) const {
    auto b = blocks_;
    b.push_back({total(), length});
    return {std::move(b), total() + length};
  }

  std::span<const double> slice(std::span<const double> v, std::size_t i) const {
    return v.subspan(blocks_.at(i).offset, blocks_.at(i).length);
  }
  std::span<double> slice(std::span<double> v, std::size_t i) const {
    return v.subspan(blocks_.at(i).offset, blocks_.at(i).length);
  }

  friend bool operator==(const SubproblemPartition& a, const SubproblemPartition& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i)
      if (a.blocks_[i].offset != b.blocks_[i].offset || a.blocks_[i].length != b.blocks_[i].length)
        return false;
    return true;
  }

 private:
  std::vector<Block> blocks_;
};

/// Flat measurement data together with its subproblem structure.
struct MeasurementVector {
  Vec values;
  SubproblemPartition partition;

  std::span<const double> block(std::size_t i) const { return partition.slice(std::span<const double>(values), i); }
  std::span<double> block(std::size_t i) { return partition.slice(std::span<double>(values), i); }
};

// ---------------------------------------------------------------------------

/// A linear map between flat real vectors (complex spaces are identified with
/// R^2n). Implementations are immutable after construction and thread-safe.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual std::size_t domain_size() const = 0;
  virtual std::size_t range_size() const = 0;
  virtual OperatorKind kind() const = 0;

  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void adjoint(std::span<const double> y, std::span<double> x) const = 0;

  /// Rows [begin, begin + out.size()) of apply(x). Operators that can evaluate
  /// a subset of rows cheaply override this.
  virtual void apply_rows(std::span<const double> x, std::size_t begin, std::span<double> out) const {
    Vec full(range_size());
    apply(x, full);
    std::copy_n(full.begin() + static_cast<std::ptrdiff_t>(begin), out.size(), out.begin());
  }

  /// adjoint of the zero-padded row block starting at `begin`.
  virtual void adjoint_rows(std::span<const double> y_block, std::size_t begin,
                            std::span<double> x) const {
    Vec full(range_size(), 0.0);
    std::copy(y_block.begin(), y_block.end(), full.begin() + static_cast<std::ptrdiff_t>(begin));
    adjoint(full, x);
  }

  /// Row r of the matrix representation.
  virtual void row(std::size_t r, std::span<double> out) const {
    const double one = 1.0;
    adjoint_rows(std::span<const double>(&one, 1), r, out);
  }

  Vec apply_to(std::span<const double> x) const {
    check_domain(x.size());
    Vec y(range_size());
    apply(x, y);
    return y;
  }
  Vec adjoint_to(std::span<const double> y) const {
    check_range(y.size());
    Vec x(domain_size());
    adjoint(y, x);
    return x;
  }

 protected:
  void check_domain(std::size_t n) const {
    if (n != domain_size())
      throw InputError(std::string(to_string(kind())) + ": input has " + std::to_string(n) +
                       " scalars, domain expects " + std::to_string(domain_size()));
  }
  void check_range(std::size_t n) const {
    if (n != range_size())
      throw InputError(std::string(to_string(kind())) + ": data has " + std::to_string(n) +
                       " scalars, range expects " + std::to_string(range_size()));
  }
};

using OperatorHandle = std::shared_ptr<const LinearOperator>;

// ---------------------------------------------------------------------------

class DenseMatrixOperator final : public LinearOperator {
 public:
  explicit DenseMatrixOperator(DenseMatrix m) : m_(std::move(m)) {}

  std::size_t domain_size() const override { return static_cast<std::size_t>(m_.cols()); }
  std::size_t range_size() const override { return static_cast<std::size_t>(m_.rows()); }
  OperatorKind kind() const override { return OperatorKind::dense_matrix; }
  const DenseMatrix& matrix() const { return m_; }

  void apply(std::span<const double> x, std::span<double> y) const override {
    apply_rows(x, 0, y);
  }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    adjoint_rows(y, 0, x);
  }
  void apply_rows(std::span<const double> x, std::size_t begin, std::span<double> out) const override {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), m_.cols());
    Eigen::Map<Eigen::VectorXd> yv(out.data(), static_cast<Eigen::Index>(out.size()));
    yv.noalias() = m_.middleRows(static_cast<Eigen::Index>(begin), yv.size()) * xv;
  }
  void adjoint_rows(std::span<const double> y, std::size_t begin, std::span<double> x) const override {
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    Eigen::Map<Eigen::VectorXd> xv(x.data(), m_.cols());
    xv.noalias() = m_.middleRows(static_cast<Eigen::Index>(begin), yv.size()).transpose() * yv;
  }
  void row(std::size_t r, std::span<double> out) const override {
    for (Eigen::Index j = 0; j < m_.cols(); ++j) out[static_cast<std::size_t>(j)] = m_(static_cast<Eigen::Index>(r), j);
  }

 private:
  DenseMatrix m_;
};

inline OperatorHandle make_dense(DenseMatrix m) {
  return std::make_shared<DenseMatrixOperator>(std::move(m));
}

inline OperatorHandle make_identity(std::size_t n) {
  return make_dense(DenseMatrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
}

/// Forward differences (d/dx, d/dy) of a real image, zero on the last
/// column/row respectively. Range layout: all x-differences, then all y.
class FiniteDifferenceOperator final : public LinearOperator {
 public:
  FiniteDifferenceOperator(std::size_t width, std::size_t height) : w_(width), h_(height) {
    require(width >= 1 && height >= 1, "gradient needs a non-empty grid");
  }
  std::size_t domain_size() const override { return w_ * h_; }
  std::size_t range_size() const override { return 2 * w_ * h_; }
  OperatorKind kind() const override { return OperatorKind::finite_difference; }

  void apply(std::span<const double> x, std::span<double> y) const override {
    const std::size_t n = w_ * h_;
    for (std::size_t r = 0; r < h_; ++r)
      for (std::size_t c = 0; c < w_; ++c) {
        const std::size_t p = r * w_ + c;
        y[p] = c + 1 < w_ ? x[p + 1] - x[p] : 0.0;
        y[n + p] = r + 1 < h_ ? x[p + w_] - x[p] : 0.0;
      }
  }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    const std::size_t n = w_ * h_;
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t r = 0; r < h_; ++r)
      for (std::size_t c = 0; c < w_; ++c) {
        const std::size_t p = r * w_ + c;
        if (c + 1 < w_) {
          x[p + 1] += y[p];
          x[p] -= y[p];
        }
        if (r + 1 < h_) {
          x[p + w_] += y[n + p];
          x[p] -= y[n + p];
        }
      }
  }

 private:
  std::size_t w_, h_;
};

/// Suboperator restricted to one row block of its parent. Holds no rows of
/// its own; evaluation goes through the parent's ranged entry points.
class RowBlockView final : public LinearOperator {
 public:
  RowBlockView(OperatorHandle parent, std::size_t begin, std::size_t length)
      : parent_(std::move(parent)), begin_(begin), length_(length) {
    require(parent_ != nullptr, "row block view needs a parent operator");
    require(begin + length <= parent_->range_size(), "row block exceeds parent range");
  }
  std::size_t domain_size() const override { return parent_->domain_size(); }
  std::size_t range_size() const override { return length_; }
  OperatorKind kind() const override { return OperatorKind::row_block_view; }
  std::size_t begin() const { return begin_; }
  const OperatorHandle& parent() const { return parent_; }

  void apply(std::span<const double> x, std::span<double> y) const override {
    parent_->apply_rows(x, begin_, y);
  }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    parent_->adjoint_rows(y, begin_, x);
  }
  void apply_rows(std::span<const double> x, std::size_t begin, std::span<double> out) const override {
    parent_->apply_rows(x, begin_ + begin, out);
  }
  void adjoint_rows(std::span<const double> y, std::size_t begin, std::span<double> x) const override {
    parent_->adjoint_rows(y, begin_ + begin, x);
  }
  void row(std::size_t r, std::span<double> out) const override { parent_->row(begin_ + r, out); }

 private:
  OperatorHandle parent_;
  std::size_t begin_, length_;
};

/// Vertical stack [top; bottom] over a shared domain.
class AugmentedOperator final : public LinearOperator {
 public:
  AugmentedOperator(OperatorHandle top, OperatorHandle bottom)
      : top_(std::move(top)), bottom_(std::move(bottom)) {
    require(top_ && bottom_, "augmented operator needs two operators");
    if (top_->domain_size() != bottom_->domain_size())
      throw InputError("regularizer domain (" + std::to_string(bottom_->domain_size()) +
                       ") differs from operator domain (" + std::to_string(top_->domain_size()) + ")");
  }
  std::size_t domain_size() const override { return top_->domain_size(); }
  std::size_t range_size() const override { return top_->range_size() + bottom_->range_size(); }
  OperatorKind kind() const override { return OperatorKind::augmented; }

  void apply(std::span<const double> x, std::span<double> y) const override {
    top_->apply(x, y.first(top_->range_size()));
    bottom_->apply(x, y.subspan(top_->range_size()));
  }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    top_->adjoint(y.first(top_->range_size()), x);
    Vec tmp(domain_size());
    bottom_->adjoint(y.subspan(top_->range_size()), tmp);
    axpy(1.0, tmp, x);
  }
  void apply_rows(std::span<const double> x, std::size_t begin, std::span<double> out) const override {
    const std::size_t split = top_->range_size();
    const std::size_t end = begin + out.size();
    if (begin < split) {
      const std::size_t n = std::min(end, split) - begin;
      top_->apply_rows(x, begin, out.first(n));
    }
    if (end > split) {
      const std::size_t lo = std::max(begin, split);
      bottom_->apply_rows(x, lo - split, out.subspan(lo - begin));
    }
  }
  void adjoint_rows(std::span<const double> y, std::size_t begin, std::span<double> x) const override {
    const std::size_t split = top_->range_size();
    const std::size_t end = begin + y.size();
    std::fill(x.begin(), x.end(), 0.0);
    Vec tmp(domain_size());
    if (begin < split) {
      const std::size_t n = std::min(end, split) - begin;
      top_->adjoint_rows(y.first(n), begin, tmp);
      axpy(1.0, tmp, x);
    }
    if (end > split) {
      const std::size_t lo = std::max(begin, split);
      bottom_->adjoint_rows(y.subspan(lo - begin), lo - split, tmp);
      axpy(1.0, tmp, x);
    }
  }
  void row(std::size_t r, std::span<double> out) const override {
    if (r < top_->range_size()) top_->row(r, out);
    else bottom_->row(r - top_->range_size(), out);
  }

 private:
  OperatorHandle top_, bottom_;
};

/// outer ∘ inner
class ComposedOperator final : public LinearOperator {
 public:
  ComposedOperator(OperatorHandle outer, OperatorHandle inner)
      : outer_(std::move(outer)), inner_(std::move(inner)) {
    require(outer_->domain_size() == inner_->range_size(), "composition size mismatch");
  }
  std::size_t domain_size() const override { return inner_->domain_size(); }
  std::size_t range_size() const override { return outer_->range_size(); }
  OperatorKind kind() const override { return OperatorKind::composed; }
  void apply(std::span<const double> x, std::span<double> y) const override {
    Vec mid(inner_->range_size());
    inner_->apply(x, mid);
    outer_->apply(mid, y);
  }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    Vec mid(outer_->domain_size());
    outer_->adjoint(y, mid);
    inner_->adjoint(mid, x);
  }

 private:
  OperatorHandle outer_, inner_;
};

/// Swaps apply and adjoint of the wrapped operator.
class AdjointView final : public LinearOperator {
 public:
  explicit AdjointView(OperatorHandle op) : op_(std::move(op)) {}
  std::size_t domain_size() const override { return op_->range_size(); }
  std::size_t range_size() const override { return op_->domain_size(); }
  OperatorKind kind() const override { return OperatorKind::composed; }
  void apply(std::span<const double> x, std::span<double> y) const override { op_->adjoint(x, y); }
  void adjoint(std::span<const double> y, std::span<double> x) const override { op_->apply(y, x); }

 private:
  OperatorHandle op_;
};

// ---------------------------------------------------------------------------

/// One view per partition block; suboperator i applies `op` restricted to
/// block i and its adjoint zero-pads block i.
inline std::vector<OperatorHandle> split(const OperatorHandle& op, const SubproblemPartition& partition) {
  require(op != nullptr, "split needs an operator");
  if (partition.total() != op->range_size())
    throw InputError("partition covers " + std::to_string(partition.total()) +
                     " rows but operator range has " + std::to_string(op->range_size()));
  std::vector<OperatorHandle> subs;
  subs.reserve(partition.count());
  for (const auto& b : partition.blocks())
    subs.push_back(std::make_shared<RowBlockView>(op, b.offset, b.length));
  return subs;
}

/// Stacked operator [A; R], its partition with one extra block for R, and the
/// prescribed inexactness of that block.
struct AugmentedSystem {
  OperatorHandle op;
  SubproblemPartition partition;
  std::size_t regularizer_block = 0;
  double e_reg = 0.0;

  /// Data [y; 0].
  Vec augment_data(std::span<const double> y) const {
    Vec out(op->range_size(), 0.0);
    std::copy(y.begin(), y.end(), out.begin());
    return out;
  }
  /// Inexactness levels {E_i} followed by E^R.
  Vec augment_levels(std::span<const double> e) const {
    Vec out(e.begin(), e.end());
    out.push_back(e_reg);
    return out;
  }
};

inline AugmentedSystem augment_with_regularizer(const OperatorHandle& op,
                                                const SubproblemPartition& partition,
                                                const OperatorHandle& reg, double e_reg) {
  require(e_reg >= 0.0, "regularizer inexactness must be non-negative");
  require(partition.total() == op->range_size(), "partition does not match operator range");
  auto stacked = std::make_shared<AugmentedOperator>(op, reg);
  return {stacked, partition.with_appended(reg->range_size()), partition.count(), e_reg};
}

/// Dense matrix of `op`: column j is op applied to the j-th basis vector.
/// Built row by row through LinearOperator::row.
inline DenseMatrix materialize_dense(const LinearOperator& op, std::size_t cap = 100'000'000) {
  const std::size_t m = op.range_size(), n = op.domain_size();
  if (m == 0 || n == 0) return DenseMatrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (m > cap / n) {
    std::ostringstream msg;
    msg << "materializing a " << m << " x " << n << " matrix needs about "
        << static_cast<double>(m) * static_cast<double>(n) * 8.0 / 1e9
        << " GB, above the cap of " << cap << " entries; use a smaller geometry";
    throw InputError(msg.str());
  }
  DenseMatrix a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  parallel_for(m, [&](std::size_t r) {
    op.row(r, std::span<double>(a.data() + r * n, n));
  });
  return a;
}

/// Power-iteration estimate of the largest singular value.
inline double operator_norm(const LinearOperator& op, int iters = 100, std::uint64_t seed = 0) {
  require(iters >= 1, "operator_norm needs at least one iteration");
  std::mt19937_64 rng(derive_seed(seed, 0x6e6f726dULL));
  std::normal_distribution<double> normal;
  Vec x(op.domain_size());
  for (auto& v : x) v = normal(rng);
  double nx = norm(x);
  if (nx == 0.0) return 0.0;
  scale(1.0 / nx, x);
  Vec y(op.range_size()), z(op.domain_size());
  for (int k = 0; k < iters; ++k) {
    op.apply(x, y);
    op.adjoint(y, z);
    const double nz = norm(z);
    if (nz == 0.0) return 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = z[i] / nz;
  }
  op.apply(x, y);
  return norm(y);
}

}  // namespace resesop
