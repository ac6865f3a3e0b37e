#pragma once

#include <optional>

#include "resesop/operators.hpp"

namespace resesop {

/// H(u, alpha, xi) = { f : |<u, f> - alpha| <= xi }, bounded by the
/// hyperplanes H(u, alpha - xi) and H(u, alpha + xi).
struct Stripe {
  Vec direction;
  double offset = 0.0;
  double half_width = 0.0;

  bool contains(std::span<const double> x, double slack = 0.0) const {
    return std::abs(dot(direction, x) - offset) <= half_width + slack;
  }
};

/// Orthogonal projection onto H(u, alpha).
inline Vec project_hyperplane(std::span<const double> x, std::span<const double> u, double alpha) {
  require(x.size() == u.size(), "hyperplane direction and point differ in size");
  const double uu = norm2(u);
  if (uu == 0.0) throw InputError("hyperplane direction must be nonzero");
  Vec out(x.begin(), x.end());
  axpy(-(dot(u, x) - alpha) / uu, u, out);
  return out;
}

/// Metric projection onto a stripe: identity inside, otherwise projection onto
/// the nearer bounding hyperplane.
inline Vec project_stripe(std::span<const double> x, const Stripe& s) {
  require(s.half_width >= 0.0, "stripe half-width must be non-negative");
  const double uu = norm2(s.direction);
  if (uu == 0.0) throw InputError("stripe direction must be nonzero");
  const double gap = dot(s.direction, x) - s.offset;
  if (std::abs(gap) <= s.half_width) return Vec(x.begin(), x.end());
  const double target = gap > 0.0 ? s.offset + s.half_width : s.offset - s.half_width;
  return project_hyperplane(x, s.direction, target);
}

/// Stripe(u = A_i^* w, alpha = <w, y_i>, xi = width * ||w||) containing every
/// s with ||A_i s - y_i|| <= width. Returns nullopt when w == 0, meaning the
/// subproblem is already consistent.
inline std::optional<Stripe> stripe_from_subproblem(std::span<const double> w, const LinearOperator& op_i,
                                                    std::span<const double> y_i, double width) {
  require(w.size() == op_i.range_size() && y_i.size() == op_i.range_size(),
          "residual/data block size does not match the suboperator");
  require(width >= 0.0, "stripe width must be non-negative");
  const double nw = norm(w);
  if (nw == 0.0) return std::nullopt;
  return Stripe{op_i.adjoint_to(w), dot(w, y_i), width * nw};
}

}  // namespace resesop
