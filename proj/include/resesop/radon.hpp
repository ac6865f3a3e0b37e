#pragma once

#include <numbers>

#include "resesop/operators.hpp"

namespace resesop {

/// Parallel-beam acquisition geometry. Angles are k * angle_max / n_angles for
/// k = 0..n_angles-1; detector cells are centered and symmetric about the
/// rotation axis, so the ray (theta + pi, -t) coincides with (theta, t).
struct RadonGeometry {
  std::size_t n_angles = 1;
  std::size_t n_detectors = 2;
  double angle_max = std::numbers::pi;
  double detector_extent = 0.0;  // physical span; <= 0 selects the grid diagonal
  double ray_step = 0.5;         // integration step as a fraction of the pixel size

  void validate() const {
    require(n_angles >= 1, "radon geometry needs n_angles >= 1");
    require(n_detectors >= 2, "radon geometry needs n_detectors >= 2");
    require(angle_max > 0.0 && angle_max <= 2.0 * std::numbers::pi + 1e-12,
            "radon geometry needs 0 < angle_max <= 2*pi");
    require(ray_step > 0.0, "radon ray_step must be positive");
  }

  double angle(std::size_t k) const {
    return angle_max * static_cast<double>(k) / static_cast<double>(n_angles);
  }
};

/// Ray-marching line integrals with bilinear interpolation of pixel values
/// (zero outside the grid). Row index = angle * n_detectors + detector.
class RadonOperator final : public LinearOperator {
 public:
  RadonOperator(std::size_t width, std::size_t height, double field_of_view, RadonGeometry geom)
      : w_(width), h_(height), geom_(geom) {
    geom_.validate();
    require(width >= 1 && height >= 1, "radon needs a non-empty image grid");
    require(field_of_view > 0.0, "field of view must be positive");
    pixel_ = field_of_view / static_cast<double>(width);
    const double diag = pixel_ * std::hypot(static_cast<double>(w_), static_cast<double>(h_));
    extent_ = geom_.detector_extent > 0.0 ? geom_.detector_extent : diag;
    det_spacing_ = extent_ / static_cast<double>(geom_.n_detectors);
    step_ = geom_.ray_step * pixel_;
    const double length = diag + 2.0 * pixel_;
    n_samples_ = static_cast<std::size_t>(std::ceil(length / step_)) + 1;
    cos_.resize(geom_.n_angles);
    sin_.resize(geom_.n_angles);
    for (std::size_t a = 0; a < geom_.n_angles; ++a) {
      cos_[a] = std::cos(geom_.angle(a));
      sin_[a] = std::sin(geom_.angle(a));
    }
  }

  std::size_t domain_size() const override { return w_ * h_; }
  std::size_t range_size() const override { return geom_.n_angles * geom_.n_detectors; }
  OperatorKind kind() const override { return OperatorKind::radon; }

  const RadonGeometry& geometry() const { return geom_; }
  std::size_t width() const { return w_; }
  std::size_t height() const { return h_; }
  double pixel_size() const { return pixel_; }
  double detector_spacing() const { return det_spacing_; }
  double detector_offset(std::size_t d) const {
    return (static_cast<double>(d) + 0.5 - 0.5 * static_cast<double>(geom_.n_detectors)) * det_spacing_;
  }

  void apply(std::span<const double> x, std::span<double> y) const override {
    apply_rows(x, 0, y);
  }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    adjoint_rows(y, 0, x);
  }

  void apply_rows(std::span<const double> x, std::size_t begin, std::span<double> out) const override {
    parallel_for(out.size(), [&](std::size_t k) {
      double acc = 0.0;
      for_each_weight(begin + k, [&](std::size_t p, double wgt) { acc += wgt * x[p]; });
      out[k] = acc;
    });
  }

  void adjoint_rows(std::span<const double> y, std::size_t begin, std::span<double> x) const override {
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double v = y[k];
      if (v == 0.0) continue;
      for_each_weight(begin + k, [&](std::size_t p, double wgt) { x[p] += wgt * v; });
    }
  }

  void row(std::size_t r, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    for_each_weight(r, [&](std::size_t p, double wgt) { out[p] += wgt; });
  }

  /// Calls fn(pixel, weight) for every bilinear tap of every sample on ray r.
  template <typename Fn>
  void for_each_weight(std::size_t r, Fn&& fn) const {
    const std::size_t a = r / geom_.n_detectors;
    const std::size_t d = r % geom_.n_detectors;
    const double c = cos_[a], s = sin_[a];
    const double t = detector_offset(d);
    // Ray point: t*(c, s) + u*(-s, c), expressed in continuous pixel indices.
    const double half_w = 0.5 * static_cast<double>(w_), half_h = 0.5 * static_cast<double>(h_);
    const double x0 = t * c / pixel_ + half_w - 0.5;
    const double y0 = t * s / pixel_ + half_h - 0.5;
    const double dx = -s * step_ / pixel_;
    const double dy = c * step_ / pixel_;
    const double mid = 0.5 * static_cast<double>(n_samples_ - 1);
    for (std::size_t k = 0; k < n_samples_; ++k) {
      const double u = static_cast<double>(k) - mid;
      const double fx = x0 + u * dx;
      const double fy = y0 + u * dy;
      if (fx <= -1.0 || fy <= -1.0 || fx >= static_cast<double>(w_) || fy >= static_cast<double>(h_))
        continue;
      const double flx = std::floor(fx), fly = std::floor(fy);
      const double ax = fx - flx, ay = fy - fly;
      const long ix = static_cast<long>(flx), iy = static_cast<long>(fly);
      const double taps[4] = {(1 - ax) * (1 - ay) * step_, ax * (1 - ay) * step_,
                              (1 - ax) * ay * step_, ax * ay * step_};
      const long txs[4] = {ix, ix + 1, ix, ix + 1};
      const long tys[4] = {iy, iy, iy + 1, iy + 1};
      for (int q = 0; q < 4; ++q) {
        if (txs[q] < 0 || tys[q] < 0 || txs[q] >= static_cast<long>(w_) || tys[q] >= static_cast<long>(h_))
          continue;
        if (taps[q] == 0.0) continue;
        fn(static_cast<std::size_t>(tys[q]) * w_ + static_cast<std::size_t>(txs[q]), taps[q]);
      }
    }
  }

 private:
  std::size_t w_, h_;
  RadonGeometry geom_;
  double pixel_ = 1.0, extent_ = 0.0, det_spacing_ = 1.0, step_ = 0.5;
  std::size_t n_samples_ = 0;
  Vec cos_, sin_;
};

inline std::shared_ptr<RadonOperator> make_radon(std::size_t width, std::size_t height,
                                                 double field_of_view, const RadonGeometry& geom) {
  return std::make_shared<RadonOperator>(width, height, field_of_view, geom);
}

/// Sinogram of a real image (single-block partition).
inline MeasurementVector radon_apply(const ImageGrid& image, const RadonGeometry& geom) {
  image.validate();
  require(!image.is_complex(), "radon_apply expects a real image");
  if (!all_finite(image.values)) throw InputError("radon_apply: image contains non-finite values");
  RadonOperator op(image.width, image.height, image.field_of_view, geom);
  MeasurementVector out{op.apply_to(image.values), SubproblemPartition::single(op.range_size())};
  return out;
}

/// Exact transpose of radon_apply on a width x height grid.
inline ImageGrid radon_adjoint(std::span<const double> sino, const RadonGeometry& geom,
                               std::size_t width, std::size_t height, double field_of_view = 2.0) {
  RadonOperator op(width, height, field_of_view, geom);
  if (sino.size() != op.range_size())
    throw InputError("radon_adjoint: sinogram has " + std::to_string(sino.size()) +
                     " entries, geometry expects " + std::to_string(op.range_size()));
  ImageGrid img(width, height, ValueKind::real, field_of_view);
  op.adjoint(sino, img.values);
  return img;
}

}  // namespace resesop
