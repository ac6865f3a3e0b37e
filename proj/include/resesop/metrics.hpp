#pragma once

#include <limits>

#include "resesop/image.hpp"

namespace resesop {

struct SsimOptions {
  std::size_t window = 11;  // odd side length of the Gaussian window
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 0.0;  // <= 0: max - min of the reference
};

struct MetricsRecord {
  double ssim = 0.0;
  double psnr = 0.0;  // +inf when the images are identical
  double mse = 0.0;
  double data_range = 0.0;
  SsimOptions window;
};

namespace detail {

/// Real values, or magnitudes of complex ones.
inline Vec metric_values(const ImageGrid& g) {
  g.validate();
  return g.is_complex() ? g.magnitude() : g.values;
}

/// Dynamic range of the reference; a constant reference falls back to 1.
inline double reference_range(std::span<const double> ref) {
  const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
  const double r = *hi - *lo;
  return r > 0.0 ? r : 1.0;
}

}  // namespace detail

inline double mse(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b);
  const Vec va = detail::metric_values(a), vb = detail::metric_values(b);
  double s = 0.0;
  for (std::size_t p = 0; p < va.size(); ++p) s += (va[p] - vb[p]) * (va[p] - vb[p]);
  return s / static_cast<double>(va.size());
}

inline double psnr_from_mse(double mse_value, double data_range) {
  require(data_range > 0.0, "PSNR needs a positive data range");
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse_value);
}

/// `reference` is the first argument; its range is used when data_range <= 0.
inline double psnr(const ImageGrid& reference, const ImageGrid& test, double data_range = 0.0) {
  const double m = mse(reference, test);
  if (data_range <= 0.0) data_range = detail::reference_range(detail::metric_values(reference));
  return psnr_from_mse(m, data_range);
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline Vec gaussian_taps(std::size_t size, double sigma) {
  require(size % 2 == 1, "SSIM window size must be odd");
  require(sigma > 0.0, "SSIM window sigma must be positive");
  Vec g(size);
  const double c = 0.5 * static_cast<double>(size - 1);
  double s = 0.0;
  for (std::size_t k = 0; k < size; ++k) {
    const double d = static_cast<double>(k) - c;
    g[k] = std::exp(-d * d / (2.0 * sigma * sigma));
    s += g[k];
  }
  for (auto& v : g) v /= s;
  return g;
}

/// Mean local SSIM over every window position that fits inside the image.
inline double ssim(const ImageGrid& a, const ImageGrid& b, const SsimOptions& opt = {}) {
  require_same_shape(a, b);
  const std::size_t w = a.width, h = a.height, win = opt.window;
  if (win > w || win > h)
    throw InputError("SSIM window " + std::to_string(win) + " does not fit a " + std::to_string(w) + "x" +
                     std::to_string(h) + " image");
  const Vec va = detail::metric_values(a), vb = detail::metric_values(b);
  const double range = opt.data_range > 0.0 ? opt.data_range : detail::reference_range(va);
  const double c1 = (opt.k1 * range) * (opt.k1 * range);
  const double c2 = (opt.k2 * range) * (opt.k2 * range);
  const Vec g = gaussian_taps(win, opt.sigma);

  const std::size_t nx = w - win + 1, ny = h - win + 1;
  Vec local(nx * ny);
  for (std::size_t y0 = 0; y0 < ny; ++y0)
    for (std::size_t x0 = 0; x0 < nx; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t dy = 0; dy < win; ++dy)
        for (std::size_t dx = 0; dx < win; ++dx) {
          const double wt = g[dy] * g[dx];
          const std::size_t p = (y0 + dy) * w + x0 + dx;
          ma += wt * va[p];
          mb += wt * vb[p];
          saa += wt * va[p] * va[p];
          sbb += wt * vb[p] * vb[p];
          sab += wt * va[p] * vb[p];
        }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      local[y0 * nx + x0] = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                            ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
  double s = 0.0;
  for (double v : local) s += v;
  return s / static_cast<double>(local.size());
}

inline MetricsRecord evaluate_metrics(const ImageGrid& reference, const ImageGrid& test, SsimOptions opt = {}) {
  MetricsRecord r;
  if (opt.data_range <= 0.0) opt.data_range = detail::reference_range(detail::metric_values(reference));
  r.data_range = opt.data_range;
  r.window = opt;
  r.mse = mse(reference, test);
  r.psnr = psnr_from_mse(r.mse, r.data_range);
  r.ssim = ssim(reference, test, opt);
  return r;
}

}  // namespace resesop
