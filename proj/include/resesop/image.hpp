#pragma once

#include <complex>

#include "resesop/core.hpp"

namespace resesop {

enum class ValueKind : std::uint8_t { real = 0, complex = 1 };

/// Row-major image on a square-pixel grid centered at the origin. Complex
/// images store interleaved (re, im) pairs, so values.size() == 2*width*height.
struct ImageGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  Vec values;
  double field_of_view = 2.0;  // physical extent of the width axis
  ValueKind kind = ValueKind::real;

  ImageGrid() = default;
  ImageGrid(std::size_t w, std::size_t h, ValueKind k = ValueKind::real, double fov = 2.0)
      : width(w), height(h), values(w * h * (k == ValueKind::complex ? 2 : 1), 0.0),
        field_of_view(fov), kind(k) {
    require(w >= 1 && h >= 1, "image grid needs width >= 1 and height >= 1");
  }

  std::size_t pixels() const { return width * height; }
  std::size_t scalars_per_pixel() const { return kind == ValueKind::complex ? 2 : 1; }
  double pixel_size() const { return field_of_view / static_cast<double>(width); }
  bool is_complex() const { return kind == ValueKind::complex; }

  void validate() const {
    require(width >= 1 && height >= 1, "image grid needs width >= 1 and height >= 1");
    require(values.size() == pixels() * scalars_per_pixel(),
            "image value count does not match width*height");
  }

  double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

  std::complex<double> cvalue(std::size_t p) const {
    return is_complex() ? std::complex<double>(values[2 * p], values[2 * p + 1])
                        : std::complex<double>(values[p], 0.0);
  }

  /// Per-pixel magnitude (identity for real images up to sign).
  Vec magnitude() const {
    Vec m(pixels());
    for (std::size_t p = 0; p < pixels(); ++p) m[p] = std::abs(cvalue(p));
    return m;
  }

  ImageGrid as_complex() const {
    if (is_complex()) return *this;
    ImageGrid c(width, height, ValueKind::complex, field_of_view);
    for (std::size_t p = 0; p < pixels(); ++p) c.values[2 * p] = values[p];
    return c;
  }
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b) {
  if (a.width != b.width || a.height != b.height)
    throw InputError("image shapes differ: " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height));
}

}  // namespace resesop
