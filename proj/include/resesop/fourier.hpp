#pragma once

#include <fftw3.h>

#include <array>
#include <complex>
#include <mutex>
#include <numbers>

#include "resesop/operators.hpp"

namespace resesop {

using cplx = std::complex<double>;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Unitary 2-D DFT of a row-major height x width complex array, frequency
/// origin at index (0, 0). Plans are created once and executed on private
/// buffers, so one instance may be shared across threads.
class UnitaryDft2 {
 public:
  UnitaryDft2(std::size_t width, std::size_t height) : w_(width), h_(height) {
    const std::size_t n = w_ * h_;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    {
      std::lock_guard lock(fftw_planner_mutex());
      fwd_ = fftw_plan_dft_2d(static_cast<int>(h_), static_cast<int>(w_), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_2d(static_cast<int>(h_), static_cast<int>(w_), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_free(in);
    fftw_free(out);
    if (!fwd_ || !bwd_) throw NumericalError("FFTW plan creation failed");
  }
  ~UnitaryDft2() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  UnitaryDft2(const UnitaryDft2&) = delete;
  UnitaryDft2& operator=(const UnitaryDft2&) = delete;

  void forward(std::vector<cplx>& data) const { run(fwd_, data); }
  void inverse(std::vector<cplx>& data) const { run(bwd_, data); }

 private:
  void run(fftw_plan plan, std::vector<cplx>& data) const {
    const std::size_t n = w_ * h_;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    std::copy(data.begin(), data.end(), reinterpret_cast<cplx*>(in));
    fftw_execute_dft(plan, in, out);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    const auto* res = reinterpret_cast<const cplx*>(out);
    for (std::size_t i = 0; i < n; ++i) data[i] = res[i] * s;
    fftw_free(in);
    fftw_free(out);
  }

  std::size_t w_, h_;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

inline cplx load(std::span<const double> v, std::size_t i) { return {v[2 * i], v[2 * i + 1]}; }
inline void store(std::span<double> v, std::size_t i, cplx z) {
  v[2 * i] = z.real();
  v[2 * i + 1] = z.imag();
}

}  // namespace detail

/// Index of the centered frequency (kx, ky) in the origin-at-(0,0) layout.
inline std::size_t frequency_index(long kx, long ky, std::size_t width, std::size_t height) {
  const long w = static_cast<long>(width), h = static_cast<long>(height);
  const long x = ((kx % w) + w) % w, y = ((ky % h) + h) % h;
  return static_cast<std::size_t>(y * w + x);
}

/// Swaps quadrants so the zero frequency moves to the grid center (and back
/// with inverse = true for odd sizes).
inline ImageGrid fftshift(const ImageGrid& img, bool inverse = false) {
  ImageGrid out = img;
  const std::size_t sx = inverse ? img.width - img.width / 2 : img.width / 2;
  const std::size_t sy = inverse ? img.height - img.height / 2 : img.height / 2;
  const std::size_t k = img.scalars_per_pixel();
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t dst = ((y + sy) % img.height) * img.width + (x + sx) % img.width;
      for (std::size_t c = 0; c < k; ++c) out.values[dst * k + c] = img.values[(y * img.width + x) * k + c];
    }
  return out;
}

/// Coil sensitivities S_c and per-bin sampled frequency indices M_t.
struct SenseSetup {
  std::vector<ImageGrid> coil_maps;
  std::vector<std::vector<std::size_t>> sampling_mask;

  std::size_t width() const { return coil_maps.at(0).width; }
  std::size_t height() const { return coil_maps.at(0).height; }
  std::size_t coils() const { return coil_maps.size(); }
  std::size_t bins() const { return sampling_mask.size(); }

  void validate() const {
    require(!coil_maps.empty(), "SENSE setup needs at least one coil map");
    for (const auto& c : coil_maps) {
      c.validate();
      require(c.is_complex(), "coil maps must be complex images");
      require(c.width == width() && c.height == height(), "coil maps must share the image grid shape");
    }
    require(!sampling_mask.empty(), "SENSE setup needs at least one time bin");
    const std::size_t n = width() * height();
    for (std::size_t t = 0; t < sampling_mask.size(); ++t) {
      if (sampling_mask[t].empty())
        throw InputError("sampling mask of bin " + std::to_string(t) + " is empty");
      for (auto k : sampling_mask[t])
        require(k < n, "sampling mask index outside the frequency grid");
    }
  }
};

/// Masked multi-coil Fourier operator M_t F S_c. Range layout: bin, coil,
/// then the bin's mask entries in order; each sample is one complex value.
class SenseOperator final : public LinearOperator {
 public:
  explicit SenseOperator(SenseSetup setup) : setup_(std::move(setup)) {
    setup_.validate();
    dft_ = std::make_shared<detail::UnitaryDft2>(setup_.width(), setup_.height());
    std::size_t off = 0;
    for (const auto& m : setup_.sampling_mask) {
      bin_offsets_.push_back(off);
      off += 2 * m.size() * setup_.coils();
    }
    range_ = off;
  }

  std::size_t domain_size() const override { return 2 * setup_.width() * setup_.height(); }
  std::size_t range_size() const override { return range_; }
  OperatorKind kind() const override { return OperatorKind::masked_fourier_sense; }
  const SenseSetup& setup() const { return setup_; }

  SubproblemPartition bin_partition() const {
    std::vector<std::size_t> lengths;
    for (const auto& m : setup_.sampling_mask) lengths.push_back(2 * m.size() * setup_.coils());
    return SubproblemPartition::from_lengths(lengths);
  }

  void apply(std::span<const double> x, std::span<double> y) const override {
    const std::size_t n = setup_.width() * setup_.height();
    std::vector<cplx> buf(n);
    for (std::size_t c = 0; c < setup_.coils(); ++c) {
      const auto& s = setup_.coil_maps[c].values;
      for (std::size_t p = 0; p < n; ++p) buf[p] = detail::load(s, p) * detail::load(x, p);
      dft_->forward(buf);
      for (std::size_t t = 0; t < setup_.bins(); ++t) {
        const auto& mask = setup_.sampling_mask[t];
        const std::size_t base = bin_offsets_[t] / 2 + c * mask.size();
        for (std::size_t j = 0; j < mask.size(); ++j) detail::store(y, base + j, buf[mask[j]]);
      }
    }
  }

  void adjoint(std::span<const double> y, std::span<double> x) const override {
    const std::size_t n = setup_.width() * setup_.height();
    std::fill(x.begin(), x.end(), 0.0);
    std::vector<cplx> buf(n);
    for (std::size_t c = 0; c < setup_.coils(); ++c) {
      std::fill(buf.begin(), buf.end(), cplx{});
      for (std::size_t t = 0; t < setup_.bins(); ++t) {
        const auto& mask = setup_.sampling_mask[t];
        const std::size_t base = bin_offsets_[t] / 2 + c * mask.size();
        for (std::size_t j = 0; j < mask.size(); ++j) buf[mask[j]] += detail::load(y, base + j);
      }
      dft_->inverse(buf);
      const auto& s = setup_.coil_maps[c].values;
      for (std::size_t p = 0; p < n; ++p)
        detail::store(x, p, detail::load(x, p) + std::conj(detail::load(s, p)) * buf[p]);
    }
  }

 private:
  SenseSetup setup_;
  std::shared_ptr<detail::UnitaryDft2> dft_;
  std::vector<std::size_t> bin_offsets_;
  std::size_t range_ = 0;
};

/// Samples of bin `bin` for every coil.
inline MeasurementVector sense_apply(const ImageGrid& image, const SenseSetup& setup, std::size_t bin) {
  setup.validate();
  require(bin < setup.bins(), "bin index outside the sampling mask");
  require(image.width == setup.width() && image.height == setup.height(),
          "image shape does not match coil maps");
  SenseSetup single{setup.coil_maps, {setup.sampling_mask[bin]}};
  SenseOperator op(std::move(single));
  const ImageGrid c = image.as_complex();
  return {op.apply_to(c.values), SubproblemPartition::single(op.range_size())};
}

// ---------------------------------------------------------------------------

struct FrequencyPoint {
  double kx = 0.0;
  double ky = 0.0;
};

/// Direct-sum nonuniform DFT with the unitary scaling of UnitaryDft2:
/// F(k) = (W H)^(-1/2) sum_{x,y} f(x,y) exp(-2 pi i (kx x / W + ky y / H)).
/// Frequencies are in grid-index units. Range layout: bin, coil, sample.
class NudftOperator final : public LinearOperator {
 public:
  static constexpr std::size_t default_cap = 96 * 96;

  NudftOperator(std::size_t width, std::size_t height, std::vector<std::vector<FrequencyPoint>> bins,
                std::vector<ImageGrid> coil_maps = {}, std::size_t pixel_cap = default_cap)
      : w_(width), h_(height), bins_(std::move(bins)), coils_(std::move(coil_maps)) {
    if (w_ * h_ > pixel_cap)
      throw InputError("direct nonuniform DFT is limited to " + std::to_string(pixel_cap) +
                       " pixels (got " + std::to_string(w_ * h_) +
                       "); downsample the image or use a cartesian SENSE setup");
    require(!bins_.empty(), "nonuniform DFT needs at least one bin of samples");
    for (const auto& c : coils_) {
      require(c.is_complex() && c.width == w_ && c.height == h_, "coil maps must match the image grid");
    }
    for (const auto& b : bins_) {
      require(!b.empty(), "nonuniform DFT bin without samples");
      for (std::size_t c = 0; c < n_coils(); ++c)
        for (const auto& p : b) rows_.push_back({p, c});
      bin_lengths_.push_back(2 * b.size() * n_coils());
    }
  }

  std::size_t domain_size() const override { return 2 * w_ * h_; }
  std::size_t range_size() const override { return 2 * rows_.size(); }
  OperatorKind kind() const override { return OperatorKind::nonuniform_dft; }
  std::size_t n_coils() const { return coils_.empty() ? 1 : coils_.size(); }
  SubproblemPartition bin_partition() const { return SubproblemPartition::from_lengths(bin_lengths_); }

  void apply(std::span<const double> x, std::span<double> y) const override { apply_rows(x, 0, y); }
  void adjoint(std::span<const double> y, std::span<double> x) const override { adjoint_rows(y, 0, x); }

  void apply_rows(std::span<const double> x, std::size_t begin, std::span<double> out) const override {
    require(begin % 2 == 0 && out.size() % 2 == 0, "nonuniform DFT rows are complex pairs");
    const std::size_t first = begin / 2, count = out.size() / 2;
    parallel_for(count, [&](std::size_t j) {
      const auto& [pt, coil] = rows_[first + j];
      const auto ex = phases(pt.kx, w_), ey = phases(pt.ky, h_);
      cplx acc{};
      for (std::size_t yy = 0; yy < h_; ++yy) {
        cplx line{};
        for (std::size_t xx = 0; xx < w_; ++xx) {
          const std::size_t p = yy * w_ + xx;
          line += ex[xx] * weighted(x, p, coil);
        }
        acc += ey[yy] * line;
      }
      detail::store(out, j, acc * norm_);
    });
  }

  /// A single real row goes through its enclosing complex pair.
  void row(std::size_t r, std::span<double> out) const override {
    double pair[2] = {0.0, 0.0};
    pair[r % 2] = 1.0;
    adjoint_rows(pair, r - r % 2, out);
  }

  void adjoint_rows(std::span<const double> y, std::size_t begin, std::span<double> x) const override {
    require(begin % 2 == 0 && y.size() % 2 == 0, "nonuniform DFT rows are complex pairs");
    std::fill(x.begin(), x.end(), 0.0);
    const std::size_t first = begin / 2, count = y.size() / 2;
    std::vector<cplx> acc(n_coils() * w_ * h_);
    for (std::size_t j = 0; j < count; ++j) {
      const cplx v = detail::load(y, j) * norm_;
      if (v == cplx{}) continue;
      const auto& [pt, coil] = rows_[first + j];
      const auto ex = phases(pt.kx, w_), ey = phases(pt.ky, h_);
      cplx* a = acc.data() + coil * w_ * h_;
      for (std::size_t yy = 0; yy < h_; ++yy) {
        const cplx vy = v * std::conj(ey[yy]);
        for (std::size_t xx = 0; xx < w_; ++xx) a[yy * w_ + xx] += vy * std::conj(ex[xx]);
      }
    }
    for (std::size_t c = 0; c < n_coils(); ++c)
      for (std::size_t p = 0; p < w_ * h_; ++p) {
        cplx v = acc[c * w_ * h_ + p];
        if (!coils_.empty()) v *= std::conj(detail::load(coils_[c].values, p));
        detail::store(x, p, detail::load(x, p) + v);
      }
  }

 private:
  struct Row {
    FrequencyPoint point;
    std::size_t coil;
  };

  cplx weighted(std::span<const double> x, std::size_t p, std::size_t coil) const {
    const cplx v = detail::load(x, p);
    return coils_.empty() ? v : v * detail::load(coils_[coil].values, p);
  }

  static std::vector<cplx> phases(double k, std::size_t n) {
    std::vector<cplx> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * k * static_cast<double>(i) / static_cast<double>(n);
      e[i] = {std::cos(ang), std::sin(ang)};
    }
    return e;
  }

  std::size_t w_, h_;
  std::vector<std::vector<FrequencyPoint>> bins_;
  std::vector<ImageGrid> coils_;
  std::vector<Row> rows_;
  std::vector<std::size_t> bin_lengths_;
  double norm_ = 1.0 / std::sqrt(static_cast<double>(w_ * h_));
};

/// Single-coil nonuniform DFT samples of `image`.
inline MeasurementVector nudft_apply(const ImageGrid& image, const std::vector<FrequencyPoint>& points,
                                     std::size_t pixel_cap = NudftOperator::default_cap) {
  image.validate();
  NudftOperator op(image.width, image.height, {points}, {}, pixel_cap);
  const ImageGrid c = image.as_complex();
  return {op.apply_to(c.values), SubproblemPartition::single(op.range_size())};
}

// ---------------------------------------------------------------------------
// Synthetic acquisition setups.

/// Smooth Gaussian-profile coils on a ring around the field of view with a
/// linear phase each, normalized so that sum_c |S_c|^2 == 1 at every pixel.
inline std::vector<ImageGrid> synthetic_coil_maps(std::size_t width, std::size_t height, std::size_t coils) {
  require(coils >= 1, "need at least one coil");
  std::vector<ImageGrid> maps(coils, ImageGrid(width, height, ValueKind::complex));
  if (coils == 1) {
    for (std::size_t p = 0; p < width * height; ++p) maps[0].values[2 * p] = 1.0;
    return maps;
  }
  Vec total(width * height, 0.0);
  for (std::size_t c = 0; c < coils; ++c) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(coils);
    const double cx = 1.2 * std::cos(phi), cy = 1.2 * std::sin(phi);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double rx = 2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(width) - 1.0;
        const double ry = 2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(height) - 1.0;
        const double mag = std::exp(-((rx - cx) * (rx - cx) + (ry - cy) * (ry - cy)) / 1.5);
        const double ph = 0.5 * (rx * std::cos(phi + 1.0) + ry * std::sin(phi + 1.0));
        const std::size_t p = y * width + x;
        detail::store(maps[c].values, p, std::polar(mag, ph));
        total[p] += mag * mag;
      }
  }
  for (auto& m : maps)
    for (std::size_t p = 0; p < width * height; ++p)
      detail::store(m.values, p, detail::load(m.values, p) / std::sqrt(total[p]));
  return maps;
}

/// Cartesian phase-encode lines (ky) kept by regular subsampling with a fully
/// sampled center, ordered from -H/2 upward and dealt into `bins` consecutive
/// groups. Returns the masks and each bin's mean k-space position p in (-1, 1).
struct CartesianSampling {
  std::vector<std::vector<std::size_t>> masks;
  std::vector<double> positions;
};

inline CartesianSampling cartesian_sampling(std::size_t width, std::size_t height, std::size_t acceleration,
                                            std::size_t center_lines, std::size_t bins) {
  require(acceleration >= 1, "acceleration must be >= 1");
  std::vector<long> lines;
  const long h = static_cast<long>(height);
  const long half_center = static_cast<long>(center_lines) / 2;
  for (long ky = -h / 2; ky < h - h / 2; ++ky) {
    const bool center = ky >= -half_center && ky < static_cast<long>(center_lines) - half_center;
    if (center || ((ky + h) % static_cast<long>(acceleration)) == 0) lines.push_back(ky);
  }
  require(bins >= 1 && bins <= lines.size(), "more bins than sampled lines");
  CartesianSampling out;
  out.masks.resize(bins);
  out.positions.assign(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::size_t b = l * bins / lines.size();
    for (long kx = 0; kx < static_cast<long>(width); ++kx)
      out.masks[b].push_back(frequency_index(kx, lines[l], width, height));
    out.positions[b] += static_cast<double>(lines[l]) / (0.5 * static_cast<double>(height));
    ++counts[b];
  }
  for (std::size_t b = 0; b < bins; ++b) out.positions[b] /= static_cast<double>(counts[b]);
  return out;
}

/// Golden-angle radial spokes, `spokes_per_bin` consecutive spokes per bin,
/// `samples` points per spoke spanning [-W/2, W/2).
inline std::vector<std::vector<FrequencyPoint>> radial_trajectory(std::size_t width, std::size_t bins,
                                                                  std::size_t spokes_per_bin, std::size_t samples) {
  const double golden = std::numbers::pi * (std::sqrt(5.0) - 1.0) / 2.0;  // 111.25 degrees
  std::vector<std::vector<FrequencyPoint>> out(bins);
  std::size_t spoke = 0;
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t s = 0; s < spokes_per_bin; ++s, ++spoke) {
      const double phi = std::fmod(static_cast<double>(spoke) * golden, std::numbers::pi);
      for (std::size_t k = 0; k < samples; ++k) {
        const double r = (static_cast<double>(k) / static_cast<double>(samples) - 0.5) * static_cast<double>(width);
        out[b].push_back({r * std::cos(phi), r * std::sin(phi)});
      }
    }
  return out;
}

}  // namespace resesop
