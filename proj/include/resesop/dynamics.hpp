#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <deque>
#include <numbers>
#include <random>
#include <variant>

#include "resesop/operators.hpp"

namespace resesop {

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw, so motion
/// samples do not depend on the standard library's distribution code.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Bilinear sample of a real scalar field at continuous pixel coordinates
/// (pixel centers at integers). Outside handling: clamp to the edge or zero.
inline double sample_bilinear(std::span<const double> f, std::size_t w, std::size_t h, double x, double y,
                              bool clamp) {
  if (!clamp && (x <= -1.0 || y <= -1.0 || x >= static_cast<double>(w) || y >= static_cast<double>(h))) return 0.0;
  if (clamp) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  }
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
  auto at = [&](long cx, long cy) -> double {
    if (cx < 0 || cy < 0 || cx >= static_cast<long>(w) || cy >= static_cast<long>(h)) return 0.0;
    return f[static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx)];
  };
  double v = 0.0;
  if ((1 - ax) * (1 - ay) != 0.0) v += (1 - ax) * (1 - ay) * at(ix, iy);
  if (ax * (1 - ay) != 0.0) v += ax * (1 - ay) * at(ix + 1, iy);
  if ((1 - ax) * ay != 0.0) v += (1 - ax) * ay * at(ix, iy + 1);
  if (ax * ay != 0.0) v += ax * ay * at(ix + 1, iy + 1);
  return v;
}

// ---------------------------------------------------------------------------
// Phantoms

using Mask = std::vector<std::uint8_t>;

struct PorousPhantom {
  ImageGrid image;
  Mask obstacle;  // 1 = solid
};

namespace detail {

/// Sum of randomly placed Gaussian bumps, radii in [r_lo, r_hi] pixels.
inline Vec blob_field(std::size_t w, std::size_t h, std::size_t count, double r_lo, double r_hi,
                      std::mt19937_64& rng) {
  Vec f(w * h, 0.0);
  for (std::size_t b = 0; b < count; ++b) {
    const double cx = uniform(rng, 0.0, static_cast<double>(w));
    const double cy = uniform(rng, 0.0, static_cast<double>(h));
    const double r = uniform(rng, r_lo, r_hi);
    const double amp = uniform(rng, 0.5, 1.0);
    const long reach = static_cast<long>(std::ceil(3.0 * r));
    for (long y = static_cast<long>(cy) - reach; y <= static_cast<long>(cy) + reach; ++y) {
      if (y < 0 || y >= static_cast<long>(h)) continue;
      for (long x = static_cast<long>(cx) - reach; x <= static_cast<long>(cx) + reach; ++x) {
        if (x < 0 || x >= static_cast<long>(w)) continue;
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        f[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] += amp * std::exp(-(dx * dx + dy * dy) / (2 * r * r));
      }
    }
  }
  return f;
}

/// 4-connected fluid path from the left column to the right column.
inline bool channel_connected(const Mask& obstacle, std::size_t w, std::size_t h) {
  std::vector<std::uint8_t> seen(w * h, 0);
  std::deque<std::size_t> queue;
  for (std::size_t y = 0; y < h; ++y)
    if (!obstacle[y * w]) {
      seen[y * w] = 1;
      queue.push_back(y * w);
    }
  while (!queue.empty()) {
    const std::size_t p = queue.front();
    queue.pop_front();
    const std::size_t x = p % w, y = p / w;
    if (x + 1 == w) return true;
    const std::size_t nb[4] = {x > 0 ? p - 1 : p, p + 1, y > 0 ? p - w : p, y + 1 < h ? p + w : p};
    for (std::size_t q : nb)
      if (!seen[q] && !obstacle[q]) {
        seen[q] = 1;
        queue.push_back(q);
      }
  }
  return false;
}

}  // namespace detail

/// Random porous medium: a smooth blob field thresholded so that a fraction
/// `porosity` of the pixels is fluid. Columns near the inflow and outflow edges
/// stay fluid. Solid pixels have value 1; the fluid carries a smooth tracer in
/// [0, 0.6]. Masks without a left-to-right channel are redrawn.
inline PorousPhantom generate_porous_phantom(std::size_t size, double porosity, std::uint64_t seed) {
  require(size >= 8, "porous phantom needs size >= 8");
  require(porosity > 0.0 && porosity <= 1.0, "porosity must lie in (0, 1]");
  const std::size_t n = size * size;
  const std::size_t margin = std::max<std::size_t>(2, size / 16);
  const std::size_t interior_cols = size - 2 * margin;
  const auto solid_target = static_cast<std::size_t>(std::llround((1.0 - porosity) * static_cast<double>(n)));
  if (solid_target > interior_cols * size)
    throw InputError("porosity " + std::to_string(porosity) + " leaves too little fluid for the inflow margins");

  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, 0x706f726fULL + attempt));
    const double r_mid = std::max(1.5, static_cast<double>(size) / 40.0);
    const std::size_t blobs = std::max<std::size_t>(8, n / static_cast<std::size_t>(std::max(16.0, 8 * r_mid * r_mid)));
    const Vec field = detail::blob_field(size, size, blobs, 0.6 * r_mid, 1.6 * r_mid, rng);
    Mask obstacle(n, 0);
    if (solid_target > 0) {
      std::vector<std::size_t> order;
      order.reserve(interior_cols * size);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = margin; x < size - margin; ++x) order.push_back(y * size + x);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
      for (std::size_t k = 0; k < solid_target; ++k) obstacle[order[k]] = 1;
    }
    if (!detail::channel_connected(obstacle, size, size)) continue;

    Vec tracer = detail::blob_field(size, size, std::max<std::size_t>(4, n / 400), size / 20.0 + 1.0,
                                    size / 8.0 + 1.0, rng);
    double hi = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      if (!obstacle[p]) hi = std::max(hi, tracer[p]);
    PorousPhantom out{ImageGrid(size, size), std::move(obstacle)};
    for (std::size_t p = 0; p < n; ++p)
      out.image.values[p] = out.obstacle[p] ? 1.0 : (hi > 0.0 ? 0.6 * tracer[p] / hi : 0.0);
    return out;
  }
  throw InputError("could not draw a porous mask with a connected channel at porosity " + std::to_string(porosity));
}

/// Modified Shepp-Logan head phantom on [-1, 1]^2, row 0 at the top.
inline ImageGrid shepp_logan(std::size_t width, std::size_t height) {
  struct Ellipse { double a, ax, ay, x0, y0, phi; };
  static constexpr Ellipse table[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  ImageGrid img(width, height);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const double x = (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(width) - 1.0;
      const double y = 1.0 - (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(height);
      double v = 0.0;
      for (const auto& e : table) {
        const double t = e.phi * std::numbers::pi / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double u = (dx * std::cos(t) + dy * std::sin(t)) / e.ax;
        const double q = (-dx * std::sin(t) + dy * std::cos(t)) / e.ay;
        if (u * u + q * q <= 1.0) v += e.a;
      }
      img.values[r * width + c] = v;
    }
  return img;
}

// ---------------------------------------------------------------------------
// Stationary flow

/// Incompressible flow on a staggered grid in pixel units. face_vx holds the
/// x-velocity on the (width+1) x height vertical faces, face_vy the
/// y-velocity on the width x (height+1) horizontal faces; vx/vy are the
/// cell-centered averages used for transport.
struct FlowField {
  std::size_t width = 0, height = 0;
  Vec face_vx, face_vy;
  Vec vx, vy;
  Mask obstacle;
  Vec psi;  // stream function on the (width+1) x (height+1) cell corners

  double fvx(std::size_t i, std::size_t j) const { return face_vx[j * (width + 1) + i]; }
  double fvy(std::size_t i, std::size_t j) const { return face_vy[j * width + i]; }

  /// Discrete divergence of cell (x, y).
  double divergence(std::size_t x, std::size_t y) const {
    return fvx(x + 1, y) - fvx(x, y) + fvy(x, y + 1) - fvy(x, y);
  }
  /// Largest |divergence| over fluid cells.
  double max_divergence() const {
    double worst = 0.0;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        if (!obstacle[y * width + x]) worst = std::max(worst, std::abs(divergence(x, y)));
    return worst;
  }
  /// Volume flux through the vertical line x = i (0 = inflow, width = outflow).
  double cut_flux(std::size_t i) const {
    double f = 0.0;
    for (std::size_t j = 0; j < height; ++j) f += fvx(i, j);
    return f;
  }
  double max_speed() const {
    double v = 0.0;
    for (std::size_t p = 0; p < vx.size(); ++p) v = std::max(v, std::hypot(vx[p], vy[p]));
    return v;
  }
};

struct FlowSolverOptions {
  double tolerance = 1e-13;
  std::size_t max_iterations = 0;  // 0 = 10 * unknowns
};

/// Solves Laplace's equation for the stream function with unit inflow and
/// outflow on the left/right edges and no-penetration walls at the top and
/// bottom. Every connected obstacle (8-neighbourhood) is a single unknown, so
/// its boundary is a streamline. Velocities are differences of psi along
/// faces, which makes the discrete divergence vanish identically.
inline FlowField solve_stationary_flow(const Mask& obstacle, std::size_t width, std::size_t height,
                                       const FlowSolverOptions& opt = {}) {
  require(width >= 2 && height >= 1, "flow grid too small");
  require(obstacle.size() == width * height, "obstacle mask does not match the grid");
  if (!detail::channel_connected(obstacle, width, height))
    throw InputError("obstacle mask leaves no connected fluid channel from inflow to outflow");

  // Label obstacle components.
  std::vector<long> comp(width * height, -1);
  long n_comp = 0;
  for (std::size_t p = 0; p < obstacle.size(); ++p) {
    if (!obstacle[p] || comp[p] >= 0) continue;
    std::deque<std::size_t> queue{p};
    comp[p] = n_comp;
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      const long qx = static_cast<long>(q % width), qy = static_cast<long>(q / width);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long nx = qx + dx, ny = qy + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(width) || ny >= static_cast<long>(height)) continue;
          const std::size_t r = static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx);
          if (obstacle[r] && comp[r] < 0) {
            comp[r] = n_comp;
            queue.push_back(r);
          }
        }
    }
    ++n_comp;
  }

  const std::size_t cw = width + 1, ch = height + 1;
  const double top = static_cast<double>(height);
  // Corner -> island id (or -1).
  std::vector<long> island(cw * ch, -1);
  for (std::size_t j = 0; j < ch; ++j)
    for (std::size_t i = 0; i < cw; ++i)
      for (std::size_t y = j > 0 ? j - 1 : 0; y <= std::min(j, height - 1); ++y)
        for (std::size_t x = i > 0 ? i - 1 : 0; x <= std::min(i, width - 1); ++x)
          if (comp[y * width + x] >= 0) island[j * cw + i] = comp[y * width + x];

  // Islands touching the walls take the wall value.
  std::vector<double> island_value(static_cast<std::size_t>(n_comp), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < ch; ++j)
    for (std::size_t i = 0; i < cw; ++i) {
      const long id = island[j * cw + i];
      if (id < 0) continue;
      if (i == 0 || i + 1 == cw) throw InputError("obstacles must not touch the inflow or outflow edge");
      if (j != 0 && j + 1 != ch) continue;
      const double wall = j == 0 ? 0.0 : top;
      double& v = island_value[static_cast<std::size_t>(id)];
      if (!std::isnan(v) && v != wall) throw InputError("an obstacle spans the channel from wall to wall");
      v = wall;
    }

  // Node numbering: known corners carry a value, the rest index unknowns.
  std::vector<long> node(cw * ch, -1);
  Vec known(cw * ch, 0.0);
  std::vector<long> island_node(static_cast<std::size_t>(n_comp), -1);
  long n_unknown = 0;
  for (std::size_t j = 0; j < ch; ++j)
    for (std::size_t i = 0; i < cw; ++i) {
      const std::size_t c = j * cw + i;
      const long id = island[c];
      if (id >= 0) {
        const double v = island_value[static_cast<std::size_t>(id)];
        if (!std::isnan(v)) {
          known[c] = v;
        } else {
          if (island_node[static_cast<std::size_t>(id)] < 0) island_node[static_cast<std::size_t>(id)] = n_unknown++;
          node[c] = island_node[static_cast<std::size_t>(id)];
        }
      } else if (i == 0 || i + 1 == cw) {
        known[c] = static_cast<double>(j);
      } else if (j == 0) {
        known[c] = 0.0;
      } else if (j + 1 == ch) {
        known[c] = top;
      } else {
        node[c] = n_unknown++;
      }
    }

  Vec psi = known;
  if (n_unknown > 0) {
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknown);
    auto couple = [&](std::size_t c1, std::size_t c2) {
      const long a = node[c1], b = node[c2];
      if (a >= 0 && a == b) return;
      if (a >= 0) {
        trip.emplace_back(a, a, 1.0);
        if (b >= 0) trip.emplace_back(a, b, -1.0);
        else rhs[a] += known[c2];
      }
      if (b >= 0) {
        trip.emplace_back(b, b, 1.0);
        if (a >= 0) trip.emplace_back(b, a, -1.0);
        else rhs[b] += known[c1];
      }
    };
    for (std::size_t j = 0; j < ch; ++j)
      for (std::size_t i = 0; i < cw; ++i) {
        if (i + 1 < cw) couple(j * cw + i, j * cw + i + 1);
        if (j + 1 < ch) couple(j * cw + i, (j + 1) * cw + i);
      }
    Eigen::SparseMatrix<double> lap(n_unknown, n_unknown);
    lap.setFromTriplets(trip.begin(), trip.end());
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opt.tolerance);
    cg.setMaxIterations(static_cast<Eigen::Index>(opt.max_iterations ? opt.max_iterations : 10 * static_cast<std::size_t>(n_unknown)));
    cg.compute(lap);
    // Start from the obstacle-free solution psi = y.
    Eigen::VectorXd guess(n_unknown);
    for (std::size_t c = 0; c < cw * ch; ++c)
      if (node[c] >= 0) guess[node[c]] = static_cast<double>(c / cw);
    const Eigen::VectorXd sol = cg.solveWithGuess(rhs, guess);
    if (cg.info() != Eigen::Success && cg.error() > 1e3 * opt.tolerance)
      throw NumericalError("stream function solve did not converge (relative residual " +
                           std::to_string(cg.error()) + ")");
    for (std::size_t c = 0; c < cw * ch; ++c)
      if (node[c] >= 0) psi[c] = sol[node[c]];
  }

  FlowField f;
  f.width = width;
  f.height = height;
  f.obstacle = obstacle;
  f.psi = psi;
  f.face_vx.assign(cw * height, 0.0);
  f.face_vy.assign(width * ch, 0.0);
  for (std::size_t j = 0; j < height; ++j)
    for (std::size_t i = 0; i < cw; ++i) f.face_vx[j * cw + i] = psi[(j + 1) * cw + i] - psi[j * cw + i];
  for (std::size_t j = 0; j < ch; ++j)
    for (std::size_t i = 0; i < width; ++i) f.face_vy[j * width + i] = -(psi[j * cw + i + 1] - psi[j * cw + i]);
  f.vx.assign(width * height, 0.0);
  f.vy.assign(width * height, 0.0);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      f.vx[y * width + x] = 0.5 * (f.fvx(x, y) + f.fvx(x + 1, y));
      f.vy[y * width + x] = 0.5 * (f.fvy(x, y) + f.fvy(x, y + 1));
    }
  return f;
}

/// Foot of the characteristic through (x, y): integrates dX/dtau = -v(X)
/// for duration t with classical Runge-Kutta, substeps of at most half a pixel.
inline std::pair<double, double> trace_back(const FlowField& flow, double x, double y, double t) {
  if (t == 0.0) return {x, y};
  const double vmax = flow.max_speed();
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * t * vmax)));
  const double dt = t / static_cast<double>(steps);
  auto vel = [&](double px, double py) {
    return std::pair{sample_bilinear(flow.vx, flow.width, flow.height, px, py, true),
                     sample_bilinear(flow.vy, flow.width, flow.height, px, py, true)};
  };
  for (std::size_t s = 0; s < steps; ++s) {
    const auto [k1x, k1y] = vel(x, y);
    const auto [k2x, k2y] = vel(x - 0.5 * dt * k1x, y - 0.5 * dt * k1y);
    const auto [k3x, k3y] = vel(x - 0.5 * dt * k2x, y - 0.5 * dt * k2y);
    const auto [k4x, k4y] = vel(x - dt * k3x, y - dt * k3y);
    x -= dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    y -= dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y);
  }
  return {x, y};
}

/// Semi-Lagrangian transport of pixel intensities for duration t. Samples
/// outside the grid clamp to the edge; obstacle pixels keep their values.
inline ImageGrid advect(const ImageGrid& image, const FlowField& flow, double t) {
  image.validate();
  require(t >= 0.0, "advection time must be >= 0");
  require(image.width == flow.width && image.height == flow.height, "flow grid does not match the image");
  if (t == 0.0) return image;
  ImageGrid out = image;
  const std::size_t w = image.width, h = image.height, sp = image.scalars_per_pixel();
  std::vector<Vec> planes(sp, Vec(w * h));
  for (std::size_t p = 0; p < w * h; ++p)
    for (std::size_t c = 0; c < sp; ++c) planes[c][p] = image.values[p * sp + c];
  parallel_for(h, [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      if (flow.obstacle[p]) continue;
      const auto [fx, fy] = trace_back(flow, static_cast<double>(x), static_cast<double>(y), t);
      for (std::size_t c = 0; c < sp; ++c) out.values[p * sp + c] = sample_bilinear(planes[c], w, h, fx, fy, true);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Rigid motion

/// Rotation by alpha degrees about the grid center, then translation by
/// (ux, uy) pixels. Bilinear resampling, zero outside the grid.
inline ImageGrid rigid_deform(const ImageGrid& image, double ux, double uy, double alpha) {
  image.validate();
  if (ux == 0.0 && uy == 0.0 && alpha == 0.0) return image;
  const std::size_t w = image.width, h = image.height, sp = image.scalars_per_pixel();
  const double cx = 0.5 * static_cast<double>(w - 1), cy = 0.5 * static_cast<double>(h - 1);
  const double a = alpha * std::numbers::pi / 180.0, ca = std::cos(a), sa = std::sin(a);
  std::vector<Vec> planes(sp, Vec(w * h));
  for (std::size_t p = 0; p < w * h; ++p)
    for (std::size_t c = 0; c < sp; ++c) planes[c][p] = image.values[p * sp + c];
  ImageGrid out = image;
  parallel_for(h, [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: undo the translation, then rotate by -alpha.
      const double dx = static_cast<double>(x) - ux - cx, dy = static_cast<double>(y) - uy - cy;
      const double sx = ca * dx + sa * dy + cx, sy = -sa * dx + ca * dy + cy;
      for (std::size_t c = 0; c < sp; ++c)
        out.values[(y * w + x) * sp + c] = sample_bilinear(planes[c], w, h, sx, sy, false);
    }
  });
  return out;
}

enum class MotionModel { uniform, non_uniform };

struct RigidMotion {
  Vec ux, uy, alpha;
  std::size_t reference_bin = 0;
  std::size_t bins() const { return ux.size(); }
};

struct MotionRanges {
  double uniform_shift = 4.0;      // u ~ U(-4, 4)
  double uniform_angle = 3.0;      // alpha ~ U(-3, 3)
  double scaled_shift = 8.0;       // u ~ k_p * U(-8, 8)
  double scaled_angle = 6.0;       // alpha ~ k_p * U(-6, 6)
};

inline constexpr std::size_t kDefaultReference = std::numeric_limits<std::size_t>::max();

/// Per-bin rigid parameters; each bin draws from its own stream of `seed`.
/// The non-uniform model scales bin i by k_p = 0.1 + |p_map[i]|.
inline RigidMotion sample_motion(MotionModel model, std::size_t n_bins, std::span<const double> p_map,
                                 std::uint64_t seed, std::size_t reference_bin = kDefaultReference,
                                 const MotionRanges& ranges = {}) {
  require(n_bins >= 1, "motion needs at least one bin");
  if (reference_bin == kDefaultReference) reference_bin = n_bins / 2;
  require(reference_bin < n_bins, "reference bin out of range");
  if (model == MotionModel::non_uniform) {
    require(p_map.size() == n_bins, "non-uniform motion needs one k-space position per bin");
    for (double p : p_map) require(p > -1.0 && p < 1.0, "k-space positions must lie in (-1, 1)");
  }
  RigidMotion m;
  m.reference_bin = reference_bin;
  m.ux.assign(n_bins, 0.0);
  m.uy.assign(n_bins, 0.0);
  m.alpha.assign(n_bins, 0.0);
  for (std::size_t i = 0; i < n_bins; ++i) {
    if (i == reference_bin) continue;
    std::mt19937_64 rng(derive_seed(seed, i));
    if (model == MotionModel::uniform) {
      m.ux[i] = uniform(rng, -ranges.uniform_shift, ranges.uniform_shift);
      m.uy[i] = uniform(rng, -ranges.uniform_shift, ranges.uniform_shift);
      m.alpha[i] = uniform(rng, -ranges.uniform_angle, ranges.uniform_angle);
    } else {
      const double k = 0.1 + std::abs(p_map[i]);
      m.ux[i] = k * uniform(rng, -ranges.scaled_shift, ranges.scaled_shift);
      m.uy[i] = k * uniform(rng, -ranges.scaled_shift, ranges.scaled_shift);
      m.alpha[i] = k * uniform(rng, -ranges.scaled_angle, ranges.scaled_angle);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dynamic data

struct FlowMotion {
  FlowField flow;
  double dt = 1.0;  // bin i is observed at time i * dt
};

struct DynamicScene {
  ImageGrid reference;
  std::variant<RigidMotion, FlowMotion> deformation;
  std::size_t bins = 1;

  void validate() const {
    reference.validate();
    require(bins >= 1, "scene needs at least one bin");
    if (const auto* r = std::get_if<RigidMotion>(&deformation)) {
      require(r->bins() == bins && r->uy.size() == bins && r->alpha.size() == bins,
              "motion parameters do not match the bin count");
    } else {
      const auto& f = std::get<FlowMotion>(deformation);
      require(f.flow.width == reference.width && f.flow.height == reference.height,
              "flow grid does not match the reference image");
      require(f.dt >= 0.0, "flow time step must be >= 0");
    }
  }

  /// The object as seen during bin i.
  ImageGrid state(std::size_t i) const {
    require(i < bins, "bin index out of range");
    if (const auto* r = std::get_if<RigidMotion>(&deformation))
      return rigid_deform(reference, r->ux[i], r->uy[i], r->alpha[i]);
    const auto& f = std::get<FlowMotion>(deformation);
    return advect(reference, f.flow, static_cast<double>(i) * f.dt);
  }
};

/// Gaussian noise rescaled to norm exactly delta (no noise for delta = 0).
inline Vec scaled_noise(std::size_t n, double delta, std::uint64_t seed) {
  require(delta >= 0.0, "noise level must be >= 0");
  Vec noise(n, 0.0);
  if (delta == 0.0 || n == 0) return noise;
  std::mt19937_64 rng(derive_seed(seed, 0x6e6f697365ULL));
  std::normal_distribution<double> normal;
  for (auto& v : noise) v = normal(rng);
  const double nn = norm(noise);
  if (nn == 0.0) throw NumericalError("noise draw degenerated to zero");
  scale(delta / nn, noise);
  return noise;
}

struct SimulatedData {
  MeasurementVector data;  // noisy
  Vec clean;
};

/// Block i of the data is the static operator's block i applied to the
/// bin-i state of the scene; noise of norm delta is added to the whole vector.
inline SimulatedData simulate_dynamic_data(const DynamicScene& scene, const OperatorHandle& static_op,
                                           const SubproblemPartition& partition, double delta, std::uint64_t seed) {
  scene.validate();
  require(partition.count() == scene.bins, "partition bins do not match scene bins");
  require(partition.total() == static_op->range_size(), "partition does not match operator range");
  require(static_op->domain_size() == scene.reference.values.size(), "operator domain does not match the scene");
  SimulatedData out;
  out.clean.assign(static_op->range_size(), 0.0);
  const auto ops = split(static_op, partition);
  for (std::size_t i = 0; i < scene.bins; ++i) {
    const ImageGrid state = scene.state(i);
    ops[i]->apply(state.values, partition.slice(std::span<double>(out.clean), i));
  }
  out.data.values = out.clean;
  out.data.partition = partition;
  const Vec noise = scaled_noise(out.clean.size(), delta, seed);
  axpy(1.0, noise, out.data.values);
  return out;
}

}  // namespace resesop
