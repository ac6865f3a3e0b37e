#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace resesop;
using testutil::randn;

namespace {

constexpr double kPi = std::numbers::pi;

TEST(Partition, RejectsOverlapGapAndShortCover) {
  using B = SubproblemPartition::Block;
  EXPECT_THROW(SubproblemPartition({{0, 4}, {3, 3}}, 6), InputError);
  EXPECT_THROW(SubproblemPartition({{0, 2}, {3, 3}}, 6), InputError);
  EXPECT_THROW(SubproblemPartition({B{0, 2}, B{2, 2}}, 6), InputError);
  EXPECT_THROW(SubproblemPartition({B{0, 0}, B{0, 6}}, 6), InputError);
  const auto p = SubproblemPartition::even(10, 3, 4);
  EXPECT_EQ(p.count(), 4u);
  EXPECT_EQ(p.total(), 30u);
  std::size_t covered = 0;
  for (const auto& b : p.blocks()) covered += b.length;
  EXPECT_EQ(covered, 30u);
}

TEST(Split, SingleBlockViewMatchesParent) {
  std::mt19937_64 rng(1);
  auto op = make_dense(randn(7, 5, rng));
  const auto subs = split(op, SubproblemPartition::single(7));
  ASSERT_EQ(subs.size(), 1u);
  const Vec x = randn(5, rng), y = randn(7, rng);
  EXPECT_EQ(subs[0]->apply_to(x), op->apply_to(x));
  EXPECT_EQ(subs[0]->adjoint_to(y), op->adjoint_to(y));
}

TEST(Split, BlocksReassembleTheFullApply) {
  std::mt19937_64 rng(2);
  auto op = make_dense(randn(9, 4, rng));
  const auto part = SubproblemPartition::from_lengths({2, 4, 3});
  const auto subs = split(op, part);
  const Vec x = randn(4, rng);
  const Vec full = op->apply_to(x);
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const Vec yi = subs[i]->apply_to(x);
    const auto ref = part.slice(std::span<const double>(full), i);
    EXPECT_LT(testutil::max_abs_diff(yi, ref), 1e-14);
  }
  EXPECT_THROW(split(op, SubproblemPartition::from_lengths({2, 4})), InputError);
}

TEST(Augment, ZeroRegularizerBlockStaysZero) {
  std::mt19937_64 rng(3);
  auto op = make_dense(randn(6, 4, rng));
  auto zero = make_dense(DenseMatrix::Zero(3, 4));
  const auto sys = augment_with_regularizer(op, SubproblemPartition::from_lengths({3, 3}), zero, 0.0);
  EXPECT_EQ(sys.partition.count(), 3u);
  const Vec y = randn(6, rng);
  const MeasurementVector data{sys.augment_data(y), sys.partition};
  const auto subs = split(sys.op, sys.partition);
  for (int t = 0; t < 5; ++t) {
    const Vec s = randn(4, rng);
    const Vec w = block_residual(*subs[2], s, data.block(2));
    EXPECT_EQ(norm(w), 0.0);
  }
}

TEST(Augment, GradientRegularizerLevelIsRecovered) {
  std::mt19937_64 rng(4);
  const std::size_t n = 4;
  auto grad = std::make_shared<FiniteDifferenceOperator>(n, n);
  auto op = make_dense(randn(5, n * n, rng));
  const Vec truth = randn(n * n, rng);
  const double e_reg = norm(grad->apply_to(truth));
  const auto sys = augment_with_regularizer(op, SubproblemPartition::single(5), grad, e_reg);
  const Vec y = op->apply_to(truth);
  const MeasurementVector data{sys.augment_data(y), sys.partition};
  const Vec e = compute_inexactness(truth, split(sys.op, sys.partition), data);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_NEAR(e[0], 0.0, 1e-12);
  EXPECT_NEAR(e[1], sys.augment_levels(Vec{0.0})[1], 1e-12 * e_reg);
  EXPECT_THROW(augment_with_regularizer(op, SubproblemPartition::single(5), make_identity(3), 0.0), InputError);
}

TEST(Materialize, IdentityAndCap) {
  const DenseMatrix m = materialize_dense(*make_identity(5));
  EXPECT_TRUE(m.isApprox(DenseMatrix::Identity(5, 5)));
  try {
    materialize_dense(FiniteDifferenceOperator(100, 100), 1000);
    FAIL() << "cap not enforced";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("GB"), std::string::npos);
  }
}

TEST(OperatorNorm, KnownSpectra) {
  EXPECT_NEAR(operator_norm(*make_identity(9)), 1.0, 1e-6);
  DenseMatrix d = DenseMatrix::Zero(3, 3);
  d.diagonal() << 3.0, 1.0, 0.5;
  EXPECT_NEAR(operator_norm(*make_dense(d)), 3.0, 1e-6);
}

TEST(FiniteDifference, AdjointAndConstantNullSpace) {
  std::mt19937_64 rng(5);
  FiniteDifferenceOperator g(7, 5);
  for (int t = 0; t < 20; ++t) EXPECT_LT(testutil::adjoint_mismatch(g, rng), 1e-12);
  const Vec c(35, 2.5);
  EXPECT_EQ(norm(g.apply_to(c)), 0.0);
}

// ---------------------------------------------------------------------------
// Radon

TEST(Radon, ZeroImageGivesZeroSinogram) {
  const ImageGrid img(16, 16);
  const auto y = radon_apply(img, {8, 23});
  EXPECT_EQ(norm(y.values), 0.0);
  const ImageGrid back = radon_adjoint(Vec(8 * 23, 0.0), {8, 23}, 16, 16);
  EXPECT_EQ(norm(back.values), 0.0);
}

TEST(Radon, DiskChordLengths) {
  const std::size_t n = 128;
  const double r = 0.6;
  ImageGrid disk(n, n);
  const double h = disk.pixel_size();
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double px = (static_cast<double>(x) + 0.5) * h - 1.0, py = (static_cast<double>(y) + 0.5) * h - 1.0;
      disk.at(x, y) = px * px + py * py <= r * r ? 1.0 : 0.0;
    }
  const RadonGeometry geom{7, 181};
  RadonOperator op(n, n, 2.0, geom);
  const Vec sino = op.apply_to(disk.values);
  for (std::size_t a = 0; a < geom.n_angles; ++a)
    for (std::size_t d = 0; d < geom.n_detectors; ++d) {
      const double t = op.detector_offset(d);
      if (std::abs(t) > r - 2 * h) continue;
      const double chord = 2.0 * std::sqrt(r * r - t * t);
      EXPECT_NEAR(sino[a * geom.n_detectors + d], chord, 2.0 * h) << "angle " << a << " t " << t;
    }
}

TEST(Radon, GaussianProjectsToGaussian) {
  // Line integrals of exp(-|x|^2 / 2 s^2) are sqrt(2 pi) s exp(-t^2 / 2 s^2).
  const std::size_t n = 96;
  const double s = 0.25;
  ImageGrid g(n, n);
  const double h = g.pixel_size();
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double px = (static_cast<double>(x) + 0.5) * h - 1.0, py = (static_cast<double>(y) + 0.5) * h - 1.0;
      g.at(x, y) = std::exp(-(px * px + py * py) / (2 * s * s));
    }
  const RadonGeometry geom{9, 101, kPi};
  RadonOperator op(n, n, 2.0, geom);
  const Vec sino = op.apply_to(g.values);
  const double peak = std::sqrt(2 * kPi) * s;
  for (std::size_t r = 0; r < sino.size(); ++r) {
    const double t = op.detector_offset(r % geom.n_detectors);
    EXPECT_NEAR(sino[r], peak * std::exp(-t * t / (2 * s * s)), 2e-3 * peak) << "row " << r;
  }
}

TEST(Radon, SinglePixelMassPerAngle) {
  const std::size_t n = 32;
  ImageGrid img(n, n);
  img.at(10, 13) = 1.0;
  const RadonGeometry geom{12, 181};
  RadonOperator op(n, n, 2.0, geom);
  const Vec sino = op.apply_to(img.values);
  const double area = img.pixel_size() * img.pixel_size();
  for (std::size_t a = 0; a < geom.n_angles; ++a) {
    double mass = 0.0;
    for (std::size_t d = 0; d < geom.n_detectors; ++d) mass += sino[a * geom.n_detectors + d];
    EXPECT_NEAR(mass * op.detector_spacing(), area, 0.02 * area) << "angle " << a;
  }
}

TEST(Radon, AdjointOfOneHotIsMatrixRow) {
  const RadonGeometry geom{5, 13};
  RadonOperator op(9, 7, 2.0, geom);
  const DenseMatrix m = materialize_dense(op);
  for (std::size_t r : {0u, 17u, 33u, 64u}) {
    Vec e(op.range_size(), 0.0);
    e[r] = 1.0;
    const ImageGrid back = radon_adjoint(e, geom, 9, 7);
    for (std::size_t p = 0; p < back.values.size(); ++p)
      EXPECT_DOUBLE_EQ(back.values[p], m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)));
  }
}

TEST(Radon, ApplyRowsMatchesFullApply) {
  std::mt19937_64 rng(6);
  RadonOperator op(12, 12, 2.0, {10, 17});
  const Vec x = randn(op.domain_size(), rng);
  const Vec full = op.apply_to(x);
  Vec part(30);
  op.apply_rows(x, 40, part);
  for (std::size_t k = 0; k < part.size(); ++k) EXPECT_DOUBLE_EQ(part[k], full[40 + k]);
}

TEST(Radon, MirroredAnglesDuplicateRows) {
  // With symmetric detectors the ray (theta + pi, t) is the ray (theta, -t).
  const RadonGeometry geom{8, 10, 2 * kPi};
  RadonOperator op(10, 10, 2.0, geom);
  std::mt19937_64 rng(7);
  const Vec x = randn(op.domain_size(), rng);
  const Vec y = op.apply_to(x);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t d = 0; d < 10; ++d)
      EXPECT_NEAR(y[a * 10 + d], y[(a + 4) * 10 + (9 - d)], 1e-12 * (1 + std::abs(y[a * 10 + d])));
}

TEST(Radon, RejectsNonFiniteAndBadShapes) {
  ImageGrid img(8, 8);
  img.at(2, 2) = std::nan("");
  EXPECT_THROW(radon_apply(img, {4, 12}), InputError);
  EXPECT_THROW(radon_adjoint(Vec(10), {4, 12}, 8, 8), InputError);
  RadonOperator op(8, 8, 2.0, {4, 12});
  EXPECT_THROW(op.apply_to(Vec(63)), InputError);
}

// ---------------------------------------------------------------------------
// Fourier

std::vector<std::size_t> full_mask(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), 0);
  return m;
}

TEST(Sense, ImpulseGivesFlatSpectrum) {
  const std::size_t w = 6, h = 5;
  ImageGrid img(w, h, ValueKind::complex);
  img.values[0] = 1.0;
  const SenseSetup setup{synthetic_coil_maps(w, h, 1), {full_mask(w * h)}};
  const auto y = sense_apply(img, setup, 0);
  for (std::size_t k = 0; k < w * h; ++k) {
    EXPECT_NEAR(std::abs(detail::load(y.values, k)), 1.0 / std::sqrt(30.0), 1e-14);
  }
}

TEST(Sense, ConstantImageHasOnlyZeroFrequency) {
  const std::size_t w = 8, h = 4;
  ImageGrid img(w, h);
  std::fill(img.values.begin(), img.values.end(), 3.0);
  const SenseSetup setup{synthetic_coil_maps(w, h, 1), {full_mask(w * h)}};
  const auto y = sense_apply(img, setup, 0);
  EXPECT_NEAR(y.values[0], 3.0 * std::sqrt(32.0), 1e-12);
  for (std::size_t k = 1; k < w * h; ++k) EXPECT_NEAR(std::abs(detail::load(y.values, k)), 0.0, 1e-12);
}

TEST(Sense, MatchesNaiveDftWithCoils) {
  const std::size_t w = 6, h = 5, coils = 3;
  std::mt19937_64 rng(8);
  ImageGrid img(w, h, ValueKind::complex);
  img.values = randn(2 * w * h, rng);
  const auto maps = synthetic_coil_maps(w, h, coils);
  const std::vector<std::size_t> mask{0, 3, 7, 11, 29};
  const auto y = sense_apply(img, {maps, {mask}}, 0);
  for (std::size_t c = 0; c < coils; ++c)
    for (std::size_t j = 0; j < mask.size(); ++j) {
      const std::size_t kx = mask[j] % w, ky = mask[j] / w;
      cplx acc{};
      for (std::size_t yy = 0; yy < h; ++yy)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double ph = -2 * kPi * (double(kx * xx) / w + double(ky * yy) / h);
          acc += img.cvalue(yy * w + xx) * maps[c].cvalue(yy * w + xx) * std::polar(1.0, ph);
        }
      acc /= std::sqrt(double(w * h));
      const cplx got = detail::load(y.values, c * mask.size() + j);
      EXPECT_NEAR(std::abs(got - acc), 0.0, 1e-12);
    }
}

TEST(Sense, CoilMapsArePartitionOfUnity) {
  const auto maps = synthetic_coil_maps(10, 12, 4);
  for (std::size_t p = 0; p < 120; ++p) {
    double s = 0.0;
    for (const auto& m : maps) s += std::norm(m.cvalue(p));
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Sense, RejectsEmptyMask) {
  EXPECT_THROW(SenseOperator({synthetic_coil_maps(4, 4, 1), {{}}}), InputError);
  EXPECT_THROW(SenseOperator({synthetic_coil_maps(4, 4, 1), {{16}}}), InputError);
}

TEST(Sense, CartesianBinsTileTheSampledLines) {
  const auto s = cartesian_sampling(16, 16, 4, 4, 3);
  std::set<std::size_t> seen;
  for (const auto& m : s.masks)
    for (auto k : m) EXPECT_TRUE(seen.insert(k).second);
  EXPECT_EQ(seen.size() % 16, 0u);
  for (double p : s.positions) {
    EXPECT_GT(p, -1.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_LT(s.positions.front(), s.positions.back());
}

TEST(Nudft, GridSamplesMatchSense) {
  const std::size_t w = 7, h = 6;
  std::mt19937_64 rng(9);
  ImageGrid img(w, h, ValueKind::complex);
  img.values = randn(2 * w * h, rng);
  std::vector<FrequencyPoint> pts;
  std::vector<std::size_t> mask;
  for (long ky = -3; ky < 3; ++ky)
    for (long kx = -3; kx < 4; ++kx) {
      pts.push_back({double(kx), double(ky)});
      mask.push_back(frequency_index(kx, ky, w, h));
    }
  const auto a = nudft_apply(img, pts);
  const auto b = sense_apply(img, {synthetic_coil_maps(w, h, 1), {mask}}, 0);
  EXPECT_LT(testutil::max_abs_diff(a.values, b.values), 1e-10);
}

TEST(Nudft, ZeroImageAndZeroFrequency) {
  std::mt19937_64 rng(10);
  ImageGrid img(5, 4);
  EXPECT_EQ(norm(nudft_apply(img, {{0.3, -1.7}, {2.0, 0.5}}).values), 0.0);
  img.values = randn(20, rng);
  const double sum = std::accumulate(img.values.begin(), img.values.end(), 0.0);
  const auto y = nudft_apply(img, {{0.0, 0.0}});
  EXPECT_NEAR(y.values[0], sum / std::sqrt(20.0), 1e-12);
  EXPECT_NEAR(y.values[1], 0.0, 1e-12);
}

TEST(Nudft, MaterializesRowByRow) {
  std::mt19937_64 rng(11);
  const NudftOperator op(6, 5, radial_trajectory(6, 2, 2, 6), synthetic_coil_maps(6, 5, 2));
  const DenseMatrix m = materialize_dense(op);
  const Vec x = randn(op.domain_size(), rng);
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd y = m * xv;
  EXPECT_LT(testutil::max_abs_diff(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                                   op.apply_to(x)),
            1e-12);
}

TEST(Nudft, SizeCapIsEnforced) {
  try {
    NudftOperator(128, 128, {{{0.0, 0.0}}});
    FAIL() << "cap not enforced";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("downsample"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Stripes

TEST(Stripe, HyperplaneExamples) {
  EXPECT_EQ(project_hyperplane(Vec{3, 5}, Vec{1, 0}, 0.0), (Vec{0, 5}));
  EXPECT_EQ(project_hyperplane(Vec{0, 5}, Vec{1, 0}, 0.0), (Vec{0, 5}));
  EXPECT_THROW(project_hyperplane(Vec{1, 1}, Vec{0, 0}, 0.0), InputError);
}

TEST(Stripe, HyperplaneRandomProperties) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const Vec x = randn(12, rng), u = randn(12, rng);
    const double alpha = randn(1, rng)[0];
    const Vec p = project_hyperplane(x, u, alpha);
    EXPECT_NEAR(dot(u, p), alpha, 1e-12 * (1 + norm(u) * norm(x)));
    // p - x is a multiple of u
    const Vec d = subtract(p, x);
    const double c = dot(d, u) / norm2(u);
    Vec r = d;
    axpy(-c, u, r);
    EXPECT_LT(norm(r), 1e-12 * (1 + norm(d)));
  }
}

TEST(Stripe, StripeExamplesAndProperties) {
  const Stripe s{{1, 0}, 0.0, 1.0};
  EXPECT_EQ(project_stripe(Vec{3, 0}, s), (Vec{1, 0}));
  EXPECT_EQ(project_stripe(Vec{0.5, 2}, s), (Vec{0.5, 2}));
  EXPECT_EQ(project_stripe(Vec{-4, 1}, s), (Vec{-1, 1}));

  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const Stripe r{randn(8, rng), randn(1, rng)[0], std::abs(randn(1, rng)[0])};
    const Vec x = randn(8, rng), z = randn(8, rng);
    const Vec px = project_stripe(x, r);
    const double nu = norm(r.direction);
    EXPECT_TRUE(r.contains(px, 1e-10 * nu * norm(x)));
    EXPECT_LT(testutil::max_abs_diff(project_stripe(px, r), px), 1e-12);
    EXPECT_LE(norm(subtract(px, project_stripe(z, r))), norm(subtract(x, z)) + 1e-12);
    const double gap = std::abs(dot(r.direction, x) - r.offset);
    if (gap > r.half_width) {
      EXPECT_NEAR(norm(subtract(px, x)), (gap - r.half_width) / nu, 1e-12 * (1 + gap));
      const double side = std::abs(dot(r.direction, px) - r.offset);
      EXPECT_NEAR(side, r.half_width, 1e-10 * (1 + gap));
    }
  }
}

TEST(Stripe, SubproblemStripeContainsReference) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 30; ++t) {
    auto op = make_dense(randn(6, 10, rng));
    const Vec s_ref = randn(10, rng), s = randn(10, rng);
    const Vec y = randn(6, rng);
    const double e = norm(block_residual(*op, s_ref, y));
    const Vec w = block_residual(*op, s, y);
    const auto st = stripe_from_subproblem(w, *op, y, e);
    ASSERT_TRUE(st.has_value());
    EXPECT_EQ(st->direction, op->adjoint_to(w));
    EXPECT_NEAR(st->half_width, e * norm(w), 1e-12 * st->half_width);
    EXPECT_TRUE(st->contains(s_ref, 1e-10 * (1 + st->half_width)));
  }
}

TEST(Stripe, ZeroWidthAndConsistentSubproblem) {
  auto op = make_identity(3);
  const Vec y{1, 2, 3};
  const auto st = stripe_from_subproblem(Vec{1, 0, 0}, *op, y, 0.0);
  ASSERT_TRUE(st);
  EXPECT_EQ(st->half_width, 0.0);
  EXPECT_FALSE(stripe_from_subproblem(Vec{0, 0, 0}, *op, y, 0.5).has_value());
}

}  // namespace
