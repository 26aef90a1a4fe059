#include <gtest/gtest.h>

#include <cmath>

#include "w2s/error.hpp"
#include "w2s/geometry.hpp"

using namespace w2s;

namespace {

TaskGeometry two_task(int d, int s, double overlap, std::uint64_t seed = 3) {
  Rng rng(seed);
  return build_task_geometry(d, s, 2, 0, overlap, rng);
}

}  // namespace

TEST(Geometry, PaperScaleOverlap) {
  const TaskGeometry g = two_task(1024, 128, 0.3);
  EXPECT_NEAR(g.theta(0).dot(g.theta(1)), 0.3, 1e-10);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(g.theta(k).norm(), 1.0, 1e-12);
    const Mat G = g.basis(k).transpose() * g.basis(k);
    EXPECT_LE((G - Mat::Identity(128, 128)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g.basis(k).col(0) - g.theta(k)).norm(), 1e-15);
  }
}

TEST(Geometry, FullSpaceTask) {
  Rng rng(1);
  const TaskGeometry g = build_task_geometry(8, 8, 1, 0, Mat::Identity(1, 1), rng);
  EXPECT_NEAR(g.theta(0).norm(), 1.0, 1e-12);
  const Vec x = Vec::LinSpaced(8, -1.0, 2.0);
  EXPECT_LE((project(g, 0, x) - x).norm(), 1e-12);
}

TEST(Geometry, OrthogonalRequest) {
  Rng rng(2);
  const TaskGeometry g = build_task_geometry(64, 8, 2, 0, Mat::Identity(2, 2), rng);
  EXPECT_NEAR(g.theta(0).dot(g.theta(1)), 0.0, 1e-10);
}

TEST(Geometry, ThreeTaskOverlapMatrix) {
  Mat G(3, 3);
  G << 1.0, 0.3, -0.2, 0.3, 1.0, 0.5, -0.2, 0.5, 1.0;
  Rng rng(4);
  const TaskGeometry g = build_task_geometry(100, 10, 3, 1, G, rng);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(g.theta(i).dot(g.theta(j)), G(i, j), 1e-10);
  }
}

TEST(Geometry, Errors) {
  Rng rng(1);
  Mat bad(2, 2);
  bad << 1.0, 1.5, 1.5, 1.0;
  try {
    build_task_geometry(16, 4, 2, 0, bad, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OverlapNotPsd);
  }
  try {
    build_task_geometry(8, 16, 1, 0, Mat::Identity(1, 1), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionOverflow);
  }
}

TEST(Geometry, DeterministicAndHashed) {
  const TaskGeometry a = two_task(64, 8, 0.3, 9);
  const TaskGeometry b = two_task(64, 8, 0.3, 9);
  const TaskGeometry c = two_task(64, 8, 0.3, 10);
  EXPECT_EQ(geometry_hash(a), geometry_hash(b));
  EXPECT_NE(geometry_hash(a), geometry_hash(c));
}

TEST(Projection, Examples) {
  const TaskGeometry g = two_task(64, 8, 0.3);
  for (int k = 0; k < 2; ++k) {
    EXPECT_LE((project(g, k, g.theta(k)) - g.theta(k)).norm(), 1e-12);
    EXPECT_LE(project_perp(g, k, g.theta(k)).norm(), 1e-10);
  }
  Rng rng(8);
  const Vec x = sample_isotropic(64, rng);
  EXPECT_LE((project(g, 0, x) + project_perp(g, 0, x) - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Projection, IdempotentAndPythagorean) {
  const TaskGeometry g = two_task(96, 12, 0.3);
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const Vec x = sample_isotropic(96, rng);
    for (int k = 0; k < 2; ++k) {
      const Vec p = project(g, k, x);
      EXPECT_LE((project(g, k, p) - p).norm(), 1e-10);
      const double lhs = x.squaredNorm();
      const double rhs = p.squaredNorm() + project_perp(g, k, x).squaredNorm();
      EXPECT_NEAR(lhs, rhs, 1e-9 * lhs);
      EXPECT_NEAR(subspace_overlap_sq(g, k, x), p.squaredNorm(), 1e-10 * lhs);
    }
  }
}

TEST(SphereSubspace, UnitAndInsideSubspace) {
  const int s = 16;
  const TaskGeometry g = two_task(128, s, 0.3);
  Rng rng(21);
  const int n = 100000;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec w = sample_sphere_subspace(g, 0, rng);
    if (i < 200) {
      EXPECT_NEAR(w.norm(), 1.0, 1e-12);
      EXPECT_LE(project_perp(g, 0, w).norm(), 1e-10);
    }
    mean += g.theta(0).dot(w);
  }
  mean /= n;
  // sd of theta^T w on S^{s-1} is s^{-1/2}.
  EXPECT_LE(std::abs(mean), 5.0 / std::sqrt(n * double(s)));
}

TEST(Mixture, PointMassComponent) {
  const TaskGeometry g = two_task(64, 8, 0.3);
  const MixtureSpec mix{{1.0, 0.0}};
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const MixtureSample m = sample_mixture(g, mix, rng);
    EXPECT_EQ(m.component, 0);
    EXPECT_LE(project_perp(g, 0, m.x).norm(), 1e-10);
  }
}

TEST(Mixture, ComponentFrequency) {
  const TaskGeometry g = two_task(32, 4, 0.3);
  const MixtureSpec mix{{0.9, 0.1}};
  Rng rng(6);
  int first = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) first += sample_mixture(g, mix, rng).component == 0;
  EXPECT_NEAR(first / double(n), 0.9, 0.01);
}

TEST(Mixture, IdentityCovarianceInSubspace) {
  const int s = 8;
  const TaskGeometry g = two_task(48, s, 0.3);
  const MixtureSpec mix{{1.0, 0.0}};
  Rng rng(7);
  const int n = 10000;
  Vec sumsq = Vec::Zero(s);
  Vec scratch(s), x(48);
  for (int i = 0; i < n; ++i) {
    sample_mixture_into(g, mix, rng, x, scratch);
    sumsq += (g.basis(0).transpose() * x).cwiseAbs2();
  }
  for (int j = 0; j < s; ++j) EXPECT_NEAR(sumsq(j) / n, 1.0, 0.05) << j;
}

TEST(Mixture, InvalidWeights) {
  EXPECT_THROW((MixtureSpec{{0.5, 0.6}}.validate(2)), Error);
  EXPECT_THROW((MixtureSpec{{1.2, -0.2}}.validate(2)), Error);
  EXPECT_THROW((MixtureSpec{{1.0}}.validate(2)), Error);
  EXPECT_NO_THROW((MixtureSpec{{0.9, 0.1}}.validate(2)));
}

TEST(Isotropic, Moments) {
  const int d = 20;
  Rng rng(12);
  const int n = 100000;
  Vec mean = Vec::Zero(d);
  double norm_ratio = 0.0, cov01 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec x = sample_isotropic(d, rng);
    mean += x;
    norm_ratio += x.squaredNorm() / d;
    cov01 += x(0) * x(1);
  }
  EXPECT_NEAR(norm_ratio / n, 1.0, 0.05);
  EXPECT_LE((mean / n).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NEAR(cov01 / n, 0.0, 0.03);
}

TEST(SphericalGradient, Examples) {
  Rng rng(30);
  Vec w = sample_isotropic(10, rng);
  w.normalize();
  EXPECT_LE(spherical_gradient(w, w).norm(), 1e-15);
  Vec v = sample_isotropic(10, rng);
  v -= v.dot(w) * w;
  EXPECT_LE((spherical_gradient(w, v) - v).norm(), 1e-14);
  for (int t = 0; t < 20; ++t) {
    const Vec g = sample_isotropic(10, rng);
    EXPECT_NEAR(w.dot(spherical_gradient(w, g)), 0.0, 1e-12);
  }
  try {
    spherical_gradient(2.0 * w, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotUnit);
  }
}

TEST(StepRenormalize, Examples) {
  Vec e1 = Vec::Zero(3), e2 = Vec::Zero(3);
  e1(0) = 1.0;
  e2(1) = 1.0;
  EXPECT_EQ(step_and_renormalize(e1, Vec::Zero(3)), e1);
  const Vec r = step_and_renormalize(e1, e2);
  EXPECT_NEAR(r(0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r(1), 1.0 / std::sqrt(2.0), 1e-15);
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    EXPECT_NEAR(step_and_renormalize(e1, 3.0 * sample_isotropic(3, rng)).norm(), 1.0, 1e-12);
  }
  try {
    step_and_renormalize(e1, -e1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateStep);
  }
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  Rng a(7, Stream::Data, 0), b(7, Stream::Data, 0), c(7, Stream::Init, 0), d(7, Stream::Data, 1);
  const double x = a.gaussian();
  EXPECT_EQ(x, b.gaussian());
  EXPECT_NE(x, c.gaussian());
  EXPECT_NE(x, d.gaussian());
}
