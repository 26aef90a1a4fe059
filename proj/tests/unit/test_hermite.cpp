#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "w2s/error.hpp"
#include "w2s/hermite.hpp"

using namespace w2s;

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Explicit monomial forms, independent of the recurrence.
double he_explicit(int i, double z) {
  switch (i) {
    case 0: return 1.0;
    case 1: return z;
    case 2: return z * z - 1.0;
    case 3: return z * z * z - 3.0 * z;
    case 4: return std::pow(z, 4) - 6.0 * z * z + 3.0;
    case 5: return std::pow(z, 5) - 10.0 * std::pow(z, 3) + 15.0 * z;
    case 6: return std::pow(z, 6) - 15.0 * std::pow(z, 4) + 45.0 * z * z - 15.0;
    default: return NAN;
  }
}

}  // namespace

TEST(HermiteEval, Examples) {
  EXPECT_DOUBLE_EQ(hermite_eval(0, 3.7), 1.0);
  EXPECT_DOUBLE_EQ(hermite_eval(2, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(hermite_eval(4, 0.0), 3.0);
}

TEST(HermiteEval, MatchesExplicitPolynomials) {
  for (int i = 0; i <= 6; ++i) {
    for (double z : {-2.3, -0.7, 0.0, 0.4, 1.9, 3.1}) {
      EXPECT_NEAR(hermite_eval(i, z), he_explicit(i, z), 1e-11 * (1.0 + std::abs(he_explicit(i, z)))) << i << " " << z;
    }
  }
}

TEST(HermiteEval, AllMatchesSingle) {
  std::vector<double> out(9);
  hermite_eval_all(1.3, out);
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(out[static_cast<std::size_t>(i)], hermite_eval(i, 1.3));
}

TEST(PolyEval, Examples) {
  EXPECT_NEAR(poly_eval(PolySpec::unit_hermite(4), 0.0), 3.0 / std::sqrt(24.0), 1e-15);
  EXPECT_DOUBLE_EQ(poly_eval(PolySpec({0.0, 1.0}), 2.5), 2.5);
  EXPECT_DOUBLE_EQ(poly_eval(PolySpec({0.0, 0.0, 0.0}), 1.7), 0.0);
}

TEST(PolySpec, TrimsAndDerivative) {
  PolySpec p({1.0, 2.0, 0.0, 0.0});
  EXPECT_EQ(p.degree(), 1);
  EXPECT_EQ(PolySpec({0.0, 0.0}).degree(), 0);
  // d/dz He_4/sqrt(24) = 4 He_3/sqrt(24) = (4/sqrt(24)) sqrt(6) * He_3/sqrt(6)
  const PolySpec d = PolySpec::unit_hermite(4).derivative();
  EXPECT_EQ(d.degree(), 3);
  EXPECT_NEAR(d.coeff(3), 4.0 * std::sqrt(6.0) / std::sqrt(24.0), 1e-14);
  for (double z : {-1.1, 0.3, 2.0}) {
    const double h = 1e-5;
    const PolySpec q({0.2, -0.5, 0.7, 0.1, -0.3});
    const double fd = (poly_eval(q, z + h) - poly_eval(q, z - h)) / (2 * h);
    EXPECT_NEAR(poly_eval(q.derivative(), z), fd, 1e-8);
  }
}

TEST(GaussHermite, Examples) {
  EXPECT_NEAR(gauss_hermite_expectation([](double z) { return z * z; }, 8), 1.0, 1e-13);
  EXPECT_NEAR(gauss_hermite_expectation([](double z) { return hermite_eval(2, z) * hermite_eval(4, z); }, 8), 0.0,
              1e-12);
  EXPECT_NEAR(gauss_hermite_expectation([](double z) { return std::pow(hermite_eval(4, z), 2); }, 8), 24.0, 1e-11);
}

TEST(GaussHermite, WeightsSumToOneAndSymmetric) {
  for (int order : {2, 10, 64, 200}) {
    const auto& r = gauss_hermite_rule(order);
    ASSERT_EQ(r.nodes.size(), static_cast<std::size_t>(order));
    double sum = 0.0;
    for (double w : r.weights) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-12) << order;
    for (int i = 0; i < order; ++i) {
      EXPECT_NEAR(r.nodes[static_cast<std::size_t>(i)], -r.nodes[static_cast<std::size_t>(order - 1 - i)],
                  1e-9 * (1 + std::abs(r.nodes[static_cast<std::size_t>(i)])));
    }
  }
}

TEST(GaussHermite, RejectsBadOrder) {
  EXPECT_THROW(gauss_hermite_rule(1), Error);
  EXPECT_THROW(gauss_hermite_rule(kMaxQuadOrder + 1), Error);
}

TEST(GaussHermite, EvenMomentsAreDoubleFactorials) {
  // E[z^{2m}] = (2m-1)!!, exact for 2m <= 2*order-1.
  double dfact = 1.0;
  for (int m = 1; m <= 9; ++m) {
    dfact *= (2 * m - 1);
    EXPECT_NEAR(gauss_hermite_expectation([m](double z) { return std::pow(z, 2 * m); }, 10), dfact, 1e-10 * dfact);
  }
}

TEST(HermiteProperty, Orthogonality) {
  for (int order : {10, 16, 40}) {
    for (int i = 0; i <= 8; ++i) {
      for (int j = 0; j <= 8; ++j) {
        const double e =
            gauss_hermite_expectation([i, j](double z) { return hermite_eval(i, z) * hermite_eval(j, z); }, order);
        EXPECT_NEAR(e, i == j ? factorial(i) : 0.0, 1e-9) << i << "," << j << " order " << order;
      }
    }
  }
}

TEST(HermiteProject, Examples) {
  const PolySpec a = hermite_project([](double z) { return z * z - 1.0; }, 2, 8);
  EXPECT_NEAR(a.coeff(0), 0.0, 1e-12);
  EXPECT_NEAR(a.coeff(1), 0.0, 1e-12);
  EXPECT_NEAR(a.coeff(2), std::sqrt(2.0), 1e-12);

  const PolySpec b = hermite_project([](double z) { return hermite_eval(4, z) / std::sqrt(24.0); }, 4, 8);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(b.coeff(j), 0.0, 1e-12);
  EXPECT_NEAR(b.coeff(4), 1.0, 1e-12);

  const PolySpec c = hermite_project([](double) { return 1.0; }, 0, 2);
  EXPECT_NEAR(c.coeff(0), 1.0, 1e-12);
}

TEST(HermiteProject, ExactnessPrecondition) {
  // degree-6 integrand times He_6 needs order >= 7.
  auto g = [](double z) { return std::pow(z, 6); };
  EXPECT_THROW(hermite_project(g, 6, 6, 6), Error);
  EXPECT_NO_THROW(hermite_project(g, 6, 7, 6));
}

TEST(HermiteProperty, RoundTripRandomPolynomials) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const int deg = static_cast<int>(gen() % 7);
    std::vector<double> c(static_cast<std::size_t>(deg + 1));
    for (auto& x : c) x = nd(gen);
    const PolySpec p(c);
    const PolySpec r = hermite_project([&](double z) { return poly_eval(p, z); }, 6, 16, p.degree());
    for (int j = 0; j <= 6; ++j) EXPECT_NEAR(r.coeff(j), p.coeff(j), 1e-10) << trial << " j=" << j;
  }
}

TEST(HermiteProperty, Normalization) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> c(6);
    for (auto& x : c) x = nd(gen);
    const PolySpec p = PolySpec::normalized(c);
    double ss = 0.0;
    for (int j = 1; j <= p.degree(); ++j) ss += p.coeff(j) * p.coeff(j);
    EXPECT_NEAR(ss, 1.0, 1e-12);
    EXPECT_NEAR(gauss_hermite_expectation([&](double z) { return poly_eval(p, z); }, 16), 0.0, 1e-10);
    EXPECT_NEAR(gauss_hermite_expectation([&](double z) { return std::pow(poly_eval(p, z), 2); }, 16), 1.0, 1e-10);
    EXPECT_TRUE(p.is_normalized());
  }
}

TEST(HermiteProperty, SecondMomentIsCoefficientSum) {
  const PolySpec p({0.3, -0.4, 1.2, 0.5});
  const double e = gauss_hermite_expectation([&](double z) { return std::pow(poly_eval(p, z), 2); }, 12);
  EXPECT_NEAR(second_moment(p), e, 1e-11);
}

TEST(PolySpec, NormalizeConstantThrows) {
  try {
    PolySpec::normalized({2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSignal);
  }
}

TEST(Exponents, Information) {
  EXPECT_EQ(information_exponent(PolySpec::unit_hermite(4)), 4);
  EXPECT_EQ(information_exponent(PolySpec({0.0, 1.0})), 1);
  EXPECT_EQ(information_exponent(PolySpec({0.0, 0.0, 0.6, 0.8})), 2);
  EXPECT_EQ(information_exponent(PolySpec({0.0, 1e-12, 1.0})), 2);
  EXPECT_THROW(information_exponent(PolySpec({1.0})), Error);
}

TEST(Exponents, Generative) {
  EXPECT_EQ(generative_exponent_poly(PolySpec::unit_hermite(4)), 2);
  EXPECT_EQ(generative_exponent_poly(PolySpec({0.0, 1.0})), 1);
  EXPECT_EQ(generative_exponent_poly(PolySpec({0.0, 0.0, 0.6, 0.8})), 1);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const auto& r = gauss_legendre_rule(20);
  double s = 0.0, s8 = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    s += r.weights[i];
    s8 += r.weights[i] * std::pow(r.nodes[i], 8);
  }
  EXPECT_NEAR(s, 2.0, 1e-13);
  EXPECT_NEAR(s8, 2.0 / 9.0, 1e-13);
}

TEST(PiecewiseProject, AgreesWithGaussHermiteOnSmoothInput) {
  const PolySpec p({0.1, 0.4, -0.3, 0.2, 0.5});
  const PolySpec a = hermite_project_piecewise([&](double z) { return poly_eval(p, z); }, 6, 40, {});
  for (int j = 0; j <= 6; ++j) EXPECT_NEAR(a.coeff(j), p.coeff(j), 1e-11) << j;
}

TEST(PiecewiseProject, KinkedFunctionMatchesClosedForm) {
  // |z|: E[|z|] = sqrt(2/pi), E[|z| He_2] = E|z|^3 - E|z| = 2 sqrt(2/pi) - sqrt(2/pi).
  const PolySpec a = hermite_project_piecewise([](double z) { return std::abs(z); }, 2, 40, {0.0});
  const double m1 = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(a.coeff(0), m1, 1e-13);
  EXPECT_NEAR(a.coeff(1), 0.0, 1e-14);
  EXPECT_NEAR(a.coeff(2), m1 / std::sqrt(2.0), 1e-13);
}
