#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace w2s {

/// Zero threshold for Hermite coefficients when reading off exponents, so
/// quadrature round-off cannot fake low-order signal.
inline constexpr double kCoeffZeroTol = 1e-10;

/// Largest Gauss-Hermite order the rule cache will build.
inline constexpr int kMaxQuadOrder = 256;

/// Polynomial in the normalized Hermite basis:
///   f(z) = sum_j coeffs[j] / sqrt(j!) * He_j(z).
///
/// Trailing exact zeros are trimmed on construction so that degree() is the
/// index of the last nonzero coefficient (or 0 for the zero polynomial).
class PolySpec {
 public:
  PolySpec() : coeffs_{0.0} {}
  explicit PolySpec(std::vector<double> coeffs);

  /// Zero-mean, unit-second-moment copy: drops the constant term and rescales
  /// so that sum_{j>=1} coeffs[j]^2 = 1. Throws no-signal on a constant input.
  static PolySpec normalized(std::vector<double> coeffs);

  /// sqrt(j!)^-1 He_j itself, i.e. coefficient 1 at index j.
  static PolySpec unit_hermite(int j);

  int degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  /// Coefficient j, zero beyond the stored degree.
  double coeff(int j) const noexcept {
    return (j >= 0 && j < static_cast<int>(coeffs_.size())) ? coeffs_[static_cast<std::size_t>(j)] : 0.0;
  }
  bool is_normalized() const noexcept { return normalized_; }

  PolySpec scaled(double factor) const;
  /// Derivative in the same basis: d/dz He_j = j He_{j-1}.
  PolySpec derivative() const;

  friend bool operator==(const PolySpec& a, const PolySpec& b) { return a.coeffs_ == b.coeffs_; }

 private:
  std::vector<double> coeffs_;
  bool normalized_ = false;
};

/// Probabilist's Hermite polynomial He_i(z) by the three-term recurrence.
double hermite_eval(int i, double z);

/// Fills out[0..n) with He_0(z) .. He_{n-1}(z).
void hermite_eval_all(double z, std::span<double> out);

double poly_eval(const PolySpec& p, double z);

/// E[f(z)^2] under N(0,1), i.e. sum_j coeffs[j]^2.
double second_moment(const PolySpec& p);

/// Gauss-Hermite rule for the standard normal weight, weights summing to 1.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch rule for the given order, built once and cached.
const GaussHermiteRule& gauss_hermite_rule(int order);

/// E_{z~N(0,1)}[g(z)], exact for polynomials of degree <= 2*order - 1.
double gauss_hermite_expectation(const std::function<double(double)>& g, int order);

/// Hermite coefficients alpha_j = E[g(z) He_j(z)] / sqrt(j!) for j = 0..q.
/// When `poly_degree` is given, the order must integrate g * He_q exactly.
PolySpec hermite_project(const std::function<double(double)>& g, int q, int quad_order,
                         std::optional<int> poly_degree = std::nullopt);

/// Gauss-Legendre rule on [-1, 1] (Golub-Welsch), cached like the Hermite rules.
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussLegendreRule& gauss_legendre_rule(int order);

/// Hermite projection for integrands that are only piecewise smooth.
/// Integrates g(z) He_j(z) phi(z) over [-lim, lim] split at `breakpoints`
/// (and into pieces no wider than 1), with a Gauss-Legendre rule of
/// `order` points per piece. The Gaussian mass beyond lim = 14 is below 1e-40.
PolySpec hermite_project_piecewise(const std::function<double(double)>& g, int q, int order,
                                   std::vector<double> breakpoints);

/// Smallest j > 0 with a nonzero coefficient.
int information_exponent(const PolySpec& p);

/// 2 for even polynomials, 1 otherwise.
int generative_exponent_poly(const PolySpec& p);

}  // namespace w2s
