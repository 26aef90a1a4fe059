#include "w2s/hermite.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "w2s/error.hpp"

namespace w2s {

namespace {

// 1/sqrt(j!) by running product; exact enough for j <= 170.
double inv_sqrt_factorial(int j) {
  double v = 1.0;
  for (int k = 2; k <= j; ++k) v /= std::sqrt(static_cast<double>(k));
  return v;
}

void trim_trailing_zeros(std::vector<double>& c) {
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  if (c.empty()) c.push_back(0.0);
}

GaussHermiteRule build_rule(int order) {
  // Jacobi matrix of the monic He recurrence: zero diagonal, sqrt(k) below.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(order));
  rule.weights.resize(static_cast<std::size_t>(order));
  // Polish each eigenvalue with Newton steps on h_n and take the weight from
  // 1 / (n h_{n-1}(x)^2), using the normalized recurrence (no overflow at
  // large n). The eigenvector weights alone lose a few digits.
  const auto h_pair = [order](double x, double& hn, double& hn1) {
    double prev = 0.0, cur = 1.0;
    for (int k = 0; k < order; ++k) {
      const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(static_cast<double>(k + 1));
      prev = cur;
      cur = next;
    }
    hn = cur;
    hn1 = prev;
  };
  for (int i = 0; i < order; ++i) {
    double x = es.eigenvalues()(i);
    double hn = 0.0, hn1 = 0.0;
    for (int it = 0; it < 3; ++it) {
      h_pair(x, hn, hn1);
      if (hn1 == 0.0) break;
      x -= hn / (std::sqrt(static_cast<double>(order)) * hn1);
    }
    h_pair(x, hn, hn1);
    rule.nodes[static_cast<std::size_t>(i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = 1.0 / (order * hn1 * hn1);
  }
  // Symmetrize: the exact rule is symmetric about 0, and enforcing it makes
  // odd moments vanish to round-off.
  for (int i = 0, j = order - 1; i <= j; ++i, --j) {
    const auto ui = static_cast<std::size_t>(i);
    const auto uj = static_cast<std::size_t>(j);
    const double x = 0.5 * (rule.nodes[uj] - rule.nodes[ui]);
    const double w = 0.5 * (rule.weights[ui] + rule.weights[uj]);
    rule.nodes[ui] = -x;
    rule.nodes[uj] = x;
    rule.weights[ui] = w;
    rule.weights[uj] = w;
  }
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

GaussLegendreRule build_legendre(int order) {
  // Jacobi matrix of the Legendre recurrence: b_k = k / sqrt(4k^2 - 1).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) {
    const double kk = static_cast<double>(k);
    sub(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  GaussLegendreRule rule;
  rule.nodes.resize(static_cast<std::size_t>(order));
  rule.weights.resize(static_cast<std::size_t>(order));
  for (int i = 0; i < order; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = 2.0 * v0 * v0;
  }
  for (int i = 0, j = order - 1; i <= j; ++i, --j) {
    const auto ui = static_cast<std::size_t>(i);
    const auto uj = static_cast<std::size_t>(j);
    const double x = 0.5 * (rule.nodes[uj] - rule.nodes[ui]);
    const double w = 0.5 * (rule.weights[ui] + rule.weights[uj]);
    rule.nodes[ui] = -x;
    rule.nodes[uj] = x;
    rule.weights[ui] = w;
    rule.weights[uj] = w;
  }
  return rule;
}

void check_order(int order, const char* what) {
  if (order < 2 || order > kMaxQuadOrder) {
    throw Error(ErrorCode::QuadratureUnderresolved,
                std::string(what) + ": quadrature order " + std::to_string(order) +
                    " outside [2, " + std::to_string(kMaxQuadOrder) + "]");
  }
}

}  // namespace

PolySpec::PolySpec(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  trim_trailing_zeros(coeffs_);
}

PolySpec PolySpec::normalized(std::vector<double> coeffs) {
  if (coeffs.empty()) coeffs.push_back(0.0);
  coeffs[0] = 0.0;
  double ss = 0.0;
  for (double c : coeffs) ss += c * c;
  if (!(ss > 0.0)) throw Error(ErrorCode::NoSignal, "cannot normalize a constant polynomial");
  const double inv = 1.0 / std::sqrt(ss);
  for (double& c : coeffs) c *= inv;
  PolySpec p(std::move(coeffs));
  p.normalized_ = true;
  return p;
}

PolySpec PolySpec::unit_hermite(int j) {
  std::vector<double> c(static_cast<std::size_t>(j) + 1, 0.0);
  c.back() = 1.0;
  return PolySpec(std::move(c));
}

PolySpec PolySpec::scaled(double factor) const {
  std::vector<double> c = coeffs_;
  for (double& v : c) v *= factor;
  PolySpec p(std::move(c));
  return p;
}

PolySpec PolySpec::derivative() const {
  // d/dz [a_j He_j / sqrt(j!)] = a_j sqrt(j) He_{j-1} / sqrt((j-1)!).
  if (coeffs_.size() <= 1) return PolySpec();
  std::vector<double> c(coeffs_.size() - 1);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = std::sqrt(static_cast<double>(k + 1)) * coeffs_[k + 1];
  return PolySpec(std::move(c));
}

double hermite_eval(int i, double z) {
  if (i <= 0) return 1.0;
  double prev = 1.0;
  double cur = z;
  for (int k = 1; k < i; ++k) {
    const double next = z * cur - static_cast<double>(k) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

void hermite_eval_all(double z, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() == 1) return;
  out[1] = z;
  for (std::size_t k = 1; k + 1 < out.size(); ++k) {
    out[k + 1] = z * out[k] - static_cast<double>(k) * out[k - 1];
  }
}

double poly_eval(const PolySpec& p, double z) {
  // Recurrence on the normalized polynomials h_j = He_j / sqrt(j!):
  //   h_{j+1} = (z h_j - sqrt(j) h_{j-1}) / sqrt(j+1).
  const auto& c = p.coeffs();
  double prev = 1.0;
  double sum = c[0];
  if (c.size() == 1) return sum;
  double cur = z;
  sum += c[1] * cur;
  for (std::size_t j = 1; j + 1 < c.size(); ++j) {
    const double next = (z * cur - std::sqrt(static_cast<double>(j)) * prev) /
                        std::sqrt(static_cast<double>(j + 1));
    prev = cur;
    cur = next;
    sum += c[j + 1] * cur;
  }
  return sum;
}

double second_moment(const PolySpec& p) {
  double ss = 0.0;
  for (double c : p.coeffs()) ss += c * c;
  return ss;
}

const GaussHermiteRule& gauss_hermite_rule(int order) {
  check_order(order, "gauss_hermite_rule");
  static std::array<std::once_flag, kMaxQuadOrder + 1> flags;
  static std::array<std::unique_ptr<GaussHermiteRule>, kMaxQuadOrder + 1> rules;
  const auto idx = static_cast<std::size_t>(order);
  std::call_once(flags[idx], [&] { rules[idx] = std::make_unique<GaussHermiteRule>(build_rule(order)); });
  return *rules[idx];
}

double gauss_hermite_expectation(const std::function<double(double)>& g, int order) {
  const auto& rule = gauss_hermite_rule(order);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * g(rule.nodes[i]);
  return acc;
}

PolySpec hermite_project(const std::function<double(double)>& g, int q, int quad_order,
                         std::optional<int> poly_degree) {
  if (q < 0) throw Error(ErrorCode::InvalidArgument, "hermite_project: negative degree");
  check_order(quad_order, "hermite_project");
  if (poly_degree) {
    // g * He_q has degree poly_degree + q; Gauss rules of order n are exact to 2n - 1.
    const int needed = (*poly_degree + q + 2) / 2;
    if (quad_order < needed) {
      throw Error(ErrorCode::QuadratureUnderresolved,
                  "hermite_project: order " + std::to_string(quad_order) + " below exactness order " +
                      std::to_string(needed) + " for degree " + std::to_string(*poly_degree));
    }
  }
  const auto& rule = gauss_hermite_rule(quad_order);
  std::vector<double> acc(static_cast<std::size_t>(q) + 1, 0.0);
  std::vector<double> he(static_cast<std::size_t>(q) + 1);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double gz = g(rule.nodes[i]) * rule.weights[i];
    hermite_eval_all(rule.nodes[i], he);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += gz * he[j];
  }
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] *= inv_sqrt_factorial(static_cast<int>(j));
  return PolySpec(std::move(acc));
}

const GaussLegendreRule& gauss_legendre_rule(int order) {
  check_order(order, "gauss_legendre_rule");
  static std::array<std::once_flag, kMaxQuadOrder + 1> flags;
  static std::array<std::unique_ptr<GaussLegendreRule>, kMaxQuadOrder + 1> rules;
  const auto idx = static_cast<std::size_t>(order);
  std::call_once(flags[idx], [&] { rules[idx] = std::make_unique<GaussLegendreRule>(build_legendre(order)); });
  return *rules[idx];
}

PolySpec hermite_project_piecewise(const std::function<double(double)>& g, int q, int order,
                                   std::vector<double> breakpoints) {
  if (q < 0) throw Error(ErrorCode::InvalidArgument, "hermite_project_piecewise: negative degree");
  constexpr double kLim = 14.0;
  const auto& rule = gauss_legendre_rule(order);
  std::vector<double> cuts{-kLim, kLim};
  for (double b : breakpoints) {
    if (b > -kLim && b < kLim) cuts.push_back(b);
  }
  for (int i = -13; i <= 13; ++i) cuts.push_back(static_cast<double>(i));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> acc(static_cast<std::size_t>(q) + 1, 0.0);
  std::vector<double> he(static_cast<std::size_t>(q) + 1);
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double lo = cuts[c];
    const double hi = cuts[c + 1];
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    if (!(half > 0.0)) continue;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double z = mid + half * rule.nodes[i];
      const double wz = half * rule.weights[i] * inv_sqrt_2pi * std::exp(-0.5 * z * z) * g(z);
      hermite_eval_all(z, he);
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += wz * he[j];
    }
  }
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] *= inv_sqrt_factorial(static_cast<int>(j));
  return PolySpec(std::move(acc));
}

int information_exponent(const PolySpec& p) {
  for (int j = 1; j <= p.degree(); ++j) {
    if (std::abs(p.coeff(j)) > kCoeffZeroTol) return j;
  }
  throw Error(ErrorCode::NoSignal, "all non-constant Hermite coefficients vanish");
}

int generative_exponent_poly(const PolySpec& p) {
  (void)information_exponent(p);
  for (int j = 1; j <= p.degree(); j += 2) {
    if (std::abs(p.coeff(j)) > kCoeffZeroTol) return 1;
  }
  return 2;
}

}  // namespace w2s
