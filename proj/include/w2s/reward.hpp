#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "w2s/geometry.hpp"
#include "w2s/hermite.hpp"
#include "w2s/rng.hpp"

namespace w2s {

/// Additive reward r*(x) = sum_k pi_k sigma*_k(theta_k^T x) over a shared geometry.
class RewardModel {
 public:
  /// Validates: pi nonincreasing and nonnegative with sum pi^2 = 1, and every
  /// link zero-mean with unit second moment.
  RewardModel(std::shared_ptr<const TaskGeometry> geom, std::vector<PolySpec> links, std::vector<double> pis);

  const TaskGeometry& geom() const noexcept { return *geom_; }
  std::shared_ptr<const TaskGeometry> geom_ptr() const noexcept { return geom_; }
  const PolySpec& link(int k) const { return links_.at(static_cast<std::size_t>(k)); }
  double pi(int k) const { return pis_.at(static_cast<std::size_t>(k)); }
  const std::vector<double>& pis() const noexcept { return pis_; }
  int K() const noexcept { return geom_->K; }
  int target() const noexcept { return geom_->target; }

 private:
  std::shared_ptr<const TaskGeometry> geom_;
  std::vector<PolySpec> links_;
  std::vector<double> pis_;
};

/// Evenly weighted pis: 1/sqrt(K) each.
std::vector<double> equal_pis(int K);

double true_reward(const RewardModel& rm, const Vec& x);

/// pi_k sigma*_k(theta_k^T x): the single-index model seen by task-k training.
double task_reward(const RewardModel& rm, int k, const Vec& x);

/// r*(x) + noise_sd * g.
double observe_noisy(const RewardModel& rm, const Vec& x, Rng& rng, double noise_sd);

/// r*_kappa(theta_kappa^T x) + noise_sd * g for the target task only.
double observe_single_task(const RewardModel& rm, const Vec& x, Rng& rng, double noise_sd);

/// 1 / ln d.
double default_clip_level(int d);

/// (ln d)^(q/2 + 1), the smallest admissible temperature.
double default_temperature(int d, int q);

/// c e^c with c = clip(v, +-clip_level).
inline double teacher_transform(double v, double clip_level) {
  const double c = v < -clip_level ? -clip_level : (v > clip_level ? clip_level : v);
  return c * std::exp(c);
}

/// Clip level plus the Hermite coefficients of the transformed teacher.
struct TransformSpec {
  double clip_level = 0.0;
  double rho = 1.0;
  PolySpec alpha_bar;
};

/// Hermite coefficients 0..q_out of z -> T(clip(sigma*(z) / rho)), T(u) = u e^u.
/// Splits the quadrature at the clip crossings, so the kinks cost no accuracy.
PolySpec transformed_teacher_hermite(const PolySpec& sigma_star, double rho, double clip_level, int q_out,
                                     int order = 96);

TransformSpec make_transform_spec(const PolySpec& sigma_star, double rho, double clip_level, int q_out);

}  // namespace w2s
