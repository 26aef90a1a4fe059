#include "w2s/reward.hpp"

#include <cmath>

#include "w2s/error.hpp"

namespace w2s {

namespace {

constexpr double kNormTol = 1e-12;

// Roots of f(z) = level on [-lim, lim], located on a fine grid and refined by
// bisection.
void crossings(const PolySpec& p, double scale, double level, std::vector<double>& out) {
  constexpr double kLim = 14.0;
  constexpr int kGrid = 28000;
  auto f = [&](double z) { return scale * poly_eval(p, z) - level; };
  double z0 = -kLim;
  double f0 = f(z0);
  for (int i = 1; i <= kGrid; ++i) {
    const double z1 = -kLim + 2.0 * kLim * i / kGrid;
    const double f1 = f(z1);
    if (f0 == 0.0) {
      out.push_back(z0);
    } else if ((f0 < 0.0) != (f1 < 0.0) && f1 != 0.0) {
      double lo = z0, hi = z1, flo = f0;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      out.push_back(0.5 * (lo + hi));
    }
    z0 = z1;
    f0 = f1;
  }
}

}  // namespace

RewardModel::RewardModel(std::shared_ptr<const TaskGeometry> geom, std::vector<PolySpec> links,
                         std::vector<double> pis)
    : geom_(std::move(geom)), links_(std::move(links)), pis_(std::move(pis)) {
  if (!geom_) throw Error(ErrorCode::InvalidArgument, "reward model needs a geometry");
  const auto K = static_cast<std::size_t>(geom_->K);
  if (links_.size() != K) throw Error(ErrorCode::ValidationError, "reward model: one link per task required");
  if (pis_.size() != K) throw Error(ErrorCode::ValidationError, "reward model: one weight per task required");
  double ss = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!(pis_[k] >= 0.0)) throw Error(ErrorCode::ValidationError, "task weights must be nonnegative");
    if (k > 0 && pis_[k] > pis_[k - 1]) throw Error(ErrorCode::ValidationError, "task weights must be nonincreasing");
    ss += pis_[k] * pis_[k];
    const PolySpec& l = links_[k];
    if (std::abs(l.coeff(0)) > kNormTol || std::abs(second_moment(l) - 1.0) > kNormTol) {
      throw Error(ErrorCode::ValidationError,
                  "link " + std::to_string(k + 1) + " must have zero mean and unit second moment");
    }
  }
  if (std::abs(ss - 1.0) > kNormTol) throw Error(ErrorCode::ValidationError, "task weights must satisfy sum pi^2 = 1");
}

std::vector<double> equal_pis(int K) {
  return std::vector<double>(static_cast<std::size_t>(K), 1.0 / std::sqrt(static_cast<double>(K)));
}

double true_reward(const RewardModel& rm, const Vec& x) {
  double r = 0.0;
  for (int k = 0; k < rm.K(); ++k) r += task_reward(rm, k, x);
  return r;
}

double task_reward(const RewardModel& rm, int k, const Vec& x) {
  return rm.pi(k) * poly_eval(rm.link(k), rm.geom().theta(k).dot(x));
}

double observe_noisy(const RewardModel& rm, const Vec& x, Rng& rng, double noise_sd) {
  const double r = true_reward(rm, x);
  return noise_sd > 0.0 ? r + noise_sd * rng.gaussian() : r;
}

double observe_single_task(const RewardModel& rm, const Vec& x, Rng& rng, double noise_sd) {
  const double r = task_reward(rm, rm.target(), x);
  return noise_sd > 0.0 ? r + noise_sd * rng.gaussian() : r;
}

double default_clip_level(int d) { return 1.0 / std::log(static_cast<double>(d)); }

double default_temperature(int d, int q) {
  return std::pow(std::log(static_cast<double>(d)), 0.5 * q + 1.0);
}

PolySpec transformed_teacher_hermite(const PolySpec& sigma_star, double rho, double clip_level, int q_out,
                                     int order) {
  if (!(rho > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (!(clip_level > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip level must be positive");
  if (q_out < 2) throw Error(ErrorCode::InvalidArgument, "need at least two output coefficients");
  if (order < 80) {
    throw Error(ErrorCode::QuadratureUnderresolved,
                "transformed teacher needs at least 80 nodes per piece, got " + std::to_string(order));
  }
  const double inv_rho = 1.0 / rho;
  std::vector<double> cuts;
  crossings(sigma_star, inv_rho, clip_level, cuts);
  crossings(sigma_star, inv_rho, -clip_level, cuts);
  auto f = [&](double z) { return teacher_transform(inv_rho * poly_eval(sigma_star, z), clip_level); };
  return hermite_project_piecewise(f, q_out, order, std::move(cuts));
}

TransformSpec make_transform_spec(const PolySpec& sigma_star, double rho, double clip_level, int q_out) {
  TransformSpec t;
  t.clip_level = clip_level;
  t.rho = rho;
  t.alpha_bar = transformed_teacher_hermite(sigma_star, rho, clip_level, q_out);
  return t;
}

}  // namespace w2s
