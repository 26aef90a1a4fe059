#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "w2s/rng.hpp"

namespace w2s {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// K task subspaces V_k with orthonormal d x s bases and their feature
/// directions theta_k. The first basis column of every V_k is theta_k.
/// Immutable once built.
struct TaskGeometry {
  int d = 0;
  int s = 0;
  int K = 0;
  int target = 0;  // zero-based index of the target task
  std::vector<Mat> bases;
  std::vector<Vec> thetas;

  const Mat& basis(int k) const { return bases.at(static_cast<std::size_t>(k)); }
  const Vec& theta(int k) const { return thetas.at(static_cast<std::size_t>(k)); }
};

/// Mixture weights over the K per-task Gaussians N(0, Sigma_k).
struct MixtureSpec {
  std::vector<double> lambdas;

  void validate(int K) const;
};

/// Builds K subspaces with theta_i^T theta_j = overlap(i, j).
/// Throws overlap-not-psd or dimension-overflow.
TaskGeometry build_task_geometry(int d, int s, int K, int target, const Mat& overlap, Rng& rng);

/// Two-task convenience: overlap matrix [[1, rho], [rho, 1]].
TaskGeometry build_task_geometry(int d, int s, int K, int target, double pairwise_overlap, Rng& rng);

/// Content hash of the geometry (dimensions and all basis entries), hex.
std::string geometry_hash(const TaskGeometry& geom);

Vec project(const TaskGeometry& geom, int k, const Vec& x);
Vec project_perp(const TaskGeometry& geom, int k, const Vec& x);

/// Squared norm of the V_k component: ||B_k^T x||^2.
double subspace_overlap_sq(const TaskGeometry& geom, int k, const Vec& x);

/// Uniform unit vector on S^{d-1} intersected with V_k.
Vec sample_sphere_subspace(const TaskGeometry& geom, int k, Rng& rng);

struct MixtureSample {
  Vec x;
  int component = 0;
};

MixtureSample sample_mixture(const TaskGeometry& geom, const MixtureSpec& mix, Rng& rng);

/// Allocation-free variant for training loops. `scratch` must have size s.
int sample_mixture_into(const TaskGeometry& geom, const MixtureSpec& mix, Rng& rng, Vec& x, Vec& scratch);

Vec sample_isotropic(int d, Rng& rng);
void sample_isotropic_into(Rng& rng, Vec& x);

/// (I - w w^T) g. Throws not-unit if |‖w‖ - 1| > 1e-9.
Vec spherical_gradient(const Vec& w, const Vec& g);

/// (w + update) / ‖w + update‖. Throws degenerate-step below 1e-12.
Vec step_and_renormalize(const Vec& w, const Vec& update);

}  // namespace w2s
