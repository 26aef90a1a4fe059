#include "w2s/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "w2s/error.hpp"

namespace w2s {

namespace {

constexpr double kUnitTol = 1e-9;

Vec gaussian_vector(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.gaussian();
  return v;
}

// Orthonormalizes column j of Q against columns [0, j) with two passes of
// modified Gram-Schmidt. Returns the norm left after the first pass.
double orthonormalize_column(Mat& Q, int j) {
  double residual = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < j; ++i) {
      const double c = Q.col(i).dot(Q.col(j));
      Q.col(j) -= c * Q.col(i);
    }
    const double n = Q.col(j).norm();
    if (pass == 0) residual = n;
    if (n < 1e-300) return 0.0;
    Q.col(j) /= n;
  }
  return residual;
}

// d x m orthonormal matrix from Gaussian columns; retries a column a few
// times before giving up.
Mat random_frame(int d, int m, Rng& rng, const Mat* seed_cols = nullptr) {
  Mat Q(d, m);
  const int fixed = seed_cols ? static_cast<int>(seed_cols->cols()) : 0;
  for (int j = 0; j < m; ++j) {
    int attempts = 0;
    while (true) {
      if (j < fixed) {
        Q.col(j) = seed_cols->col(j);
      } else {
        Q.col(j) = gaussian_vector(d, rng);
      }
      const double scale = Q.col(j).norm();
      const double r = orthonormalize_column(Q, j);
      if (r > 1e-8 * std::max(scale, 1.0)) break;
      if (j < fixed || ++attempts > 8) {
        throw Error(ErrorCode::DimensionOverflow,
                    "cannot find " + std::to_string(m) + " independent directions in R^" + std::to_string(d));
      }
    }
  }
  return Q;
}

}  // namespace

void MixtureSpec::validate(int K) const {
  if (static_cast<int>(lambdas.size()) != K) {
    throw Error(ErrorCode::ValidationError, "mixture weights: expected " + std::to_string(K) + " entries");
  }
  double sum = 0.0;
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw Error(ErrorCode::ValidationError, "mixture weights must be nonnegative");
    sum += l;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::ValidationError, "mixture weights must sum to 1");
}

TaskGeometry build_task_geometry(int d, int s, int K, int target, const Mat& overlap, Rng& rng) {
  if (d < 1 || s < 1 || s > d) {
    throw Error(ErrorCode::DimensionOverflow, "need 1 <= s <= d (s=" + std::to_string(s) + ", d=" + std::to_string(d) + ")");
  }
  if (K < 1 || K > d) throw Error(ErrorCode::DimensionOverflow, "need 1 <= K <= d");
  if (target < 0 || target >= K) throw Error(ErrorCode::InvalidArgument, "target task out of range");
  if (overlap.rows() != K || overlap.cols() != K) throw Error(ErrorCode::InvalidArgument, "overlap must be K x K");
  for (int i = 0; i < K; ++i) {
    if (std::abs(overlap(i, i) - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "overlap diagonal must be 1");
    for (int j = 0; j < K; ++j) {
      if (std::abs(overlap(i, j) - overlap(j, i)) > 1e-12) {
        throw Error(ErrorCode::InvalidArgument, "overlap must be symmetric");
      }
    }
  }

  // Factor G = F F^T. Cholesky when definite; otherwise a PSD square root.
  Mat F;
  Eigen::LLT<Mat> llt(overlap);
  if (llt.info() == Eigen::Success) {
    F = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es(overlap);
    if (es.eigenvalues().minCoeff() < -1e-12) {
      throw Error(ErrorCode::OverlapNotPsd, "requested overlap Gram matrix has a negative eigenvalue");
    }
    F = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  TaskGeometry g;
  g.d = d;
  g.s = s;
  g.K = K;
  g.target = target;
  const Mat frame = random_frame(d, K, rng);
  for (int k = 0; k < K; ++k) {
    Vec theta = frame * F.row(k).transpose();
    theta /= theta.norm();
    g.thetas.push_back(theta);
  }
  for (int k = 0; k < K; ++k) {
    const Mat first = g.thetas[static_cast<std::size_t>(k)];
    Mat B = random_frame(d, s, rng, &first);
    // Keep the exact theta as column 0 (orthonormalization only rescaled it).
    B.col(0) = g.thetas[static_cast<std::size_t>(k)];
    g.bases.push_back(std::move(B));
  }
  return g;
}

TaskGeometry build_task_geometry(int d, int s, int K, int target, double pairwise_overlap, Rng& rng) {
  Mat G = Mat::Constant(K, K, pairwise_overlap);
  G.diagonal().setOnes();
  return build_task_geometry(d, s, K, target, G, rng);
}

std::string geometry_hash(const TaskGeometry& geom) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const int dims[4] = {geom.d, geom.s, geom.K, geom.target};
  mix(dims, sizeof(dims));
  for (const auto& B : geom.bases) mix(B.data(), sizeof(double) * static_cast<std::size_t>(B.size()));
  for (const auto& t : geom.thetas) mix(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vec project(const TaskGeometry& geom, int k, const Vec& x) {
  const Mat& B = geom.basis(k);
  return B * (B.transpose() * x);
}

Vec project_perp(const TaskGeometry& geom, int k, const Vec& x) { return x - project(geom, k, x); }

double subspace_overlap_sq(const TaskGeometry& geom, int k, const Vec& x) {
  return (geom.basis(k).transpose() * x).squaredNorm();
}

Vec sample_sphere_subspace(const TaskGeometry& geom, int k, Rng& rng) {
  Vec g(geom.s);
  double n = 0.0;
  do {
    for (int i = 0; i < geom.s; ++i) g(i) = rng.gaussian();
    n = g.norm();
  } while (n < 1e-300);
  return geom.basis(k) * (g / n);
}

int sample_mixture_into(const TaskGeometry& geom, const MixtureSpec& mix, Rng& rng, Vec& x, Vec& scratch) {
  const double u = rng.uniform();
  int k = geom.K - 1;
  double acc = 0.0;
  for (int j = 0; j < geom.K; ++j) {
    acc += mix.lambdas[static_cast<std::size_t>(j)];
    if (u < acc) {
      k = j;
      break;
    }
  }
  // Skip zero-weight tail components that rounding could otherwise select.
  while (k > 0 && mix.lambdas[static_cast<std::size_t>(k)] == 0.0) --k;
  for (int i = 0; i < geom.s; ++i) scratch(i) = rng.gaussian();
  x.noalias() = geom.basis(k) * scratch;
  return k;
}

MixtureSample sample_mixture(const TaskGeometry& geom, const MixtureSpec& mix, Rng& rng) {
  MixtureSample out;
  out.x.resize(geom.d);
  Vec scratch(geom.s);
  out.component = sample_mixture_into(geom, mix, rng, out.x, scratch);
  return out;
}

Vec sample_isotropic(int d, Rng& rng) { return gaussian_vector(d, rng); }

void sample_isotropic_into(Rng& rng, Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
}

Vec spherical_gradient(const Vec& w, const Vec& g) {
  if (std::abs(w.norm() - 1.0) > kUnitTol) throw Error(ErrorCode::NotUnit, "spherical_gradient: w is not unit norm");
  return g - w.dot(g) * w;
}

Vec step_and_renormalize(const Vec& w, const Vec& update) {
  Vec out = w + update;
  const double n = out.norm();
  if (!(n > 1e-12)) throw Error(ErrorCode::DegenerateStep, "step_and_renormalize: near-zero norm");
  return out / n;
}

}  // namespace w2s
