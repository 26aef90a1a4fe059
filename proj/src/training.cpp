#include "w2s/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "w2s/error.hpp"

namespace w2s {

namespace {

constexpr double kUnitCheckTol = 1e-9;

std::string step_context(std::int64_t t) { return " at step " + std::to_string(t); }

// Applies w <- unit(w + c (I - w w^T) x) with c = scale a sigma'(w^T x + b) to
// every neuron of the group. Each neuron touches only its own column, so the
// result does not depend on the thread count.
void update_group(NeuronGroup& g, const Vec& x, double xx, double scale, int threads, std::int64_t t) {
  const int N = g.size();
  const int d = static_cast<int>(x.size());
  const double* xp = x.data();
  double* Wp = g.W.data();
  int bad = 0;
  int degenerate = 0;
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1) reduction(+ : bad, degenerate)
  for (int n = 0; n < N; ++n) {
    double* w = Wp + static_cast<std::ptrdiff_t>(n) * d;
    double z = 0.0;
    double ww = 0.0;
#pragma omp simd reduction(+ : z, ww)
    for (int i = 0; i < d; ++i) {
      z += w[i] * xp[i];
      ww += w[i] * w[i];
    }
    const auto ni = static_cast<std::size_t>(n);
    const double c = scale * g.a[ni] * poly_eval(g.activation_deriv[ni], z + g.b[ni]);
    if (c == 0.0) continue;
    // ||(1 - c z) w + c x||^2 from quantities already at hand.
    const double alpha = 1.0 - c * z;
    const double nsq = alpha * alpha * ww + 2.0 * alpha * c * z + c * c * xx;
    if (!std::isfinite(nsq)) {
      ++bad;
      continue;
    }
    if (!(nsq > 1e-24)) {
      ++degenerate;
      continue;
    }
    const double inv = 1.0 / std::sqrt(nsq);
    const double p = alpha * inv;
    const double q = c * inv;
#pragma omp simd
    for (int i = 0; i < d; ++i) w[i] = p * w[i] + q * xp[i];
  }
  if (bad > 0) {
    throw Error(ErrorCode::NanDetected,
                std::to_string(bad) + " neuron(s) of task " + std::to_string(g.task + 1) + " became non-finite" +
                    step_context(t));
  }
  if (degenerate > 0) {
    throw Error(ErrorCode::DegenerateStep, "update cancelled a weight vector" + step_context(t));
  }
}

void check_unit_norms(const TwoLayerNet& net, std::int64_t step) {
  for (const auto& g : net.groups) {
    for (int n = 0; n < g.size(); ++n) {
      const double nrm = g.W.col(n).norm();
      if (!std::isfinite(nrm)) throw Error(ErrorCode::NanDetected, "non-finite weight" + step_context(step));
      if (std::abs(nrm - 1.0) > kUnitCheckTol) {
        throw Error(ErrorCode::NotUnit, "weight drifted off the sphere" + step_context(step));
      }
    }
  }
}

std::vector<double> group_factors(const TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg) {
  std::vector<double> f;
  for (const auto& g : net.groups) {
    if (cfg.rescaled_rate) {
      const double pi = rm.pi(g.task);
      if (!(pi > 0.0)) throw Error(ErrorCode::ValidationError, "rescaled rate needs a positive task weight");
      f.push_back(1.0 / pi);
    } else {
      f.push_back(1.0 / g.size());
    }
  }
  return f;
}

// Shared online loop. draw(t, x) fills x and returns the label.
template <class Draw>
void run_loop(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg, TraceSink& sink,
              const TraceLabels& labels, Draw&& draw) {
  cfg.validate();
  net.validate();
  const TaskGeometry& geom = rm.geom();
  if (net.dim() != geom.d) throw Error(ErrorCode::InvalidArgument, "network dimension does not match geometry");
  for (const auto& g : net.groups) {
    if (g.task < 0 || g.task >= geom.K) throw Error(ErrorCode::InvalidArgument, "group task out of range");
  }
  const TraceContext ctx = make_trace_context(net, geom, labels);
  check_unit_norms(net, 0);
  sink.write(extract_metrics(net, geom, 0, ctx));

  const std::vector<double> factor = group_factors(net, rm, cfg);
  Vec x(geom.d);
  for (std::int64_t t = 0; t < cfg.T; ++t) {
    const double y = draw(t, x);
    const double eta = cfg.schedule.at(t);
    const double xx = x.squaredNorm();
    if (!std::isfinite(y) || !std::isfinite(xx)) {
      throw Error(ErrorCode::NanDetected, "non-finite sample or label" + step_context(t));
    }
    for (std::size_t gi = 0; gi < net.groups.size(); ++gi) {
      update_group(net.groups[gi], x, xx, eta * y * factor[gi], cfg.threads, t);
    }
    const std::int64_t done = t + 1;
    if (done % cfg.record_every == 0 || done == cfg.T) {
      check_unit_norms(net, done);
      sink.write(extract_metrics(net, geom, done, ctx));
    }
  }
}

// Adapted orthonormal frame: columns start with the given directions (in
// order, skipping dependent ones) and are completed to a basis of R^d.
Mat adapted_frame(const std::vector<Vec>& lead, const Mat* extra) {
  const Eigen::Index d = lead.front().size();
  const Eigen::Index ne = extra ? extra->cols() : 0;
  Mat M(d, static_cast<Eigen::Index>(lead.size()) + ne + d);
  Eigen::Index c = 0;
  for (const auto& v : lead) M.col(c++) = v;
  if (extra) {
    M.middleCols(c, ne) = *extra;
    c += ne;
  }
  M.rightCols(d) = Mat::Identity(d, d);
  Eigen::HouseholderQR<Mat> qr(M);
  Mat Q = qr.householderQ() * Mat::Identity(d, d);
  // Householder QR may flip signs; align the first axes with the inputs.
  for (std::size_t i = 0; i < lead.size() && static_cast<Eigen::Index>(i) < d; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (Q.col(ii).dot(lead[i]) < 0.0) Q.col(ii) *= -1.0;
  }
  return Q;
}

// Normal-equivalent score of a chi-square statistic (Wilson-Hilferty).
double chi_square_z(double stat, int dof) {
  if (dof <= 0) return 0.0;
  const double k = static_cast<double>(dof);
  const double v = 2.0 / (9.0 * k);
  return (std::cbrt(stat / k) - (1.0 - v)) / std::sqrt(v);
}

// Monte-Carlo accumulation in the frame Q: h(x) x for x given column-wise.
struct FrameAccumulator {
  Mat Q;
  Vec sum;
  Vec sumsq;
  std::int64_t n = 0;

  explicit FrameAccumulator(Mat q) : Q(std::move(q)), sum(Vec::Zero(Q.cols())), sumsq(Vec::Zero(Q.cols())) {}

  void add(const Mat& X, const Vec& h) {
    const Mat R = Q.transpose() * X;
    sum.noalias() += R * h;
    sumsq.noalias() += R.cwiseAbs2() * h.cwiseAbs2();
    n += X.cols();
  }

  OracleResult finish(const Vec& predicted) const {
    OracleResult out;
    const double nn = static_cast<double>(n);
    const Vec mean = sum / nn;
    out.empirical = Q * mean;
    out.predicted = predicted;
    const Vec pred_rot = Q.transpose() * predicted;
    const Eigen::Index d = Q.cols();
    Vec var(d);
    for (Eigen::Index i = 0; i < d; ++i) var(i) = std::max(0.0, (sumsq(i) / nn - mean(i) * mean(i)) * nn / (nn - 1.0));
    const double vmax = var.maxCoeff();
    out.frame_z = Vec::Zero(d);
    double chi = 0.0;
    int dof = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double diff = mean(i) - pred_rot(i);
      double z = 0.0;
      const bool informative = var(i) > 1e-24 * std::max(vmax, 1e-300);
      if (informative) {
        z = diff / std::sqrt(var(i) / nn);
      } else if (std::abs(diff) > 1e-12) {
        z = std::numeric_limits<double>::infinity();
      }
      out.frame_z(i) = z;
      out.max_coord_z = std::max(out.max_coord_z, std::abs(z));
      if (i >= 2 && (informative || z != 0.0)) {
        chi += z * z;
        ++dof;
      }
    }
    out.z_theta = out.frame_z(0);
    out.z_w = d > 1 ? out.frame_z(1) : 0.0;
    out.rest_dof = dof;
    out.z_rest = std::isfinite(chi) ? chi_square_z(chi, dof) : std::numeric_limits<double>::infinity();
    out.max_std_dev = std::max({std::abs(out.z_theta), std::abs(out.z_w), out.z_rest});
    return out;
  }
};

PolySpec hermite_of_derivative(const Neuron& n, double r, int q) {
  // Coefficients of u -> a sigma'(r u + b).
  const PolySpec d = n.activation.derivative();
  const double a = n.a;
  const double b = n.b;
  const int order = std::max({2, q + 1, (d.degree() + q + 2) / 2});
  return hermite_project([&](double u) { return a * poly_eval(d, r * u + b); }, q, order, d.degree());
}

// E[f(theta^T x) h(wt^T x) x] for x standard on a space containing theta and
// the unit vector wt: Stein's identity in Hermite form.
Vec stein_drift(const Vec& theta, const Vec& wt, double c, const PolySpec& alpha, const PolySpec& eta) {
  double ct = 0.0;
  double cw = 0.0;
  const int I = std::max(alpha.degree(), eta.degree()) + 1;
  for (int j = 1; j <= I; ++j) ct += std::sqrt(static_cast<double>(j)) * alpha.coeff(j) * eta.coeff(j - 1) * std::pow(c, j - 1);
  for (int i = 0; i <= I; ++i) cw += std::sqrt(static_cast<double>(i + 1)) * alpha.coeff(i) * eta.coeff(i + 1) * std::pow(c, i);
  Vec out = ct * theta;
  if (cw != 0.0) out += cw * wt;
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (T < 1) throw Error(ErrorCode::ValidationError, "T must be at least 1");
  if (record_every < 1) throw Error(ErrorCode::ValidationError, "record_every must be at least 1");
  if (!(schedule.eta1 >= 0.0) || !(schedule.eta2 >= 0.0)) {
    throw Error(ErrorCode::ValidationError, "learning rates must be nonnegative");
  }
  if (!(noise_sd >= 0.0)) throw Error(ErrorCode::ValidationError, "noise_sd must be nonnegative");
  if (threads < 1) throw Error(ErrorCode::ValidationError, "threads must be at least 1");
}

std::int64_t default_record_every(std::int64_t T) { return std::max<std::int64_t>(1, T / 1000); }

TraceLabels w2s_labels(const RewardModel& rm, double clip_level) {
  const int k = rm.target();
  TraceLabels l;
  l.alpha_bar = transformed_teacher_hermite(rm.link(k).scaled(rm.pi(k)), 1.0, clip_level, 8);
  l.indices = {2, 4};
  return l;
}

TraceLabels sft_labels(const RewardModel& rm) {
  TraceLabels l;
  l.alpha_bar = rm.link(rm.target());
  l.indices = {4};
  return l;
}

TraceLabels weak_labels(const RewardModel& rm) {
  const int k = rm.target();
  TraceLabels l;
  l.alpha_bar = rm.link(k).scaled(rm.pi(k));
  l.indices = {information_exponent(rm.link(k))};
  return l;
}

TraceContext make_trace_context(const TwoLayerNet& net, const TaskGeometry& geom, const TraceLabels& labels) {
  TraceContext ctx;
  for (const auto& g : net.groups) {
    std::vector<std::string> cls(static_cast<std::size_t>(g.size()));
    std::vector<double> init(static_cast<std::size_t>(g.size()));
    for (int n = 0; n < g.size(); ++n) {
      const auto i = static_cast<std::size_t>(n);
      try {
        cls[i] = classify_neuron(g.neuron(n), labels.alpha_bar, labels.indices);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AmbiguousSign) throw;
        cls[i] = "na";
      }
      init[i] = geom.theta(g.task).dot(g.W.col(n));
    }
    ctx.sign_class.push_back(std::move(cls));
    ctx.init_align.push_back(std::move(init));
  }
  return ctx;
}

std::vector<TraceRow> extract_metrics(const TwoLayerNet& net, const TaskGeometry& geom, std::int64_t step,
                                      const TraceContext& ctx) {
  const int kappa = geom.target;
  const Mat& B = geom.basis(kappa);
  std::vector<TraceRow> rows;
  rows.reserve(static_cast<std::size_t>(net.total_neurons()));
  for (std::size_t gi = 0; gi < net.groups.size(); ++gi) {
    const NeuronGroup& g = net.groups[gi];
    const Mat P = B.transpose() * g.W;
    const Vec own = g.W.transpose() * geom.theta(g.task);
    for (int n = 0; n < g.size(); ++n) {
      const auto i = static_cast<std::size_t>(n);
      TraceRow r;
      r.step = step;
      r.task = g.task;
      r.neuron = n;
      r.align_target = P(0, n);
      r.align_own = own(n);
      r.overlap_sq = P.col(n).squaredNorm();
      r.perp_sq = std::max(0.0, g.W.col(n).squaredNorm() - r.overlap_sq);
      r.sign_class = gi < ctx.sign_class.size() ? ctx.sign_class[gi].at(i) : "na";
      r.init_align = gi < ctx.init_align.size() ? ctx.init_align[gi].at(i) : 0.0;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void w2s_train(TwoLayerNet& net, const TwoLayerNet& weak, const RewardModel& rm, const TrainConfig& cfg,
               TraceSink& sink, const TraceLabels& labels, const SampleInjector& inject) {
  const TaskGeometry& geom = rm.geom();
  cfg.mixture.validate(geom.K);
  if (!(cfg.clip_level > 0.0)) throw Error(ErrorCode::ValidationError, "clip level must be positive");
  weak.validate();
  if (weak.dim() != geom.d) throw Error(ErrorCode::InvalidArgument, "weak network dimension does not match geometry");
  Rng rng(cfg.seed, Stream::Data);
  Vec scratch(geom.s);
  run_loop(net, rm, cfg, sink, labels, [&](std::int64_t t, Vec& x) {
    if (!(inject && inject(t, x))) sample_mixture_into(geom, cfg.mixture, rng, x, scratch);
    return teacher_transform(forward(weak, x), cfg.clip_level);
  });
}

AlignmentTrace w2s_train(TwoLayerNet& net, const TwoLayerNet& weak, const RewardModel& rm, const TrainConfig& cfg) {
  AlignmentTrace trace;
  w2s_train(net, weak, rm, cfg, trace, w2s_labels(rm, cfg.clip_level));
  return trace;
}

namespace {

void single_task_loop(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg, TraceSink& sink,
                      const TraceLabels& labels, const SampleInjector& inject) {
  Rng rng(cfg.seed, Stream::Data);
  const int k = rm.target();
  run_loop(net, rm, cfg, sink, labels, [&](std::int64_t t, Vec& x) {
    if (!(inject && inject(t, x))) sample_isotropic_into(rng, x);
    const double y = task_reward(rm, k, x);
    return cfg.noise_sd > 0.0 ? y + cfg.noise_sd * rng.gaussian() : y;
  });
}

}  // namespace

void sft_train(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg, TraceSink& sink,
               const TraceLabels& labels, const SampleInjector& inject) {
  single_task_loop(net, rm, cfg, sink, labels, inject);
}

AlignmentTrace sft_train(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg) {
  AlignmentTrace trace;
  sft_train(net, rm, cfg, trace, sft_labels(rm));
  return trace;
}

void weak_train_phase1(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg, TraceSink& sink,
                       const TraceLabels& labels, const SampleInjector& inject) {
  if (net.mode != NetMode::Weak) throw Error(ErrorCode::InvalidArgument, "phase I expects a weak network");
  single_task_loop(net, rm, cfg, sink, labels, inject);
}

AlignmentTrace weak_train_phase1(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg) {
  AlignmentTrace trace;
  weak_train_phase1(net, rm, cfg, trace, weak_labels(rm));
  return trace;
}

FilterResult weak_filter_neurons(const TwoLayerNet& net, double eps_tilde) {
  if (net.groups.size() != 1) throw Error(ErrorCode::InvalidArgument, "filter expects a single-group weak network");
  if (!(eps_tilde > 0.0 && eps_tilde < 0.5)) throw Error(ErrorCode::InvalidArgument, "eps_tilde must lie in (0, 0.5)");
  const Mat& M = net.groups.front().W;
  const auto N = M.cols();
  if (N < 1) throw Error(ErrorCode::EmptyFilter, "no neurons to filter");
  const double invN = 1.0 / static_cast<double>(N);
  auto apply = [&](const Vec& v) -> Vec { return M * (M.transpose() * v) * invN; };

  // Start from the neuron most correlated with the rest, which avoids the
  // cancellation a plain sum suffers when neurons sit at +-theta.
  const Mat G = M.transpose() * M;
  Eigen::Index best = 0;
  G.rowwise().squaredNorm().maxCoeff(&best);
  Vec v = apply(M.col(best));
  double nv = v.norm();
  if (!(nv > 0.0)) throw Error(ErrorCode::EigensolveStalled, "power iteration start vector vanished");
  v /= nv;

  FilterResult out;
  constexpr int kMaxIter = 10000;
  bool converged = false;
  for (int it = 1; it <= kMaxIter; ++it) {
    Vec next = apply(v);
    nv = next.norm();
    if (!(nv > 0.0) || !std::isfinite(nv)) throw Error(ErrorCode::EigensolveStalled, "power iteration collapsed");
    next /= nv;
    if (next.dot(v) < 0.0) next = -next;
    const double delta = (next - v).norm();
    v = std::move(next);
    out.iterations = it;
    if (delta < 1e-12) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::EigensolveStalled, "power iteration did not reach 1e-12 in 10^4 iterations");
  }
  if (v.dot(M.rowwise().sum()) < 0.0) v = -v;

  const double keep_at = 1.0 - 2.0 * eps_tilde;
  const Vec proj = M.transpose() * v;
  for (Eigen::Index n = 0; n < N; ++n) {
    if (std::abs(proj(n)) >= keep_at) out.kept.push_back(static_cast<int>(n));
  }
  if (out.kept.empty()) throw Error(ErrorCode::EmptyFilter, "no neuron passes the alignment filter");
  out.net = select_neurons(net, out.kept);
  out.theta_hat = v;
  return out;
}

Vec ridge_solve(const Mat& Phi, const Vec& y, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge lambda must be nonnegative");
  if (Phi.rows() != y.size()) throw Error(ErrorCode::InvalidArgument, "ridge: design and labels disagree");
  const double invT = 1.0 / static_cast<double>(Phi.rows());
  Mat A = Phi.transpose() * Phi * invT;
  A.diagonal().array() += lambda;
  const Vec rhs = Phi.transpose() * y * invT;
  Eigen::LDLT<Mat> ldlt(A);
  // LDLT's rcond estimate ignores exactly zero pivots, so check them directly.
  const Vec D = ldlt.vectorD().cwiseAbs();
  const double pivot_ratio = D.maxCoeff() > 0.0 ? D.minCoeff() / D.maxCoeff() : 0.0;
  if (ldlt.info() != Eigen::Success || !(pivot_ratio > 1e-14) || !(ldlt.rcond() > 1e-14)) {
    throw Error(ErrorCode::SingularSystem, "regularized normal matrix is numerically singular");
  }
  return ldlt.solve(rhs);
}

namespace {

// Rows phi(x)^T of the Phase III design for the current biases.
void design_rows(const NeuronGroup& g, const Mat& X, Mat& Phi) {
  const Mat Z = X.transpose() * g.W;  // T x N preactivations without bias
  const int N = g.size();
  Phi.resize(Z.rows(), N);
  for (int n = 0; n < N; ++n) {
    const auto i = static_cast<std::size_t>(n);
    for (Eigen::Index t = 0; t < Z.rows(); ++t) Phi(t, n) = poly_eval(g.activation[i], Z(t, n) + g.b[i]) / N;
  }
}

Mat isotropic_block(int d, std::int64_t n, Rng& rng) {
  Mat X(d, n);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = rng.gaussian();
  }
  return X;
}

}  // namespace

SecondLayerFit weak_train_second_layer(TwoLayerNet& net, const RewardModel& rm, std::int64_t T2, double lambda,
                                       double C_b, Rng& rng, const SecondLayerOptions& opt) {
  if (net.groups.size() != 1) throw Error(ErrorCode::InvalidArgument, "phase III expects a single-group weak network");
  if (T2 < 1) throw Error(ErrorCode::ValidationError, "T2 must be at least 1");
  if (!(C_b >= 0.0)) throw Error(ErrorCode::ValidationError, "C_b must be nonnegative");
  NeuronGroup& g = net.groups.front();
  const int k = rm.target();
  const int d = rm.geom().d;
  for (double& b : g.b) b = rng.uniform(-C_b, C_b);

  const Mat X = isotropic_block(d, T2, rng);
  Vec y(T2);
  for (std::int64_t t = 0; t < T2; ++t) {
    y(t) = task_reward(rm, k, X.col(t));
    if (opt.noisy_labels) y(t) += opt.noise_sd * rng.gaussian();
  }
  Mat Phi;
  design_rows(g, X, Phi);

  SecondLayerFit fit;
  fit.lambda = lambda;
  if (!opt.lambda_grid.empty()) {
    const Mat Xh = isotropic_block(d, opt.holdout, rng);
    Vec yh(opt.holdout);
    for (std::int64_t t = 0; t < opt.holdout; ++t) yh(t) = task_reward(rm, k, Xh.col(t));
    Mat Phih;
    design_rows(g, Xh, Phih);
    double best = std::numeric_limits<double>::infinity();
    for (double l : opt.lambda_grid) {
      Vec a;
      try {
        a = ridge_solve(Phi, y, l);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularSystem) throw;
        continue;
      }
      const double mae = (Phih * a - yh).cwiseAbs().mean();
      if (mae < best) {
        best = mae;
        fit.lambda = l;
      }
    }
    if (!std::isfinite(best)) throw Error(ErrorCode::SingularSystem, "every lambda in the grid gave a singular system");
    fit.holdout_mae = best;
  }
  const Vec a = ridge_solve(Phi, y, fit.lambda);
  for (int n = 0; n < g.size(); ++n) g.a[static_cast<std::size_t>(n)] = a(n);
  fit.train_mse = (Phi * a - y).squaredNorm() / static_cast<double>(T2);
  return fit;
}

double heldout_mae(const TwoLayerNet& net, const RewardModel& rm, std::int64_t n, Rng& rng) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "held-out size must be positive");
  const int k = rm.target();
  Vec x(rm.geom().d);
  double acc = 0.0;
  for (std::int64_t t = 0; t < n; ++t) {
    sample_isotropic_into(rng, x);
    acc += std::abs(forward(net, x) - task_reward(rm, k, x));
  }
  return acc / static_cast<double>(n);
}

Vec gradient_closed_form(const Vec& theta, const Vec& w, const PolySpec& alpha, const PolySpec& beta) {
  const double c = theta.dot(w);
  double ct = 0.0;
  double cw = 0.0;
  const int I = std::max(alpha.degree(), beta.degree());
  for (int i = 0; i <= I; ++i) {
    const double di = static_cast<double>(i);
    if (i >= 1) ct += di * alpha.coeff(i) * beta.coeff(i) * std::pow(c, i - 1);
    cw += std::sqrt((di + 2.0) * (di + 1.0)) * alpha.coeff(i) * beta.coeff(i + 2) * std::pow(c, i);
  }
  return ct * theta + cw * w;
}

OracleResult expected_gradient_oracle(const Neuron& n, const Vec& theta, const PolySpec& link,
                                      std::int64_t n_samples, Rng& rng) {
  if (n_samples < 2) throw Error(ErrorCode::InvalidArgument, "oracle needs at least two samples");
  const auto d = static_cast<int>(theta.size());
  if (n.w.size() != d) throw Error(ErrorCode::InvalidArgument, "oracle: dimension mismatch");
  const PolySpec deriv = n.activation.derivative();
  FrameAccumulator acc(adapted_frame({theta, n.w}, nullptr));
  constexpr std::int64_t kBlock = 1024;
  Mat X(d, kBlock);
  Vec h(kBlock);
  for (std::int64_t done = 0; done < n_samples;) {
    const std::int64_t m = std::min(kBlock, n_samples - done);
    if (X.cols() != m) {
      X.resize(d, m);
      h.resize(m);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      for (int i = 0; i < d; ++i) X(i, j) = rng.gaussian();
      const auto col = X.col(j);
      h(j) = poly_eval(link, theta.dot(col)) * n.a * poly_eval(deriv, n.w.dot(col) + n.b);
    }
    acc.add(X, h);
    done += m;
  }
  const int q = std::max(link.degree() + 2, n.activation.degree());
  return acc.finish(gradient_closed_form(theta, n.w, link, beta_coeffs(n, q)));
}

OracleResult w2s_gradient_oracle(const Neuron& n, const W2sOracleTeacher& teacher, const TaskGeometry& geom,
                                 const MixtureSpec& mix, double clip_level, std::int64_t n_samples, Rng& rng) {
  if (n_samples < 2) throw Error(ErrorCode::InvalidArgument, "oracle needs at least two samples");
  mix.validate(geom.K);
  const int kappa = geom.target;
  const Vec& theta = geom.theta(kappa);
  const Mat& B = geom.basis(kappa);
  const double lambda = mix.lambdas[static_cast<std::size_t>(kappa)];

  // Prediction uses the part of w inside V_kappa: w^T x = r wt^T x there.
  const Vec pw = B * (B.transpose() * n.w);
  const double r = pw.norm();
  const Vec wt = r > 1e-12 ? Vec(pw / r) : Vec::Zero(geom.d);
  const double c = r > 1e-12 ? theta.dot(wt) : 0.0;
  const int q = std::max(2, n.activation.degree()) + 1;
  const PolySpec alpha = transformed_teacher_hermite(teacher.link, teacher.rho, clip_level, q);
  const PolySpec eta = hermite_of_derivative(n, r, q);
  const Vec predicted = lambda * stein_drift(theta, wt, c, alpha, eta);

  std::vector<Vec> lead{theta};
  if (r > 1e-12) lead.push_back(wt);
  FrameAccumulator acc(adapted_frame(lead, &B));
  const PolySpec deriv = n.activation.derivative();
  const double inv_rho = 1.0 / teacher.rho;
  constexpr std::int64_t kBlock = 1024;
  Mat X(geom.d, kBlock);
  Vec h(kBlock);
  Vec x(geom.d);
  Vec scratch(geom.s);
  for (std::int64_t done = 0; done < n_samples;) {
    const std::int64_t m = std::min(kBlock, n_samples - done);
    if (X.cols() != m) {
      X.resize(geom.d, m);
      h.resize(m);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      sample_mixture_into(geom, mix, rng, x, scratch);
      X.col(j) = x;
      const double raw = teacher.weak ? forward(*teacher.weak, x) : poly_eval(teacher.link, theta.dot(x));
      h(j) = teacher_transform(inv_rho * raw, clip_level) * n.a * poly_eval(deriv, n.w.dot(x) + n.b);
    }
    acc.add(X, h);
    done += m;
  }
  return acc.finish(predicted);
}

}  // namespace w2s
