#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "w2s/geometry.hpp"
#include "w2s/networks.hpp"
#include "w2s/reward.hpp"
#include "w2s/trace.hpp"

namespace w2s {

/// eta1 on [0, T1), eta2 on [T1, T). T1 < 0 means a single rate.
struct LearningRateSchedule {
  double eta1 = 0.0;
  double eta2 = 0.0;
  std::int64_t T1 = -1;

  double at(std::int64_t t) const noexcept { return (T1 >= 0 && t >= T1) ? eta2 : eta1; }
};

struct TrainConfig {
  LearningRateSchedule schedule;
  std::int64_t T = 1;
  double clip_level = 0.0;
  MixtureSpec mixture;
  double noise_sd = 0.0;
  std::int64_t record_every = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Replace each group's 1/N_k gradient factor by 1/pi_k.
  bool rescaled_rate = false;

  void validate() const;
};

/// max(1, T / 1000).
std::int64_t default_record_every(std::int64_t T);

/// How trace rows are labeled: signs of alpha_bar_i beta_i at `indices`.
struct TraceLabels {
  PolySpec alpha_bar;
  std::vector<int> indices;
};

/// W2S labels: transformed-teacher coefficients of pi_kappa sigma*_kappa with
/// the algorithm's clip (no temperature), classes from indices {2, 4}.
TraceLabels w2s_labels(const RewardModel& rm, double clip_level);
/// SFT labels: sigma*_kappa itself, class from index 4.
TraceLabels sft_labels(const RewardModel& rm);
/// Weak labels: pi_kappa sigma*_kappa, class from the information exponent.
TraceLabels weak_labels(const RewardModel& rm);

/// Optional per-step sample override used by tests: return true after
/// filling x to replace the drawn input at step t.
using SampleInjector = std::function<bool(std::int64_t t, Vec& x)>;

/// Per-neuron state captured at step 0 for labeling later rows.
struct TraceContext {
  std::vector<std::vector<std::string>> sign_class;  // [group][neuron]
  std::vector<std::vector<double>> init_align;
};

TraceContext make_trace_context(const TwoLayerNet& net, const TaskGeometry& geom, const TraceLabels& labels);

/// All trace fields for every neuron at `step`.
std::vector<TraceRow> extract_metrics(const TwoLayerNet& net, const TaskGeometry& geom, std::int64_t step,
                                      const TraceContext& ctx);

/// W2S training: x ~ mixture, y = T(clip(r^w(x))), spherical SGD on every neuron.
void w2s_train(TwoLayerNet& net, const TwoLayerNet& weak, const RewardModel& rm, const TrainConfig& cfg,
               TraceSink& sink, const TraceLabels& labels, const SampleInjector& inject = {});
AlignmentTrace w2s_train(TwoLayerNet& net, const TwoLayerNet& weak, const RewardModel& rm, const TrainConfig& cfg);

/// SFT baseline: x ~ N(0, I_d), y = pi_kappa sigma*_kappa(theta_kappa^T x) + noise_sd g.
void sft_train(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg, TraceSink& sink,
               const TraceLabels& labels, const SampleInjector& inject = {});
AlignmentTrace sft_train(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg);

/// Weak Phase I: same loop as SFT with the weak net and noise_sd = pi_kappa
/// by convention (taken from cfg).
void weak_train_phase1(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg, TraceSink& sink,
                       const TraceLabels& labels, const SampleInjector& inject = {});
AlignmentTrace weak_train_phase1(TwoLayerNet& net, const RewardModel& rm, const TrainConfig& cfg);

struct FilterResult {
  TwoLayerNet net;
  Vec theta_hat;
  std::vector<int> kept;
  int iterations = 0;
};

/// Leading eigenvector of (1/N) sum w w^T by power iteration, then keeps
/// neurons with |theta_hat^T w| >= 1 - 2 eps_tilde.
FilterResult weak_filter_neurons(const TwoLayerNet& net, double eps_tilde);

struct SecondLayerOptions {
  bool noisy_labels = false;
  double noise_sd = 0.0;
  /// When nonempty, lambda is chosen from this grid by held-out MAE.
  std::vector<double> lambda_grid;
  std::int64_t holdout = 10000;
};

struct SecondLayerFit {
  double lambda = 0.0;
  double train_mse = 0.0;
  double holdout_mae = -1.0;  // set when a grid search ran
};

/// Phase III: b ~ U[-C_b, C_b], then ridge regression for the second layer.
SecondLayerFit weak_train_second_layer(TwoLayerNet& net, const RewardModel& rm, std::int64_t T2, double lambda,
                                       double C_b, Rng& rng, const SecondLayerOptions& opt = {});

/// Ridge solve (Phi^T Phi / T + lambda I) a = Phi^T y / T. Throws
/// singular-system when lambda = 0 and Phi is rank deficient.
Vec ridge_solve(const Mat& Phi, const Vec& y, double lambda);

/// Mean |r^w(x) - r*_kappa(theta_kappa^T x)| over n isotropic draws.
double heldout_mae(const TwoLayerNet& net, const RewardModel& rm, std::int64_t n, Rng& rng);

/// Monte-Carlo versus closed form, with deviations standardized in an
/// orthonormal frame whose first axes are theta and the part of w orthogonal
/// to it. The remaining axes carry no signal and are pooled into one
/// chi-square statistic reported as its normal-equivalent score.
struct OracleResult {
  Vec empirical;
  Vec predicted;
  Vec frame_z;       // per-axis standardized deviation (0 for zero-variance axes)
  double z_theta = 0.0;
  double z_w = 0.0;
  double z_rest = 0.0;
  int rest_dof = 0;
  double max_coord_z = 0.0;  // largest |z| over all individual axes
  double max_std_dev = 0.0;  // max(|z_theta|, |z_w|, z_rest)
};

/// E[y grad_w a sigma(w^T x + b)] with x ~ N(0, I_d), y = link(theta^T x).
OracleResult expected_gradient_oracle(const Neuron& n, const Vec& theta, const PolySpec& link,
                                      std::int64_t n_samples, Rng& rng);

/// Closed-form drift sum_i [i alpha_i beta_i c^{i-1} theta + sqrt((i+2)(i+1)) alpha_i beta_{i+2} c^i w].
Vec gradient_closed_form(const Vec& theta, const Vec& w, const PolySpec& alpha, const PolySpec& beta);

/// Teacher for the W2S oracle: T(clip(link(theta^T x) / rho)), or the weak
/// net's clipped output when `weak` is set (closed form still uses link).
struct W2sOracleTeacher {
  PolySpec link;  // includes pi_kappa
  double rho = 1.0;
  const TwoLayerNet* weak = nullptr;
};

/// Mixture inputs; prediction is lambda_kappa times the transformed-teacher drift.
OracleResult w2s_gradient_oracle(const Neuron& n, const W2sOracleTeacher& teacher, const TaskGeometry& geom,
                                 const MixtureSpec& mix, double clip_level, std::int64_t n_samples, Rng& rng);

}  // namespace w2s
