#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "w2s/geometry.hpp"
#include "w2s/hermite.hpp"
#include "w2s/reward.hpp"
#include "w2s/rng.hpp"

namespace w2s {

/// One hidden unit a * sigma(w^T x + b). Used as a standalone value for
/// oracles and diagnostics; networks store neurons column-wise by group.
struct Neuron {
  double a = 1.0;
  double b = 0.0;
  Vec w;
  PolySpec activation;
};

/// Neurons owned by one task block. Column n of W is neuron n's weight.
struct NeuronGroup {
  int task = 0;
  Mat W;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<PolySpec> activation;
  std::vector<PolySpec> activation_deriv;  // cached derivative of each activation

  int size() const noexcept { return static_cast<int>(a.size()); }
  Neuron neuron(int n) const;
  void set_activation(int n, PolySpec act);
};

enum class NetMode { Weak, Strong };

struct TwoLayerNet {
  NetMode mode = NetMode::Strong;
  std::vector<NeuronGroup> groups;

  int dim() const { return groups.empty() ? 0 : static_cast<int>(groups.front().W.rows()); }
  int total_neurons() const;
  void validate() const;
};

/// Empty group of `size` neurons in R^d for `task`.
NeuronGroup make_group(int task, int d, int size);

double neuron_output(const Neuron& n, const Vec& x);

/// (1/N_g) sum_n a_n sigma_n(w_n^T x + b_n) for one group.
double forward_group(const NeuronGroup& g, const Vec& x);

/// Sum over groups of the group means.
double forward(const TwoLayerNet& net, const Vec& x);

/// a sigma'(w^T x + b) x.
Vec neuron_weight_gradient(const Neuron& n, const Vec& x);

/// Hermite coefficients of z -> a sigma(z + b), indices 0..q.
PolySpec beta_coeffs(const Neuron& n, int q);

/// Weak first-layer initialization and the per-neuron sign condition
/// alpha_p beta_p > 0, alpha_i beta_i >= 0 for p < i <= q.
struct WeakInit {
  TwoLayerNet net;
  std::vector<bool> sign_ok;
};

/// Neurons uniform on S^{d-1} cap V_target, b = 0, a = +-1, activations
/// sum_{i=1}^q xi_i He_i with fair signs. `link` is the observed target
/// reward pi_kappa sigma*_kappa (only its signs matter).
WeakInit init_weak(const TaskGeometry& geom, int N_tilde, int q, const PolySpec& link, Rng& rng);

/// Sign condition for one neuron against the observed link.
bool weak_sign_condition(const Neuron& n, const PolySpec& link, int q);

/// Network keeping only the listed neurons of a single-group net.
TwoLayerNet select_neurons(const TwoLayerNet& net, const std::vector<int>& keep);

enum class OffTargetCenter { Theta, Subspace };

struct StrongInitOptions {
  double target_perturb = 0.1;      // sd of the Sigma_perp perturbation before the 1/sqrt(d-s) factor
  OffTargetCenter offtarget_center = OffTargetCenter::Theta;
  double offtarget_perturb = 0.1;   // sd of the N(0, I_d) perturbation before the 1/sqrt(d) factor
  bool normalized_activation = true;  // +-He2/sqrt(2) +- He4/sqrt(24) instead of raw +-He2 +- He4
};

/// Experimental strong model: one group per task with +-He2 +-He4 activations.
TwoLayerNet init_strong_experiment(const TaskGeometry& geom, const std::vector<int>& Ns, Rng& rng,
                                   const StrongInitOptions& opt = {});

/// delta_0 = delta_1 = delta_2 = 1, delta_{i+2} = 0.5 i / ((i+1)(i+2)) delta_i.
std::vector<double> delta_schedule(int q);

/// Theory-mode strong model: a = +-pi_k, activations sum_i xi_i He_i with
/// xi_i = +-delta_i, target weights with ||Sigma_perp w||^2 = c_r s^{-1/2} / 2.
TwoLayerNet init_strong_theory(const TaskGeometry& geom, const std::vector<int>& Ns, int q,
                               const std::vector<double>& pis, Rng& rng, double c_r = 0.1,
                               const StrongInitOptions& opt = {});

/// Weak model built from the true target link: a = pi + N(0, noise^2),
/// b = N(0, noise^2), w = unit(theta + noise g / sqrt(d)).
TwoLayerNet init_weak_oracle(const RewardModel& rm, int N_w, double noise, Rng& rng);

enum class SignMode { W2S, SFT };

/// "(+,+)" etc. from the signs of alpha_2 beta_2 and alpha_4 beta_4 (W2S),
/// or "+"/"-" from alpha_4 beta_4 (SFT). Throws ambiguous-sign below 1e-12.
std::string classify_neuron(const Neuron& n, const PolySpec& alpha_bar, SignMode mode);

/// Signs of alpha_i beta_i at the listed indices, joined as "(+,-)" for
/// several indices or "+" for one.
std::string classify_neuron(const Neuron& n, const PolySpec& alpha_bar, const std::vector<int>& indices);

/// Structured text snapshot; see README for the format.
void write_network(std::ostream& os, const TwoLayerNet& net, const std::string& geometry_hash);
TwoLayerNet read_network(std::istream& is, std::string* geometry_hash = nullptr);
void save_network(const std::string& path, const TwoLayerNet& net, const std::string& geometry_hash);
TwoLayerNet load_network(const std::string& path, std::string* geometry_hash = nullptr);

}  // namespace w2s
