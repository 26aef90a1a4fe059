#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "w2s/geometry.hpp"
#include "w2s/hermite.hpp"
#include "w2s/networks.hpp"
#include "w2s/training.hpp"

namespace w2s {

struct GeometryConfig {
  int d = 0;
  int s = 0;
  int K = 0;
  int target = 1;        // one-based
  double overlap = 0.0;  // pairwise theta_i^T theta_j
  bool operator==(const GeometryConfig&) const = default;
};

struct RewardConfig {
  std::vector<std::string> links;  // per task: "he<j>" or space-separated coefficients
  std::vector<double> pis;
  bool operator==(const RewardConfig&) const = default;
};

enum class WeakKind { Oracle, Pipeline };

struct WeakConfig {
  WeakKind kind = WeakKind::Oracle;
  // oracle model
  int neurons = 3;
  double noise = 0.1;
  // pipeline (Phases I-III)
  int pipeline_neurons = 64;
  int degree = 2;
  double eta = 0.0;
  std::int64_t T1 = 0;
  double noise_sd = 0.0;
  double eps_tilde = 0.05;
  std::int64_t T2 = 10000;
  double lambda = 1e-6;
  double C_b = 2.0;
  std::int64_t holdout = 10000;
  bool operator==(const WeakConfig&) const = default;
};

enum class StrongInitKind { Experiment, Theory };

struct StrongConfig {
  StrongInitKind init = StrongInitKind::Experiment;
  std::vector<int> sizes;
  double target_perturb = 0.1;
  OffTargetCenter offtarget_center = OffTargetCenter::Theta;
  double offtarget_perturb = 0.1;
  bool normalized_activation = true;
  int theory_degree = 4;
  double c_r = 0.1;
  bool operator==(const StrongConfig&) const = default;
};

struct TrainingConfig {
  double eta = 0.0;
  double eta2 = 0.0;
  std::int64_t T1 = -1;
  std::int64_t T = 0;
  double clip_level = 0.0;
  std::vector<double> lambdas;
  double noise_sd = 1.0;
  std::int64_t record_every = 0;
  bool rescaled_rate = false;
  int threads = 1;
  bool operator==(const TrainingConfig&) const = default;
};

struct OracleConfig {
  int d = 64;
  int s = 16;
  int instances = 20;
  std::int64_t samples = 1000000;
  bool operator==(const OracleConfig&) const = default;
};

struct OutputConfig {
  std::string name = "run";
  std::string dir = "runs";
  bool operator==(const OutputConfig&) const = default;
};

/// Fully resolved run configuration.
struct RunConfig {
  GeometryConfig geometry;
  RewardConfig reward;
  WeakConfig weak;
  StrongConfig strong;
  TrainingConfig training;
  OracleConfig oracle;
  OutputConfig output;
  bool operator==(const RunConfig&) const = default;

  void validate() const;
};

/// Reads INI text. Throws parse-error (with line) or validation-error
/// (naming the field); every default is resolved on return.
RunConfig parse_config(std::istream& is, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// A file path as given, or the name of a bundled config.
std::string resolve_config_path(const std::string& name_or_path);

/// Resolved config as INI; parse_config of the output gives the same config.
void write_config(std::ostream& os, const RunConfig& cfg);
std::string config_to_string(const RunConfig& cfg);

/// Link spec "he<j>" or a coefficient list, as a normalized PolySpec.
PolySpec parse_link(const std::string& spec);

TrainConfig make_train_config(const RunConfig& cfg, std::uint64_t seed);
MixtureSpec make_mixture(const RunConfig& cfg);

}  // namespace w2s
