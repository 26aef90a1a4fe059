#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "w2s/config.hpp"
#include "w2s/geometry.hpp"
#include "w2s/networks.hpp"
#include "w2s/reward.hpp"
#include "w2s/trace.hpp"

namespace w2s {

inline constexpr char kVersionTag[] = "w2s-1.0.0";

enum class Command { W2S, SFT, WeakPipeline, OracleCheck };

Command parse_command(const std::string& name);
std::string command_name(Command c);

/// Command-line overrides applied on top of the config.
struct RunOverrides {
  std::optional<int> threads;
  std::optional<std::int64_t> record_every;
  std::optional<std::int64_t> samples;
};

/// Geometry and reward model shared by every command.
struct Problem {
  std::shared_ptr<const TaskGeometry> geom;
  std::unique_ptr<RewardModel> rm;
};

Problem make_problem(const RunConfig& cfg, std::uint64_t seed);

/// Per-group terminal statistics of one summary key.
struct SummaryEntry {
  int task = 0;  // zero-based
  std::string sign_class;
  bool favorable_init = false;  // |init_align| >= s^{-1/2}
  int count = 0;
  double init_median = 0.0;
  double target_median = 0.0, target_min = 0.0, target_max = 0.0;
  double own_median = 0.0, own_min = 0.0, own_max = 0.0;
};

/// Magnitude of each alignment (the sign of w is arbitrary for even activations).
struct TraceSummary {
  std::int64_t terminal_step = 0;
  int recorded_steps = 0;
  double init_threshold = 0.0;
  std::vector<SummaryEntry> entries;
  /// Per task: smallest median |align_own| over recorded steps.
  std::vector<std::pair<int, double>> min_median_own;
};

TraceSummary summarize(const AlignmentTrace& trace, int s);
TraceSummary summarize(const std::string& trace_path, int s);
void write_summary_text(std::ostream& os, const TraceSummary& sum);
std::string summary_json(const TraceSummary& sum);

/// Result of the weak pipeline.
struct WeakPipelineResult {
  TwoLayerNet net;
  AlignmentTrace phase1_trace;
  Vec theta_hat;
  double theta_hat_alignment = 0.0;  // |theta_hat^T theta_kappa|
  int phase1_neurons = 0;
  std::vector<int> kept;
  double min_kept_true_alignment = 0.0;
  int filter_iterations = 0;
  double holdout_mae = 0.0;
  double lambda = 0.0;
};

WeakPipelineResult run_weak_pipeline(const RunConfig& cfg, const RewardModel& rm, std::uint64_t seed,
                                     TraceSink* phase1_sink = nullptr);

/// The frozen weak teacher used by the w2s command.
TwoLayerNet build_weak_teacher(const RunConfig& cfg, const RewardModel& rm, std::uint64_t seed);

TwoLayerNet build_strong(const RunConfig& cfg, const RewardModel& rm, std::uint64_t seed);

struct OracleCheckResult {
  int instances = 0;
  std::int64_t samples = 0;
  double weak_max = 0.0;    // max standardized deviation, isotropic lemma
  double strong_max = 0.0;  // max standardized deviation, transformed-teacher lemma
  double max_coord_weak = 0.0;
  double max_coord_strong = 0.0;
  double overall() const { return std::max(weak_max, strong_max); }
};

OracleCheckResult run_oracle_check(const RunConfig& cfg, std::uint64_t seed, std::ostream* log = nullptr);

/// Runs a command and writes manifest, trace.csv, final.net and summary into
/// out_dir. Returns the process exit status.
int run(Command cmd, const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
        const RunOverrides& ov = {}, std::ostream* log = nullptr);

/// Reruns a manifest into out_dir (thread count may be overridden).
int replay(const std::string& manifest_path, const std::string& out_dir, const RunOverrides& ov = {},
           std::ostream* log = nullptr);

}  // namespace w2s
