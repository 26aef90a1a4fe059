#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace w2s {

/// One neuron at one recorded step. `task` and `neuron` are zero-based in
/// memory and one-based / zero-based respectively in the CSV.
struct TraceRow {
  std::int64_t step = 0;
  int task = 0;
  int neuron = 0;
  double align_target = 0.0;  // theta_target^T w
  double align_own = 0.0;     // theta_task^T w
  double perp_sq = 0.0;       // ||Sigma_target^perp w||^2
  double overlap_sq = 0.0;    // ||Sigma_target w||^2
  std::string sign_class;
  double init_align = 0.0;    // theta_task^T w at step 0

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

inline constexpr char kTraceHeader[] =
    "step,task,neuron,align_target,align_own,perp_sq,overlap_sq,sign_class,init_align";

/// Receives the rows of each recorded step, in step order.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void write(std::span<const TraceRow> rows) = 0;
};

/// In-memory trace.
struct AlignmentTrace final : TraceSink {
  std::vector<TraceRow> rows;

  void write(std::span<const TraceRow> r) override { rows.insert(rows.end(), r.begin(), r.end()); }

  /// Distinct recorded steps in order.
  std::vector<std::int64_t> steps() const;
  /// Rows at one step.
  std::vector<TraceRow> at_step(std::int64_t step) const;
  std::int64_t last_step() const;
};

/// Streams rows to a CSV file as they are recorded.
class CsvTraceWriter final : public TraceSink {
 public:
  explicit CsvTraceWriter(const std::string& path);
  void write(std::span<const TraceRow> rows) override;
  void close();

 private:
  std::ofstream os_;
  std::string path_;
};

/// Forwards to several sinks.
class TeeSink final : public TraceSink {
 public:
  explicit TeeSink(std::vector<TraceSink*> sinks) : sinks_(std::move(sinks)) {}
  void write(std::span<const TraceRow> rows) override {
    for (auto* s : sinks_) s->write(rows);
  }

 private:
  std::vector<TraceSink*> sinks_;
};

/// "%.17g" formatting used for every float in CSV output.
std::string format_double(double v);

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows, bool header = true);
void write_trace_csv(const std::string& path, const AlignmentTrace& trace);

/// Parses a trace CSV. Throws malformed-trace with the line number.
AlignmentTrace read_trace_csv(std::istream& is);
AlignmentTrace read_trace_csv(const std::string& path);

double median(std::vector<double> v);

/// Median of value(row) over rows passing keep(row), per recorded step.
struct StepValue {
  std::int64_t step;
  double value;
  int count;
};
std::vector<StepValue> median_over_time(const AlignmentTrace& trace, const std::function<bool(const TraceRow&)>& keep,
                                        const std::function<double(const TraceRow&)>& value);

}  // namespace w2s
