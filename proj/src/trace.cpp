#include "w2s/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>

#include "w2s/error.hpp"

namespace w2s {

std::vector<std::int64_t> AlignmentTrace::steps() const {
  std::vector<std::int64_t> out;
  for (const auto& r : rows) {
    if (out.empty() || out.back() != r.step) out.push_back(r.step);
  }
  return out;
}

std::vector<TraceRow> AlignmentTrace::at_step(std::int64_t step) const {
  std::vector<TraceRow> out;
  for (const auto& r : rows) {
    if (r.step == step) out.push_back(r);
  }
  return out;
}

std::int64_t AlignmentTrace::last_step() const {
  if (rows.empty()) throw Error(ErrorCode::MalformedTrace, "trace is empty");
  return rows.back().step;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

// RFC 4180 quoting; W2S classes such as "(+,-)" contain a comma.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_row(std::ostream& os, const TraceRow& r) {
  os << r.step << ',' << r.task + 1 << ',' << r.neuron << ',' << format_double(r.align_target) << ','
     << format_double(r.align_own) << ',' << format_double(r.perp_sq) << ',' << format_double(r.overlap_sq) << ','
     << csv_field(r.sign_class) << ',' << format_double(r.init_align) << '\n';
}

// Splits one record, unquoting quoted fields. Returns false on a stray quote.
bool split(std::string_view line, std::vector<std::string>& out) {
  out.assign(1, std::string());
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c != '"') {
        out.back() += c;
      } else if (i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else {
        quoted = false;
      }
    } else if (c == ',') {
      out.emplace_back();
      was_quoted = false;
    } else if (c == '"') {
      if (!out.back().empty() || was_quoted) return false;
      quoted = was_quoted = true;
    } else {
      if (was_quoted) return false;
      out.back() += c;
    }
  }
  return !quoted;
}

template <class T>
bool parse_int(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

}  // namespace

CsvTraceWriter::CsvTraceWriter(const std::string& path) : os_(path, std::ios::binary), path_(path) {
  if (!os_) throw Error(ErrorCode::Io, "cannot write " + path);
  os_ << kTraceHeader << '\n';
}

void CsvTraceWriter::write(std::span<const TraceRow> rows) {
  for (const auto& r : rows) write_row(os_, r);
  if (!os_) throw Error(ErrorCode::Io, "write failed for " + path_);
}

void CsvTraceWriter::close() {
  os_.close();
  if (!os_) throw Error(ErrorCode::Io, "close failed for " + path_);
}

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows, bool header) {
  if (header) os << kTraceHeader << '\n';
  for (const auto& r : rows) write_row(os, r);
}

void write_trace_csv(const std::string& path, const AlignmentTrace& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  write_trace_csv(os, trace.rows);
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

AlignmentTrace read_trace_csv(std::istream& is) {
  AlignmentTrace t;
  std::string line;
  std::vector<std::string> f;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::MalformedTrace, "line " + std::to_string(lineno) + ": " + what);
  };
  if (!std::getline(is, line)) {
    lineno = 1;
    throw fail("missing header");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw fail("unexpected header");
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!split(line, f)) throw fail("unbalanced quote");
    if (f.size() != 9) throw fail("expected 9 fields, found " + std::to_string(f.size()));
    TraceRow r;
    int task1 = 0;
    if (!parse_int(f[0], r.step)) throw fail("bad step");
    if (!parse_int(f[1], task1) || task1 < 1) throw fail("bad task");
    r.task = task1 - 1;
    if (!parse_int(f[2], r.neuron) || r.neuron < 0) throw fail("bad neuron");
    if (!parse_double(f[3], r.align_target) || !parse_double(f[4], r.align_own) || !parse_double(f[5], r.perp_sq) ||
        !parse_double(f[6], r.overlap_sq) || !parse_double(f[8], r.init_align)) {
      throw fail("bad numeric field");
    }
    r.sign_class = f[7];
    if (!t.rows.empty() && r.step < t.rows.back().step) throw fail("steps out of order");
    t.rows.push_back(std::move(r));
  }
  return t;
}

AlignmentTrace read_trace_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  return read_trace_csv(is);
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::vector<StepValue> median_over_time(const AlignmentTrace& trace, const std::function<bool(const TraceRow&)>& keep,
                                        const std::function<double(const TraceRow&)>& value) {
  std::vector<StepValue> out;
  std::vector<double> buf;
  std::size_t i = 0;
  while (i < trace.rows.size()) {
    const std::int64_t step = trace.rows[i].step;
    buf.clear();
    for (; i < trace.rows.size() && trace.rows[i].step == step; ++i) {
      if (keep(trace.rows[i])) buf.push_back(value(trace.rows[i]));
    }
    if (!buf.empty()) out.push_back({step, median(buf), static_cast<int>(buf.size())});
  }
  return out;
}

}  // namespace w2s
