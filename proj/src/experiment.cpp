#include "w2s/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "w2s/error.hpp"
#include "w2s/training.hpp"

namespace w2s {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + p.string());
  os << text;
  if (!os) throw Error(ErrorCode::Io, "write failed for " + p.string());
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::uint64_t derived_seed(std::uint64_t seed, Stream s, std::uint64_t index) { return Rng(seed, s, index).bits(); }

Vec random_unit(int d, Rng& rng) {
  Vec v = sample_isotropic(d, rng);
  return v / v.norm();
}

// c theta + sqrt(1 - c^2) u with u a unit vector orthogonal to theta,
// drawn from the span of `pool` columns (or all of R^d).
Vec correlated_unit(const Vec& theta, double c, Rng& rng, const Mat* pool) {
  Vec u;
  if (pool) {
    Vec g(pool->cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.gaussian();
    u = *pool * g;
  } else {
    u = sample_isotropic(static_cast<int>(theta.size()), rng);
  }
  u -= theta.dot(u) * theta;
  u /= u.norm();
  Vec w = c * theta + std::sqrt(1.0 - c * c) * u;
  return w / w.norm();
}

PolySpec random_link(Rng& rng, int degree) {
  std::vector<double> c(static_cast<std::size_t>(degree) + 1, 0.0);
  for (int j = 1; j <= degree; ++j) c[static_cast<std::size_t>(j)] = rng.gaussian();
  return PolySpec::normalized(std::move(c));
}

PolySpec he24(Rng& rng) {
  return PolySpec({0.0, 0.0, rng.sign(), 0.0, rng.sign()});
}

}  // namespace

Command parse_command(const std::string& name) {
  if (name == "w2s") return Command::W2S;
  if (name == "sft") return Command::SFT;
  if (name == "weak-pipeline") return Command::WeakPipeline;
  if (name == "oracle-check") return Command::OracleCheck;
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + name + "'");
}

std::string command_name(Command c) {
  switch (c) {
    case Command::W2S: return "w2s";
    case Command::SFT: return "sft";
    case Command::WeakPipeline: return "weak-pipeline";
    case Command::OracleCheck: return "oracle-check";
  }
  return "unknown";
}

Problem make_problem(const RunConfig& cfg, std::uint64_t seed) {
  Rng grng(seed, Stream::Geometry);
  const auto& g = cfg.geometry;
  Problem p;
  p.geom = std::make_shared<const TaskGeometry>(build_task_geometry(g.d, g.s, g.K, g.target - 1, g.overlap, grng));
  std::vector<PolySpec> links;
  for (const auto& l : cfg.reward.links) links.push_back(parse_link(l));
  p.rm = std::make_unique<RewardModel>(p.geom, std::move(links), cfg.reward.pis);
  return p;
}

TraceSummary summarize(const AlignmentTrace& trace, int s) {
  if (trace.rows.empty()) throw Error(ErrorCode::MalformedTrace, "trace has no rows");
  if (s < 1) throw Error(ErrorCode::InvalidArgument, "summarize: subspace dimension must be positive");
  TraceSummary sum;
  sum.terminal_step = trace.last_step();
  sum.recorded_steps = static_cast<int>(trace.steps().size());
  sum.init_threshold = 1.0 / std::sqrt(static_cast<double>(s));

  using Key = std::tuple<int, std::string, bool>;
  std::map<Key, std::vector<const TraceRow*>> groups;
  for (const auto& r : trace.rows) {
    if (r.step != sum.terminal_step) continue;
    groups[{r.task, r.sign_class, std::abs(r.init_align) >= sum.init_threshold}].push_back(&r);
  }
  for (const auto& [key, rows] : groups) {
    SummaryEntry e;
    std::tie(e.task, e.sign_class, e.favorable_init) = key;
    e.count = static_cast<int>(rows.size());
    std::vector<double> init, tgt, own;
    for (const auto* r : rows) {
      init.push_back(std::abs(r->init_align));
      tgt.push_back(std::abs(r->align_target));
      own.push_back(std::abs(r->align_own));
    }
    e.init_median = median(init);
    e.target_median = median(tgt);
    e.target_min = *std::min_element(tgt.begin(), tgt.end());
    e.target_max = *std::max_element(tgt.begin(), tgt.end());
    e.own_median = median(own);
    e.own_min = *std::min_element(own.begin(), own.end());
    e.own_max = *std::max_element(own.begin(), own.end());
    sum.entries.push_back(std::move(e));
  }
  std::set<int> tasks;
  for (const auto& r : trace.rows) tasks.insert(r.task);
  for (int k : tasks) {
    const auto series = median_over_time(
        trace, [k](const TraceRow& r) { return r.task == k; }, [](const TraceRow& r) { return std::abs(r.align_own); });
    double m = 1.0;
    for (const auto& sv : series) m = std::min(m, sv.value);
    sum.min_median_own.emplace_back(k, m);
  }
  return sum;
}

TraceSummary summarize(const std::string& trace_path, int s) { return summarize(read_trace_csv(trace_path), s); }

void write_summary_text(std::ostream& os, const TraceSummary& sum) {
  char buf[256];
  os << "terminal step " << sum.terminal_step << " (" << sum.recorded_steps << " recorded steps), init threshold "
     << format_double(sum.init_threshold) << "\n";
  os << "alignment magnitudes at the terminal step\n";
  std::snprintf(buf, sizeof(buf), "%-5s %-7s %-5s %6s %8s | %8s %8s %8s | %8s %8s %8s\n", "task", "class", "init",
                "count", "init_med", "tgt_med", "tgt_min", "tgt_max", "own_med", "own_min", "own_max");
  os << buf;
  for (const auto& e : sum.entries) {
    std::snprintf(buf, sizeof(buf), "%-5d %-7s %-5s %6d %8.4f | %8.4f %8.4f %8.4f | %8.4f %8.4f %8.4f\n", e.task + 1,
                  e.sign_class.c_str(), e.favorable_init ? "high" : "low", e.count, e.init_median, e.target_median,
                  e.target_min, e.target_max, e.own_median, e.own_min, e.own_max);
    os << buf;
  }
  for (const auto& [k, m] : sum.min_median_own) {
    os << "task " << k + 1 << ": smallest median |align_own| over recorded steps = " << format_double(m) << "\n";
  }
}

std::string summary_json(const TraceSummary& sum) {
  json j;
  j["terminal_step"] = sum.terminal_step;
  j["recorded_steps"] = sum.recorded_steps;
  j["init_threshold"] = sum.init_threshold;
  j["groups"] = json::array();
  for (const auto& e : sum.entries) {
    j["groups"].push_back({{"task", e.task + 1},
                           {"sign_class", e.sign_class},
                           {"init_above_threshold", e.favorable_init},
                           {"count", e.count},
                           {"init_median", e.init_median},
                           {"align_target", {{"median", e.target_median}, {"min", e.target_min}, {"max", e.target_max}}},
                           {"align_own", {{"median", e.own_median}, {"min", e.own_min}, {"max", e.own_max}}}});
  }
  j["min_median_align_own"] = json::object();
  for (const auto& [k, m] : sum.min_median_own) j["min_median_align_own"][std::to_string(k + 1)] = m;
  return j.dump(2) + "\n";
}

WeakPipelineResult run_weak_pipeline(const RunConfig& cfg, const RewardModel& rm, std::uint64_t seed,
                                     TraceSink* phase1_sink) {
  const TaskGeometry& geom = rm.geom();
  const int k = geom.target;
  const PolySpec observed = rm.link(k).scaled(rm.pi(k));
  WeakPipelineResult out;

  Rng init_rng(seed, Stream::Weak, 0);
  WeakInit wi = init_weak(geom, cfg.weak.pipeline_neurons, cfg.weak.degree, observed, init_rng);
  TwoLayerNet net = std::move(wi.net);
  out.phase1_neurons = net.total_neurons();

  if (cfg.weak.T1 > 0) {
    TrainConfig p1;
    p1.schedule.eta1 = cfg.weak.eta;
    p1.schedule.eta2 = cfg.weak.eta;
    p1.T = cfg.weak.T1;
    p1.noise_sd = cfg.weak.noise_sd;
    p1.record_every = default_record_every(cfg.weak.T1);
    p1.seed = derived_seed(seed, Stream::Weak, 1);
    p1.threads = cfg.training.threads;
    AlignmentTrace& mem = out.phase1_trace;
    std::vector<TraceSink*> sinks{&mem};
    if (phase1_sink) sinks.push_back(phase1_sink);
    TeeSink tee(sinks);
    weak_train_phase1(net, rm, p1, tee, weak_labels(rm));
  }

  FilterResult fr = weak_filter_neurons(net, cfg.weak.eps_tilde);
  out.theta_hat = fr.theta_hat;
  out.theta_hat_alignment = std::abs(fr.theta_hat.dot(geom.theta(k)));
  out.kept = fr.kept;
  out.filter_iterations = fr.iterations;
  out.min_kept_true_alignment = 1.0;
  const Mat& W = fr.net.groups.front().W;
  for (Eigen::Index n = 0; n < W.cols(); ++n) {
    out.min_kept_true_alignment = std::min(out.min_kept_true_alignment, std::abs(geom.theta(k).dot(W.col(n))));
  }

  Rng p3(seed, Stream::Weak, 2);
  const SecondLayerFit fit = weak_train_second_layer(fr.net, rm, cfg.weak.T2, cfg.weak.lambda, cfg.weak.C_b, p3);
  out.lambda = fit.lambda;
  Rng hold(seed, Stream::Holdout);
  out.holdout_mae = heldout_mae(fr.net, rm, cfg.weak.holdout, hold);
  out.net = std::move(fr.net);
  return out;
}

TwoLayerNet build_weak_teacher(const RunConfig& cfg, const RewardModel& rm, std::uint64_t seed) {
  if (cfg.weak.kind == WeakKind::Pipeline) return run_weak_pipeline(cfg, rm, seed).net;
  Rng rng(seed, Stream::Weak);
  return init_weak_oracle(rm, cfg.weak.neurons, cfg.weak.noise, rng);
}

TwoLayerNet build_strong(const RunConfig& cfg, const RewardModel& rm, std::uint64_t seed) {
  Rng rng(seed, Stream::Init);
  StrongInitOptions opt;
  opt.target_perturb = cfg.strong.target_perturb;
  opt.offtarget_center = cfg.strong.offtarget_center;
  opt.offtarget_perturb = cfg.strong.offtarget_perturb;
  opt.normalized_activation = cfg.strong.normalized_activation;
  if (cfg.strong.init == StrongInitKind::Theory) {
    return init_strong_theory(rm.geom(), cfg.strong.sizes, cfg.strong.theory_degree, rm.pis(), rng, cfg.strong.c_r,
                              opt);
  }
  return init_strong_experiment(rm.geom(), cfg.strong.sizes, rng, opt);
}

OracleCheckResult run_oracle_check(const RunConfig& cfg, std::uint64_t seed, std::ostream* log) {
  OracleCheckResult res;
  res.instances = cfg.oracle.instances;
  res.samples = cfg.oracle.samples;
  const int d = cfg.oracle.d;
  const int s = cfg.oracle.s;
  char buf[256];
  for (int i = 0; i < cfg.oracle.instances; ++i) {
    Rng rng(seed, Stream::Oracle, static_cast<std::uint64_t>(i));

    // Isotropic lemma: random theta, correlated w, random sign pattern and bias.
    const Vec theta = random_unit(d, rng);
    Neuron n;
    n.w = correlated_unit(theta, rng.uniform(-1.0, 1.0), rng, nullptr);
    n.a = rng.sign();
    n.b = rng.uniform(-0.5, 0.5);
    n.activation = he24(rng);
    const PolySpec link = i % 2 == 0 ? PolySpec::normalized(PolySpec::unit_hermite(4).coeffs()) : random_link(rng, 4);
    const OracleResult weak = expected_gradient_oracle(n, theta, link, cfg.oracle.samples, rng);

    // Transformed-teacher lemma under idealized conditions: lambda_kappa = 1,
    // exact teacher, w inside V_kappa.
    Rng grng(seed, Stream::Geometry, static_cast<std::uint64_t>(i));
    const TaskGeometry geom = build_task_geometry(d, s, 2, 0, 0.3, grng);
    const PolySpec sigma = PolySpec::normalized(PolySpec::unit_hermite(4).coeffs());
    W2sOracleTeacher teacher;
    teacher.link = sigma.scaled(1.0 / std::sqrt(2.0));
    teacher.rho = 1.0;
    Neuron sn;
    sn.w = correlated_unit(geom.theta(0), rng.uniform(-1.0, 1.0), rng, &geom.basis(0));
    sn.a = rng.sign();
    sn.b = 0.0;
    sn.activation = he24(rng);
    MixtureSpec mix{{1.0, 0.0}};
    const OracleResult strong =
        w2s_gradient_oracle(sn, teacher, geom, mix, default_clip_level(d), cfg.oracle.samples, rng);

    res.weak_max = std::max(res.weak_max, weak.max_std_dev);
    res.strong_max = std::max(res.strong_max, strong.max_std_dev);
    res.max_coord_weak = std::max(res.max_coord_weak, weak.max_coord_z);
    res.max_coord_strong = std::max(res.max_coord_strong, strong.max_coord_z);
    if (log) {
      std::snprintf(buf, sizeof(buf),
                    "instance %2d  isotropic z=(%+.2f, %+.2f, rest %+.2f/%d)  transformed z=(%+.2f, %+.2f, rest "
                    "%+.2f/%d)\n",
                    i, weak.z_theta, weak.z_w, weak.z_rest, weak.rest_dof, strong.z_theta, strong.z_w, strong.z_rest,
                    strong.rest_dof);
      *log << buf;
    }
  }
  return res;
}

namespace {

struct RunContext {
  Command cmd;
  const RunConfig& cfg;
  std::uint64_t seed;
  fs::path dir;
  std::ostream* log;
  json manifest;
};

void finish_strong_run(RunContext& ctx, const Problem& p, const TwoLayerNet& net, const AlignmentTrace& mem,
                       const std::string& extra) {
  save_network((ctx.dir / "final.net").string(), net, geometry_hash(*p.geom));
  const TraceSummary sum = summarize(mem, ctx.cfg.geometry.s);
  std::ostringstream text;
  text << command_name(ctx.cmd) << " run '" << ctx.cfg.output.name << "', seed " << ctx.seed << "\n" << extra;
  write_summary_text(text, sum);
  write_text(ctx.dir / "summary", text.str());
  write_text(ctx.dir / "summary.json", summary_json(sum));
  if (ctx.log) *ctx.log << text.str();
}

int execute(RunContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (ctx.cmd == Command::OracleCheck) {
    const OracleCheckResult r = run_oracle_check(cfg, ctx.seed, ctx.log);
    std::ostringstream text;
    text << "oracle-check: " << r.instances << " instances at d=" << cfg.oracle.d << ", " << r.samples << " samples\n"
         << "isotropic lemma max standardized deviation: " << format_double(r.weak_max) << "\n"
         << "transformed-teacher lemma max standardized deviation: " << format_double(r.strong_max) << "\n"
         << "largest single-axis |z| (isotropic, transformed): " << format_double(r.max_coord_weak) << ", "
         << format_double(r.max_coord_strong) << "\n"
         << "max standardized deviation: " << format_double(r.overall()) << (r.overall() <= 4.0 ? " (ok)" : " (exceeds 4)")
         << "\n";
    write_text(ctx.dir / "summary", text.str());
    json j = {{"instances", r.instances},      {"samples", r.samples},
              {"isotropic_max", r.weak_max},   {"transformed_max", r.strong_max},
              {"max_std_dev", r.overall()},    {"max_coord_isotropic", r.max_coord_weak},
              {"max_coord_transformed", r.max_coord_strong}};
    write_text(ctx.dir / "summary.json", j.dump(2) + "\n");
    ctx.manifest["outputs"] = {{"summary", "summary"}, {"summary_json", "summary.json"}};
    if (ctx.log) *ctx.log << text.str();
    return r.overall() <= 4.0 ? 0 : 3;
  }

  const Problem p = make_problem(cfg, ctx.seed);
  ctx.manifest["geometry_hash"] = geometry_hash(*p.geom);
  const std::string trace_path = (ctx.dir / "trace.csv").string();
  ctx.manifest["outputs"] = {{"manifest", "manifest"},
                             {"trace", "trace.csv"},
                             {"network", "final.net"},
                             {"summary", "summary"},
                             {"summary_json", "summary.json"}};

  if (ctx.cmd == Command::WeakPipeline) {
    CsvTraceWriter csv(trace_path);
    const WeakPipelineResult r = run_weak_pipeline(cfg, *p.rm, ctx.seed, &csv);
    csv.close();
    save_network((ctx.dir / "final.net").string(), r.net, geometry_hash(*p.geom));
    std::ostringstream text;
    text << "weak-pipeline run '" << cfg.output.name << "', seed " << ctx.seed << "\n"
         << "phase I neurons: " << r.phase1_neurons << "\n"
         << "filter: kept " << r.kept.size() << " of " << r.phase1_neurons << " after " << r.filter_iterations
         << " power iterations\n"
         << "|theta_hat^T theta|: " << format_double(r.theta_hat_alignment) << "\n"
         << "smallest true |theta^T w| among kept: " << format_double(r.min_kept_true_alignment) << " (threshold "
         << format_double(1.0 - 2.0 * cfg.weak.eps_tilde) << ")\n"
         << "ridge lambda: " << format_double(r.lambda) << "\n"
         << "held-out MAE: " << format_double(r.holdout_mae) << " ("
         << format_double(r.holdout_mae / p.rm->pi(p.rm->target())) << " x pi_kappa)\n";
    if (!r.phase1_trace.rows.empty()) write_summary_text(text, summarize(r.phase1_trace, cfg.geometry.s));
    write_text(ctx.dir / "summary", text.str());
    json j = {{"phase1_neurons", r.phase1_neurons},
              {"kept", r.kept.size()},
              {"filter_iterations", r.filter_iterations},
              {"theta_hat_alignment", r.theta_hat_alignment},
              {"min_kept_true_alignment", r.min_kept_true_alignment},
              {"lambda", r.lambda},
              {"holdout_mae", r.holdout_mae}};
    write_text(ctx.dir / "summary.json", j.dump(2) + "\n");
    if (ctx.log) *ctx.log << text.str();
    return 0;
  }

  TwoLayerNet net = build_strong(cfg, *p.rm, ctx.seed);
  const TrainConfig tc = make_train_config(cfg, derived_seed(ctx.seed, Stream::Data, 0));
  AlignmentTrace mem;
  CsvTraceWriter csv(trace_path);
  TeeSink tee({&mem, &csv});
  std::string extra;
  if (ctx.cmd == Command::W2S) {
    const TwoLayerNet weak = build_weak_teacher(cfg, *p.rm, ctx.seed);
    char buf[160];
    Rng hold(ctx.seed, Stream::Holdout);
    std::snprintf(buf, sizeof(buf), "weak teacher: %d neurons, held-out MAE %.4g\n", weak.total_neurons(),
                  heldout_mae(weak, *p.rm, 10000, hold));
    extra = buf;
    w2s_train(net, weak, *p.rm, tc, tee, w2s_labels(*p.rm, tc.clip_level));
  } else {
    sft_train(net, *p.rm, tc, tee, sft_labels(*p.rm));
  }
  csv.close();
  finish_strong_run(ctx, p, net, mem, extra);
  return 0;
}

}  // namespace

int run(Command cmd, const RunConfig& cfg_in, std::uint64_t seed, const std::string& out_dir, const RunOverrides& ov,
        std::ostream* log) {
  RunConfig cfg = cfg_in;
  if (ov.threads) cfg.training.threads = *ov.threads;
  if (ov.record_every) cfg.training.record_every = *ov.record_every;
  if (ov.samples) cfg.oracle.samples = *ov.samples;
  cfg.validate();

  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir + ": " + ec.message());

  RunContext ctx{cmd, cfg, seed, dir, log, json::object()};
  auto& m = ctx.manifest;
  m["format"] = "w2s-run-manifest";
  m["version"] = kVersionTag;
  m["command"] = command_name(cmd);
  m["seed"] = seed;
  m["threads"] = cfg.training.threads;
  m["streams"] = json::object();
  for (Stream s : {Stream::Geometry, Stream::Init, Stream::Data, Stream::Weak, Stream::Oracle, Stream::Holdout}) {
    m["streams"][std::string(stream_name(s))] = static_cast<std::uint64_t>(s);
  }
  m["config"] = config_to_string(cfg);
  m["started"] = utc_now();

  int status = 0;
  try {
    status = execute(ctx);
    m["status"] = status == 0 ? "ok" : "check-failed";
  } catch (const Error& e) {
    m["status"] = "failed";
    m["error"] = e.what();
    m["finished"] = utc_now();
    write_text(dir / "manifest", m.dump(2) + "\n");
    if (log) *log << "error: " << e.what() << "\n";
    return 2;
  }
  m["finished"] = utc_now();
  write_text(dir / "manifest", m.dump(2) + "\n");
  return status;
}

int replay(const std::string& manifest_path, const std::string& out_dir, const RunOverrides& ov, std::ostream* log) {
  json m;
  try {
    m = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path + ": " + e.what());
  }
  if (m.value("format", "") != "w2s-run-manifest") {
    throw Error(ErrorCode::ParseError, manifest_path + ": not a run manifest");
  }
  try {
    std::istringstream cfg_text(m.at("config").get<std::string>());
    const RunConfig cfg = parse_config(cfg_text, manifest_path + " (config)");
    const Command cmd = parse_command(m.at("command").get<std::string>());
    const auto seed = m.at("seed").get<std::uint64_t>();
    return run(cmd, cfg, seed, out_dir, ov, log);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path + ": " + e.what());
  }
}

}  // namespace w2s
