// Command-line front end: runs, replays and summarizes experiments.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "w2s/config.hpp"
#include "w2s/error.hpp"
#include "w2s/experiment.hpp"

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v && *v) return std::string(v);
  return std::nullopt;
}

struct RunArgs {
  std::string config_name;
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out;
  std::optional<int> threads;
  std::optional<std::int64_t> record_every;
  std::optional<std::int64_t> samples;
};

void add_run_options(CLI::App* sub, RunArgs& a, bool with_config) {
  if (with_config) {
    sub->add_option("name", a.config_name, "Bundled config name or config file");
    sub->add_option("--config", a.config_path, "Config file");
  }
  sub->add_option("--seed", a.seed, "Run seed");
  sub->add_option("--out", a.out, "Output directory (env W2S_OUT_DIR)");
  sub->add_option("--threads", a.threads, "Worker threads (env W2S_THREADS)")->check(CLI::PositiveNumber);
  sub->add_option("--record-every", a.record_every, "Trace cadence in steps")->check(CLI::PositiveNumber);
  sub->add_option("--samples", a.samples, "Monte-Carlo samples for oracle-check")->check(CLI::PositiveNumber);
}

w2s::RunOverrides overrides(const RunArgs& a) {
  w2s::RunOverrides ov;
  ov.threads = a.threads;
  if (!ov.threads) {
    if (auto t = env("W2S_THREADS")) ov.threads = std::stoi(*t);
  }
  ov.record_every = a.record_every;
  ov.samples = a.samples;
  return ov;
}

std::string out_dir(const RunArgs& a, const w2s::RunConfig& cfg, const std::string& cmd) {
  if (!a.out.empty()) return a.out;
  if (auto e = env("W2S_OUT_DIR")) return *e;
  return (std::filesystem::path(cfg.output.dir) / (cfg.output.name + "-" + cmd + "-seed" + std::to_string(a.seed)))
      .string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-to-strong feature learning simulations"};
  app.require_subcommand(1);

  RunArgs ra;
  std::map<std::string, CLI::App*> runs;
  for (const char* name : {"w2s", "sft", "weak-pipeline", "oracle-check"}) {
    runs[name] = app.add_subcommand(name, std::string("Run the ") + name + " command");
    add_run_options(runs[name], ra, true);
  }

  std::string trace_path;
  std::optional<int> sum_s;
  bool sum_json = false;
  auto* sum = app.add_subcommand("summarize", "Summarize a trace CSV");
  sum->add_option("trace", trace_path, "trace.csv path")->required();
  sum->add_option("--s", sum_s, "Subspace dimension (read from the neighbouring manifest when omitted)");
  sum->add_flag("--json", sum_json, "Print JSON instead of the table");

  std::string manifest_path;
  auto* rep = app.add_subcommand("replay", "Rerun a manifest");
  rep->add_option("manifest", manifest_path, "manifest path")->required();
  add_run_options(rep, ra, false);

  std::string echo_name;
  auto* echo = app.add_subcommand("config", "Print the resolved configuration");
  echo->add_option("name", echo_name, "Bundled config name or config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*echo) {
      w2s::write_config(std::cout, w2s::load_config(w2s::resolve_config_path(echo_name)));
      return 0;
    }
    if (*sum) {
      int s = 0;
      if (sum_s) {
        s = *sum_s;
      } else {
        const auto mpath = std::filesystem::path(trace_path).parent_path() / "manifest";
        std::ifstream is(mpath);
        if (!is) throw w2s::Error(w2s::ErrorCode::InvalidArgument, "pass --s or keep the run manifest next to the trace");
        const auto m = nlohmann::json::parse(is);
        std::istringstream cfg(m.at("config").get<std::string>());
        s = w2s::parse_config(cfg).geometry.s;
      }
      const auto table = w2s::summarize(trace_path, s);
      if (sum_json) {
        std::cout << w2s::summary_json(table);
      } else {
        w2s::write_summary_text(std::cout, table);
      }
      return 0;
    }
    if (*rep) {
      const std::string out = !ra.out.empty() ? ra.out : env("W2S_OUT_DIR").value_or("replay");
      return w2s::replay(manifest_path, out, overrides(ra), &std::cout);
    }
    for (const auto& [name, sub] : runs) {
      if (!*sub) continue;
      std::string path = !ra.config_path.empty() ? ra.config_path : ra.config_name;
      if (path.empty() && name == "oracle-check") path = "oracle";
      if (path.empty()) throw w2s::Error(w2s::ErrorCode::InvalidArgument, "a config name or --config is required");
      const w2s::RunConfig cfg = w2s::load_config(w2s::resolve_config_path(path));
      return w2s::run(w2s::parse_command(name), cfg, ra.seed, out_dir(ra, cfg, name), overrides(ra), &std::cout);
    }
  } catch (const w2s::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
