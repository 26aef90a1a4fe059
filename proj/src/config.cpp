#include "w2s/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "w2s/error.hpp"
#include "w2s/reward.hpp"
#include "w2s/trace.hpp"

namespace w2s {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"geometry", {"d", "s", "K", "target", "overlap"}},
      {"reward", {"link", "pis"}},  // plus link1..linkK
      {"weak",
       {"kind", "neurons", "noise", "pipeline_neurons", "degree", "eta", "T1", "noise_sd", "eps_tilde", "T2", "lambda",
        "C_b", "holdout"}},
      {"strong",
       {"init", "sizes", "target_perturb", "offtarget_center", "offtarget_perturb", "activation", "theory_degree",
        "c_r"}},
      {"training",
       {"eta", "eta2", "T1", "T", "clip_level", "lambdas", "noise_sd", "record_every", "rescaled_rate", "threads"}},
      {"oracle", {"d", "s", "instances", "samples"}},
      {"output", {"name", "dir"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

Error invalid(const std::string& field, const std::string& what) {
  return Error(ErrorCode::ValidationError, field + ": " + what);
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(pt::ptree::path_type(key, '.')).has_value(); }

  std::string raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) throw invalid(key, "required field is missing");
    return trim(*v);
  }

  template <class T>
  T number(const std::string& key) const {
    const std::string s = raw(key);
    T out{};
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || p != end) throw invalid(key, "cannot parse '" + s + "' as a number");
    return out;
  }

  template <class T>
  T number(const std::string& key, T fallback) const {
    return has(key) ? number<T>(key) : fallback;
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = raw(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw invalid(key, "expected true or false, got '" + s + "'");
  }

  template <class T>
  std::vector<T> list(const std::string& key) const {
    std::string s = raw(key);
    for (char& c : s) {
      if (c == ',') c = ' ';
    }
    std::istringstream is(s);
    std::vector<T> out;
    std::string tok;
    while (is >> tok) {
      T v{};
      const auto* end = tok.data() + tok.size();
      auto [p, ec] = std::from_chars(tok.data(), end, v);
      if (ec != std::errc() || p != end) throw invalid(key, "cannot parse list entry '" + tok + "'");
      out.push_back(v);
    }
    if (out.empty()) throw invalid(key, "list is empty");
    return out;
  }

 private:
  const pt::ptree& tree_;
};

void check_known(const pt::ptree& tree) {
  const auto& keys = known_keys();
  for (const auto& [section, body] : tree) {
    auto it = keys.find(section);
    if (it == keys.end()) throw invalid(section, "unknown section");
    if (!body.data().empty() && body.empty()) throw invalid(section, "expected a section, found a bare key");
    for (const auto& [key, value] : body) {
      (void)value;
      if (it->second.count(key)) continue;
      if (section == "reward" && key.rfind("link", 0) == 0 && key.size() > 4) continue;
      throw invalid(section + "." + key, "unknown key");
    }
  }
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

PolySpec parse_link(const std::string& spec_in) {
  const std::string spec = trim(spec_in);
  if (spec.size() > 2 && (spec[0] == 'h' || spec[0] == 'H') && (spec[1] == 'e' || spec[1] == 'E')) {
    int j = 0;
    const auto* end = spec.data() + spec.size();
    auto [p, ec] = std::from_chars(spec.data() + 2, end, j);
    if (ec != std::errc() || p != end || j < 1) throw invalid("link", "bad Hermite link '" + spec + "'");
    return PolySpec::normalized(PolySpec::unit_hermite(j).coeffs());
  }
  std::istringstream is(spec);
  std::vector<double> c;
  std::string tok;
  while (is >> tok) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || p != end) throw invalid("link", "bad coefficient '" + tok + "'");
    c.push_back(v);
  }
  if (c.empty()) throw invalid("link", "empty link specification");
  return PolySpec::normalized(std::move(c));
}

void RunConfig::validate() const {
  const auto& g = geometry;
  if (g.d < 1) throw invalid("geometry.d", "must be positive");
  if (g.s < 1 || g.s > g.d) throw invalid("geometry.s", "must satisfy 1 <= s <= d");
  if (g.K < 1 || g.K > g.d) throw invalid("geometry.K", "must satisfy 1 <= K <= d");
  if (g.target < 1 || g.target > g.K) throw invalid("geometry.target", "must lie in 1..K");
  if (!(std::abs(g.overlap) <= 1.0)) throw invalid("geometry.overlap", "must lie in [-1, 1]");

  const auto K = static_cast<std::size_t>(g.K);
  if (reward.links.size() != K) throw invalid("reward.link", "need one link per task");
  for (const auto& l : reward.links) (void)parse_link(l);
  if (reward.pis.size() != K) throw invalid("reward.pis", "need one weight per task");
  double ss = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!(reward.pis[k] >= 0.0)) throw invalid("reward.pis", "weights must be nonnegative");
    if (k > 0 && reward.pis[k] > reward.pis[k - 1]) throw invalid("reward.pis", "weights must be nonincreasing");
    ss += reward.pis[k] * reward.pis[k];
  }
  if (std::abs(ss - 1.0) > 1e-12) throw invalid("reward.pis", "sum of squared weights must be 1");

  if (weak.neurons < 1) throw invalid("weak.neurons", "must be positive");
  if (!(weak.noise >= 0.0)) throw invalid("weak.noise", "must be nonnegative");
  if (weak.pipeline_neurons < 1) throw invalid("weak.pipeline_neurons", "must be positive");
  if (weak.degree < 1) throw invalid("weak.degree", "must be positive");
  if (!(weak.eta >= 0.0)) throw invalid("weak.eta", "must be nonnegative");
  if (weak.T1 < 0) throw invalid("weak.T1", "must be nonnegative");
  if (!(weak.noise_sd >= 0.0)) throw invalid("weak.noise_sd", "must be nonnegative");
  if (!(weak.eps_tilde > 0.0 && weak.eps_tilde < 0.5)) throw invalid("weak.eps_tilde", "must lie in (0, 0.5)");
  if (weak.T2 < 1) throw invalid("weak.T2", "must be positive");
  if (!(weak.lambda >= 0.0)) throw invalid("weak.lambda", "must be nonnegative");
  if (!(weak.C_b >= 0.0)) throw invalid("weak.C_b", "must be nonnegative");
  if (weak.holdout < 1) throw invalid("weak.holdout", "must be positive");

  if (strong.sizes.size() != K) throw invalid("strong.sizes", "need one group size per task");
  for (int n : strong.sizes) {
    if (n < 1) throw invalid("strong.sizes", "group sizes must be positive");
  }
  if (!(strong.target_perturb >= 0.0)) throw invalid("strong.target_perturb", "must be nonnegative");
  if (!(strong.offtarget_perturb >= 0.0)) throw invalid("strong.offtarget_perturb", "must be nonnegative");
  if (strong.theory_degree < 2) throw invalid("strong.theory_degree", "must be at least 2");
  if (!(strong.c_r > 0.0)) throw invalid("strong.c_r", "must be positive");

  const auto& t = training;
  if (!(t.eta >= 0.0)) throw invalid("training.eta", "must be nonnegative");
  if (!(t.eta2 >= 0.0)) throw invalid("training.eta2", "must be nonnegative");
  if (t.T < 1) throw invalid("training.T", "must be positive");
  if (!(t.clip_level > 0.0)) throw invalid("training.clip_level", "must be positive");
  if (t.lambdas.size() != K) throw invalid("training.lambdas", "need one mixture weight per task");
  double ls = 0.0;
  for (double l : t.lambdas) {
    if (!(l >= 0.0)) throw invalid("training.lambdas", "weights must be nonnegative");
    ls += l;
  }
  if (std::abs(ls - 1.0) > 1e-12) throw invalid("training.lambdas", "weights must sum to 1");
  if (!(t.noise_sd >= 0.0)) throw invalid("training.noise_sd", "must be nonnegative");
  if (t.record_every < 1) throw invalid("training.record_every", "must be positive");
  if (t.threads < 1) throw invalid("training.threads", "must be positive");

  if (oracle.d < 3) throw invalid("oracle.d", "must be at least 3");
  if (oracle.s < 2 || oracle.s > oracle.d) throw invalid("oracle.s", "must satisfy 2 <= s <= d");
  if (oracle.instances < 1) throw invalid("oracle.instances", "must be positive");
  if (oracle.samples < 2) throw invalid("oracle.samples", "must be at least 2");
  if (output.name.empty()) throw invalid("output.name", "must be nonempty");
}

RunConfig parse_config(std::istream& is, const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ParseError, source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  check_known(tree);
  const Reader r(tree);
  RunConfig c;

  c.geometry.d = r.number<int>("geometry.d");
  c.geometry.s = r.number<int>("geometry.s");
  c.geometry.K = r.number<int>("geometry.K");
  c.geometry.target = r.number<int>("geometry.target", 1);
  c.geometry.overlap = r.number<double>("geometry.overlap", 0.0);
  const int K = c.geometry.K;
  if (K < 1) throw invalid("geometry.K", "must be positive");

  const std::string shared_link = r.text("reward.link", "he4");
  for (int k = 1; k <= K; ++k) c.reward.links.push_back(r.text("reward.link" + std::to_string(k), shared_link));
  if (!r.has("reward.pis") || r.raw("reward.pis") == "equal") {
    c.reward.pis = equal_pis(K);
  } else {
    c.reward.pis = r.list<double>("reward.pis");
  }
  const std::size_t tgt = static_cast<std::size_t>(std::clamp(c.geometry.target, 1, K) - 1);
  const double pi_target = tgt < c.reward.pis.size() ? c.reward.pis[tgt] : 1.0;

  const std::string kind = r.text("weak.kind", "oracle");
  if (kind == "oracle") {
    c.weak.kind = WeakKind::Oracle;
  } else if (kind == "pipeline") {
    c.weak.kind = WeakKind::Pipeline;
  } else {
    throw invalid("weak.kind", "expected oracle or pipeline, got '" + kind + "'");
  }
  c.weak.neurons = r.number<int>("weak.neurons", 3);
  c.weak.noise = r.number<double>("weak.noise", 0.1);
  c.weak.pipeline_neurons = r.number<int>("weak.pipeline_neurons", 64);
  c.weak.degree = r.number<int>("weak.degree", 2);
  c.weak.eta = r.number<double>("weak.eta", 0.2 / c.geometry.d);
  c.weak.T1 = r.number<std::int64_t>("weak.T1", 200000);
  c.weak.noise_sd = r.number<double>("weak.noise_sd", pi_target);
  c.weak.eps_tilde = r.number<double>("weak.eps_tilde", 0.05);
  c.weak.T2 = r.number<std::int64_t>("weak.T2", 10000);
  c.weak.lambda = r.number<double>("weak.lambda", 1e-6);
  c.weak.C_b = r.number<double>("weak.C_b", 2.0);
  c.weak.holdout = r.number<std::int64_t>("weak.holdout", 10000);

  const std::string init = r.text("strong.init", "experiment");
  if (init == "experiment") {
    c.strong.init = StrongInitKind::Experiment;
  } else if (init == "theory") {
    c.strong.init = StrongInitKind::Theory;
  } else {
    throw invalid("strong.init", "expected experiment or theory, got '" + init + "'");
  }
  c.strong.sizes = r.list<int>("strong.sizes");
  c.strong.target_perturb = r.number<double>("strong.target_perturb", 0.1);
  const std::string center = r.text("strong.offtarget_center", "theta");
  if (center == "theta") {
    c.strong.offtarget_center = OffTargetCenter::Theta;
  } else if (center == "subspace") {
    c.strong.offtarget_center = OffTargetCenter::Subspace;
  } else {
    throw invalid("strong.offtarget_center", "expected theta or subspace, got '" + center + "'");
  }
  c.strong.offtarget_perturb = r.number<double>("strong.offtarget_perturb", 0.1);
  const std::string act = r.text("strong.activation", "normalized");
  if (act == "normalized") {
    c.strong.normalized_activation = true;
  } else if (act == "raw") {
    c.strong.normalized_activation = false;
  } else {
    throw invalid("strong.activation", "expected normalized or raw, got '" + act + "'");
  }
  c.strong.theory_degree = r.number<int>("strong.theory_degree", 4);
  c.strong.c_r = r.number<double>("strong.c_r", 0.1);

  c.training.eta = r.number<double>("training.eta");
  c.training.eta2 = r.number<double>("training.eta2", c.training.eta);
  c.training.T1 = r.number<std::int64_t>("training.T1", -1);
  c.training.T = r.number<std::int64_t>("training.T");
  if (!r.has("training.clip_level") || r.raw("training.clip_level") == "auto") {
    c.training.clip_level = default_clip_level(c.geometry.d);
  } else {
    c.training.clip_level = r.number<double>("training.clip_level");
  }
  if (r.has("training.lambdas")) {
    c.training.lambdas = r.list<double>("training.lambdas");
  } else {
    c.training.lambdas.assign(static_cast<std::size_t>(K), K > 1 ? 0.1 / (K - 1) : 1.0);
    if (K > 1) c.training.lambdas[tgt] = 0.9;
  }
  c.training.noise_sd = r.number<double>("training.noise_sd", 1.0);
  if (!r.has("training.record_every") || r.raw("training.record_every") == "auto") {
    c.training.record_every = default_record_every(c.training.T);
  } else {
    c.training.record_every = r.number<std::int64_t>("training.record_every");
  }
  c.training.rescaled_rate = r.flag("training.rescaled_rate", false);
  c.training.threads = r.number<int>("training.threads", 1);

  c.oracle.d = r.number<int>("oracle.d", 64);
  c.oracle.s = r.number<int>("oracle.s", 16);
  c.oracle.instances = r.number<int>("oracle.instances", 20);
  c.oracle.samples = r.number<std::int64_t>("oracle.samples", 1000000);

  c.output.name = r.text("output.name", "run");
  c.output.dir = r.text("output.dir", "runs");

  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read config " + path);
  return parse_config(is, path);
}

std::string resolve_config_path(const std::string& name_or_path) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(name_or_path)) return name_or_path;
  for (const fs::path& dir : {fs::path("configs"), fs::path(W2S_CONFIG_DIR)}) {
    for (const std::string& cand : {name_or_path, name_or_path + ".ini"}) {
      const fs::path p = dir / cand;
      if (fs::is_regular_file(p)) return p.string();
    }
  }
  throw Error(ErrorCode::Io, "no config file or bundled config named '" + name_or_path + "'");
}

void write_config(std::ostream& os, const RunConfig& c) {
  auto f = [](double v) { return format_double(v); };
  os << "[geometry]\n"
     << "d = " << c.geometry.d << "\n"
     << "s = " << c.geometry.s << "\n"
     << "K = " << c.geometry.K << "\n"
     << "target = " << c.geometry.target << "\n"
     << "overlap = " << f(c.geometry.overlap) << "\n\n";
  os << "[reward]\n";
  for (std::size_t k = 0; k < c.reward.links.size(); ++k) os << "link" << k + 1 << " = " << c.reward.links[k] << "\n";
  os << "pis = " << join(c.reward.pis) << "\n\n";
  os << "[weak]\n"
     << "kind = " << (c.weak.kind == WeakKind::Oracle ? "oracle" : "pipeline") << "\n"
     << "neurons = " << c.weak.neurons << "\n"
     << "noise = " << f(c.weak.noise) << "\n"
     << "pipeline_neurons = " << c.weak.pipeline_neurons << "\n"
     << "degree = " << c.weak.degree << "\n"
     << "eta = " << f(c.weak.eta) << "\n"
     << "T1 = " << c.weak.T1 << "\n"
     << "noise_sd = " << f(c.weak.noise_sd) << "\n"
     << "eps_tilde = " << f(c.weak.eps_tilde) << "\n"
     << "T2 = " << c.weak.T2 << "\n"
     << "lambda = " << f(c.weak.lambda) << "\n"
     << "C_b = " << f(c.weak.C_b) << "\n"
     << "holdout = " << c.weak.holdout << "\n\n";
  os << "[strong]\n"
     << "init = " << (c.strong.init == StrongInitKind::Experiment ? "experiment" : "theory") << "\n"
     << "sizes = " << join(c.strong.sizes) << "\n"
     << "target_perturb = " << f(c.strong.target_perturb) << "\n"
     << "offtarget_center = " << (c.strong.offtarget_center == OffTargetCenter::Theta ? "theta" : "subspace") << "\n"
     << "offtarget_perturb = " << f(c.strong.offtarget_perturb) << "\n"
     << "activation = " << (c.strong.normalized_activation ? "normalized" : "raw") << "\n"
     << "theory_degree = " << c.strong.theory_degree << "\n"
     << "c_r = " << f(c.strong.c_r) << "\n\n";
  os << "[training]\n"
     << "eta = " << f(c.training.eta) << "\n"
     << "eta2 = " << f(c.training.eta2) << "\n"
     << "T1 = " << c.training.T1 << "\n"
     << "T = " << c.training.T << "\n"
     << "clip_level = " << f(c.training.clip_level) << "\n"
     << "lambdas = " << join(c.training.lambdas) << "\n"
     << "noise_sd = " << f(c.training.noise_sd) << "\n"
     << "record_every = " << c.training.record_every << "\n"
     << "rescaled_rate = " << (c.training.rescaled_rate ? "true" : "false") << "\n"
     << "threads = " << c.training.threads << "\n\n";
  os << "[oracle]\n"
     << "d = " << c.oracle.d << "\n"
     << "s = " << c.oracle.s << "\n"
     << "instances = " << c.oracle.instances << "\n"
     << "samples = " << c.oracle.samples << "\n\n";
  os << "[output]\n"
     << "name = " << c.output.name << "\n"
     << "dir = " << c.output.dir << "\n";
}

std::string config_to_string(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

MixtureSpec make_mixture(const RunConfig& cfg) {
  MixtureSpec m;
  m.lambdas = cfg.training.lambdas;
  return m;
}

TrainConfig make_train_config(const RunConfig& cfg, std::uint64_t seed) {
  TrainConfig t;
  t.schedule.eta1 = cfg.training.eta;
  t.schedule.eta2 = cfg.training.eta2;
  t.schedule.T1 = cfg.training.T1;
  t.T = cfg.training.T;
  t.clip_level = cfg.training.clip_level;
  t.mixture = make_mixture(cfg);
  t.noise_sd = cfg.training.noise_sd;
  t.record_every = cfg.training.record_every;
  t.seed = seed;
  t.threads = cfg.training.threads;
  t.rescaled_rate = cfg.training.rescaled_rate;
  return t;
}

}  // namespace w2s
