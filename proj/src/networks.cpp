#include "w2s/networks.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "w2s/error.hpp"

namespace w2s {

namespace {

constexpr char kSnapshotTag[] = "w2s-network";
constexpr int kSnapshotVersion = 1;

Vec unit(const Vec& v) {
  const double n = v.norm();
  if (!(n > 1e-300)) throw Error(ErrorCode::DegenerateStep, "cannot normalize a zero vector");
  return v / n;
}

double sqrt_factorial(int j) {
  double v = 1.0;
  for (int k = 2; k <= j; ++k) v *= std::sqrt(static_cast<double>(k));
  return v;
}

// Raw He_j coefficient c maps to normalized coefficient c sqrt(j!).
PolySpec from_raw_hermite(const std::vector<double>& raw) {
  std::vector<double> c(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) c[j] = raw[j] * sqrt_factorial(static_cast<int>(j));
  return PolySpec(std::move(c));
}

PolySpec he24_activation(double e2, double e4, bool normalized) {
  // Normalized: e2 He2/sqrt(2) + e4 He4/sqrt(24); raw: e2 He2 + e4 He4.
  if (normalized) return PolySpec({0.0, 0.0, e2, 0.0, e4});
  return from_raw_hermite({0.0, 0.0, e2, 0.0, e4});
}

void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

Vec target_direction(const TaskGeometry& geom, int k, Rng& rng, double perturb) {
  // Uniform on S cap V_k plus a Sigma_perp Gaussian scaled by perturb / sqrt(d - s).
  Vec u = sample_sphere_subspace(geom, k, rng);
  if (perturb > 0.0 && geom.d > geom.s) {
    Vec g = sample_isotropic(geom.d, rng);
    Vec perp = project_perp(geom, k, g);
    u += perp * (perturb / std::sqrt(static_cast<double>(geom.d - geom.s)));
  }
  return unit(u);
}

Vec offtarget_direction(const TaskGeometry& geom, int k, Rng& rng, const StrongInitOptions& opt) {
  Vec c = opt.offtarget_center == OffTargetCenter::Theta ? Vec(geom.theta(k)) : sample_sphere_subspace(geom, k, rng);
  if (opt.offtarget_perturb > 0.0) {
    Vec g = sample_isotropic(geom.d, rng);
    c += g * (opt.offtarget_perturb / std::sqrt(static_cast<double>(geom.d)));
  }
  return unit(c);
}

void check_sizes(const TaskGeometry& geom, const std::vector<int>& Ns) {
  if (static_cast<int>(Ns.size()) != geom.K) {
    throw Error(ErrorCode::ValidationError, "need one group size per task");
  }
  for (int n : Ns) {
    if (n < 1) throw Error(ErrorCode::ValidationError, "group sizes must be positive");
  }
}

}  // namespace

Neuron NeuronGroup::neuron(int n) const {
  Neuron out;
  const auto i = static_cast<std::size_t>(n);
  out.a = a.at(i);
  out.b = b.at(i);
  out.w = W.col(n);
  out.activation = activation.at(i);
  return out;
}

void NeuronGroup::set_activation(int n, PolySpec act) {
  const auto i = static_cast<std::size_t>(n);
  activation_deriv.at(i) = act.derivative();
  activation.at(i) = std::move(act);
}

int TwoLayerNet::total_neurons() const {
  int n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

void TwoLayerNet::validate() const {
  if (groups.empty()) throw Error(ErrorCode::ValidationError, "network has no groups");
  const auto d = groups.front().W.rows();
  for (const auto& g : groups) {
    const auto n = static_cast<std::size_t>(g.size());
    if (n == 0) throw Error(ErrorCode::ValidationError, "network group is empty");
    if (g.W.rows() != d || static_cast<std::size_t>(g.W.cols()) != n || g.b.size() != n ||
        g.activation.size() != n || g.activation_deriv.size() != n) {
      throw Error(ErrorCode::ValidationError, "network group has inconsistent sizes");
    }
  }
}

NeuronGroup make_group(int task, int d, int size) {
  NeuronGroup g;
  g.task = task;
  g.W = Mat::Zero(d, size);
  const auto n = static_cast<std::size_t>(size);
  g.a.assign(n, 0.0);
  g.b.assign(n, 0.0);
  g.activation.assign(n, PolySpec());
  g.activation_deriv.assign(n, PolySpec());
  return g;
}

double neuron_output(const Neuron& n, const Vec& x) {
  return n.a * poly_eval(n.activation, n.w.dot(x) + n.b);
}

double forward_group(const NeuronGroup& g, const Vec& x) {
  const Vec z = g.W.transpose() * x;
  double acc = 0.0;
  for (int n = 0; n < g.size(); ++n) {
    const auto i = static_cast<std::size_t>(n);
    acc += g.a[i] * poly_eval(g.activation[i], z(n) + g.b[i]);
  }
  return acc / g.size();
}

double forward(const TwoLayerNet& net, const Vec& x) {
  double r = 0.0;
  for (const auto& g : net.groups) r += forward_group(g, x);
  return r;
}

Vec neuron_weight_gradient(const Neuron& n, const Vec& x) {
  return (n.a * poly_eval(n.activation.derivative(), n.w.dot(x) + n.b)) * x;
}

PolySpec beta_coeffs(const Neuron& n, int q) {
  if (q < 0) throw Error(ErrorCode::InvalidArgument, "beta_coeffs: negative degree");
  const int deg = n.activation.degree();
  const int order = std::max({2, q + 1, (deg + q + 2) / 2});
  if (order > kMaxQuadOrder) {
    throw Error(ErrorCode::QuadratureUnderresolved, "beta_coeffs: degree too high for the quadrature cache");
  }
  const PolySpec& act = n.activation;
  const double a = n.a;
  const double b = n.b;
  return hermite_project([&](double z) { return a * poly_eval(act, z + b); }, q, order, deg);
}

bool weak_sign_condition(const Neuron& n, const PolySpec& link, int q) {
  const int p = information_exponent(link);
  const PolySpec beta = beta_coeffs(n, q);
  if (!(link.coeff(p) * beta.coeff(p) > 0.0)) return false;
  for (int i = p + 1; i <= q; ++i) {
    if (link.coeff(i) * beta.coeff(i) < 0.0) return false;
  }
  return true;
}

WeakInit init_weak(const TaskGeometry& geom, int N_tilde, int q, const PolySpec& link, Rng& rng) {
  if (N_tilde < 1) throw Error(ErrorCode::ValidationError, "weak network needs at least one neuron");
  if (q < 1) throw Error(ErrorCode::ValidationError, "weak activation degree must be at least 1");
  const int k = geom.target;
  const std::uint64_t base = rng.bits();
  WeakInit out;
  out.net.mode = NetMode::Weak;
  NeuronGroup g = make_group(k, geom.d, N_tilde);
  out.sign_ok.assign(static_cast<std::size_t>(N_tilde), false);
  for (int n = 0; n < N_tilde; ++n) {
    Rng r(base, Stream::Init, static_cast<std::uint64_t>(n));
    g.W.col(n) = sample_sphere_subspace(geom, k, r);
    g.a[static_cast<std::size_t>(n)] = r.sign();
    std::vector<double> raw(static_cast<std::size_t>(q) + 1, 0.0);
    for (int i = 1; i <= q; ++i) raw[static_cast<std::size_t>(i)] = r.sign();
    g.set_activation(n, from_raw_hermite(raw));
    out.sign_ok[static_cast<std::size_t>(n)] = weak_sign_condition(g.neuron(n), link, q);
  }
  out.net.groups.push_back(std::move(g));
  return out;
}

TwoLayerNet select_neurons(const TwoLayerNet& net, const std::vector<int>& keep) {
  if (net.groups.size() != 1) throw Error(ErrorCode::InvalidArgument, "select_neurons expects a single group");
  const NeuronGroup& src = net.groups.front();
  TwoLayerNet out;
  out.mode = net.mode;
  NeuronGroup g = make_group(src.task, static_cast<int>(src.W.rows()), static_cast<int>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const int n = keep[j];
    if (n < 0 || n >= src.size()) throw Error(ErrorCode::InvalidArgument, "select_neurons: index out of range");
    const auto i = static_cast<std::size_t>(n);
    g.W.col(static_cast<Eigen::Index>(j)) = src.W.col(n);
    g.a[j] = src.a[i];
    g.b[j] = src.b[i];
    g.activation[j] = src.activation[i];
    g.activation_deriv[j] = src.activation_deriv[i];
  }
  out.groups.push_back(std::move(g));
  return out;
}

TwoLayerNet init_strong_experiment(const TaskGeometry& geom, const std::vector<int>& Ns, Rng& rng,
                                   const StrongInitOptions& opt) {
  check_sizes(geom, Ns);
  TwoLayerNet net;
  net.mode = NetMode::Strong;
  for (int k = 0; k < geom.K; ++k) {
    const std::uint64_t base = rng.bits();
    NeuronGroup g = make_group(k, geom.d, Ns[static_cast<std::size_t>(k)]);
    for (int n = 0; n < g.size(); ++n) {
      Rng r(base, Stream::Init, static_cast<std::uint64_t>(n));
      g.W.col(n) = k == geom.target ? target_direction(geom, k, r, opt.target_perturb)
                                    : offtarget_direction(geom, k, r, opt);
      g.a[static_cast<std::size_t>(n)] = r.sign();
      const double e2 = r.sign();
      const double e4 = r.sign();
      g.set_activation(n, he24_activation(e2, e4, opt.normalized_activation));
    }
    net.groups.push_back(std::move(g));
  }
  return net;
}

std::vector<double> delta_schedule(int q) {
  std::vector<double> delta(static_cast<std::size_t>(std::max(q, 2)) + 1, 0.0);
  delta[0] = delta[1] = delta[2] = 1.0;
  for (int i = 1; i + 2 <= q; ++i) {
    const double di = static_cast<double>(i);
    delta[static_cast<std::size_t>(i) + 2] = 0.5 * di / ((di + 1.0) * (di + 2.0)) * delta[static_cast<std::size_t>(i)];
  }
  delta.resize(static_cast<std::size_t>(q) + 1);
  return delta;
}

TwoLayerNet init_strong_theory(const TaskGeometry& geom, const std::vector<int>& Ns, int q,
                               const std::vector<double>& pis, Rng& rng, double c_r, const StrongInitOptions& opt) {
  check_sizes(geom, Ns);
  if (q < 2) throw Error(ErrorCode::ValidationError, "theory init needs activation degree at least 2");
  if (static_cast<int>(pis.size()) != geom.K) throw Error(ErrorCode::ValidationError, "need one weight per task");
  if (!(c_r > 0.0)) throw Error(ErrorCode::ValidationError, "c_r must be positive");
  const std::vector<double> delta = delta_schedule(q);
  const double perp_sq = 0.5 * c_r / std::sqrt(static_cast<double>(geom.s));
  TwoLayerNet net;
  net.mode = NetMode::Strong;
  for (int k = 0; k < geom.K; ++k) {
    const std::uint64_t base = rng.bits();
    NeuronGroup g = make_group(k, geom.d, Ns[static_cast<std::size_t>(k)]);
    for (int n = 0; n < g.size(); ++n) {
      Rng r(base, Stream::Init, static_cast<std::uint64_t>(n));
      if (k == geom.target) {
        const Vec u = sample_sphere_subspace(geom, k, r);
        Vec w = u;
        if (geom.d > geom.s) {
          Vec perp = project_perp(geom, k, sample_isotropic(geom.d, r));
          w = std::sqrt(1.0 - perp_sq) * u + std::sqrt(perp_sq) * unit(perp);
        }
        g.W.col(n) = w;
      } else {
        g.W.col(n) = offtarget_direction(geom, k, r, opt);
      }
      g.a[static_cast<std::size_t>(n)] = r.sign() * pis[static_cast<std::size_t>(k)];
      std::vector<double> raw(static_cast<std::size_t>(q) + 1);
      for (int i = 0; i <= q; ++i) raw[static_cast<std::size_t>(i)] = r.sign() * delta[static_cast<std::size_t>(i)];
      g.set_activation(n, from_raw_hermite(raw));
    }
    net.groups.push_back(std::move(g));
  }
  return net;
}

TwoLayerNet init_weak_oracle(const RewardModel& rm, int N_w, double noise, Rng& rng) {
  if (N_w < 1) throw Error(ErrorCode::ValidationError, "weak network needs at least one neuron");
  const TaskGeometry& geom = rm.geom();
  const int k = geom.target;
  TwoLayerNet net;
  net.mode = NetMode::Weak;
  NeuronGroup g = make_group(k, geom.d, N_w);
  const std::uint64_t base = rng.bits();
  for (int n = 0; n < N_w; ++n) {
    Rng r(base, Stream::Init, static_cast<std::uint64_t>(n));
    g.a[static_cast<std::size_t>(n)] = rm.pi(k) + noise * r.gaussian();
    g.b[static_cast<std::size_t>(n)] = noise * r.gaussian();
    Vec w = geom.theta(k) + sample_isotropic(geom.d, r) * (noise / std::sqrt(static_cast<double>(geom.d)));
    g.W.col(n) = unit(w);
    g.set_activation(n, rm.link(k));
  }
  net.groups.push_back(std::move(g));
  return net;
}

std::string classify_neuron(const Neuron& n, const PolySpec& alpha_bar, const std::vector<int>& indices) {
  if (indices.empty()) throw Error(ErrorCode::InvalidArgument, "classify_neuron: no indices");
  int q = 0;
  for (int i : indices) q = std::max(q, i);
  const PolySpec beta = beta_coeffs(n, q);
  std::string out;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int i = indices[j];
    const double prod = alpha_bar.coeff(i) * beta.coeff(i);
    if (std::abs(prod) < 1e-12) {
      throw Error(ErrorCode::AmbiguousSign, "sign of alpha_" + std::to_string(i) + " beta_" + std::to_string(i) +
                                                " is indistinguishable from zero");
    }
    if (j > 0) out += ',';
    out += prod > 0.0 ? '+' : '-';
  }
  return indices.size() > 1 ? "(" + out + ")" : out;
}

std::string classify_neuron(const Neuron& n, const PolySpec& alpha_bar, SignMode mode) {
  return mode == SignMode::W2S ? classify_neuron(n, alpha_bar, std::vector<int>{2, 4})
                               : classify_neuron(n, alpha_bar, std::vector<int>{4});
}

void write_network(std::ostream& os, const TwoLayerNet& net, const std::string& geometry_hash) {
  net.validate();
  os << kSnapshotTag << ' ' << kSnapshotVersion << '\n';
  os << "geometry " << geometry_hash << '\n';
  os << "mode " << (net.mode == NetMode::Weak ? "weak" : "strong") << '\n';
  os << "dim " << net.dim() << '\n';
  os << "groups " << net.groups.size() << '\n';
  for (const auto& g : net.groups) {
    os << "group " << g.task + 1 << ' ' << g.size() << '\n';
    for (int n = 0; n < g.size(); ++n) {
      const auto i = static_cast<std::size_t>(n);
      put(os, g.a[i]);
      os << ' ';
      put(os, g.b[i]);
      const auto& c = g.activation[i].coeffs();
      os << ' ' << c.size();
      for (double v : c) {
        os << ' ';
        put(os, v);
      }
      for (Eigen::Index r = 0; r < g.W.rows(); ++r) {
        os << ' ';
        put(os, g.W(r, n));
      }
      os << '\n';
    }
  }
  os << "end\n";
}

TwoLayerNet read_network(std::istream& is, std::string* geometry_hash) {
  auto fail = [](const std::string& what) { return Error(ErrorCode::ParseError, "network snapshot: " + what); };
  auto expect = [&](const char* key) {
    std::string tok;
    if (!(is >> tok) || tok != key) throw fail(std::string("expected '") + key + "'");
  };
  expect(kSnapshotTag);
  int version = 0;
  if (!(is >> version) || version != kSnapshotVersion) throw fail("unsupported version");
  expect("geometry");
  std::string hash;
  if (!(is >> hash)) throw fail("missing geometry hash");
  if (geometry_hash) *geometry_hash = hash;
  expect("mode");
  std::string mode;
  is >> mode;
  TwoLayerNet net;
  if (mode == "weak") {
    net.mode = NetMode::Weak;
  } else if (mode == "strong") {
    net.mode = NetMode::Strong;
  } else {
    throw fail("bad mode '" + mode + "'");
  }
  int d = 0;
  std::size_t ngroups = 0;
  expect("dim");
  if (!(is >> d) || d < 1) throw fail("bad dimension");
  expect("groups");
  if (!(is >> ngroups) || ngroups == 0) throw fail("bad group count");
  for (std::size_t gi = 0; gi < ngroups; ++gi) {
    expect("group");
    int task = 0, size = 0;
    if (!(is >> task >> size) || task < 1 || size < 1) throw fail("bad group header");
    NeuronGroup g = make_group(task - 1, d, size);
    for (int n = 0; n < size; ++n) {
      const auto i = static_cast<std::size_t>(n);
      std::size_t nc = 0;
      if (!(is >> g.a[i] >> g.b[i] >> nc) || nc == 0) throw fail("bad neuron record");
      std::vector<double> c(nc);
      for (auto& v : c) {
        if (!(is >> v)) throw fail("bad activation coefficient");
      }
      g.set_activation(n, PolySpec(std::move(c)));
      for (int r = 0; r < d; ++r) {
        if (!(is >> g.W(r, n))) throw fail("bad weight entry");
      }
    }
    net.groups.push_back(std::move(g));
  }
  expect("end");
  return net;
}

void save_network(const std::string& path, const TwoLayerNet& net, const std::string& geometry_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  write_network(os, net, geometry_hash);
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

TwoLayerNet load_network(const std::string& path, std::string* geometry_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  return read_network(is, geometry_hash);
}

}  // namespace w2s
