#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <set>
#include <sstream>

#include "w2s/error.hpp"
#include "w2s/networks.hpp"

using namespace w2s;

namespace {

TaskGeometry two_task(int d, int s, std::uint64_t seed = 5) {
  Rng rng(seed);
  return build_task_geometry(d, s, 2, 0, 0.3, rng);
}

Vec basis_vec(int d, int i) {
  Vec e = Vec::Zero(d);
  e(i) = 1.0;
  return e;
}

Neuron random_neuron(int d, Rng& rng) {
  Neuron n;
  n.a = rng.uniform(-1.5, 1.5);
  n.b = rng.uniform(-0.5, 0.5);
  n.w = sample_isotropic(d, rng).normalized();
  n.activation = PolySpec({0.0, rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()});
  return n;
}

}  // namespace

TEST(Forward, Examples) {
  Neuron n;
  n.a = 1.0;
  n.w = basis_vec(4, 0);
  n.activation = PolySpec({0.0, 1.0});
  EXPECT_DOUBLE_EQ(neuron_output(n, 2.0 * basis_vec(4, 0)), 2.0);

  NeuronGroup g = make_group(0, 4, 1);
  g.W.col(0) = n.w;
  g.a[0] = 1.0;
  g.set_activation(0, n.activation);
  const Vec x = Vec::LinSpaced(4, 0.5, 2.0);
  EXPECT_DOUBLE_EQ(forward_group(g, x), neuron_output(n, x));

  TwoLayerNet net;
  net.groups = {g, g};
  EXPECT_DOUBLE_EQ(forward(net, x), 2.0 * forward_group(g, x));

  net.groups[0].a[0] = net.groups[1].a[0] = 0.0;
  EXPECT_EQ(forward(net, x), 0.0);
}

TEST(Forward, DecomposesOverGroups) {
  const TaskGeometry geom = two_task(32, 4);
  Rng rng(3);
  const TwoLayerNet net = init_strong_experiment(geom, {7, 13}, rng);
  for (int t = 0; t < 20; ++t) {
    const Vec x = sample_isotropic(32, rng);
    EXPECT_EQ(forward(net, x), forward_group(net.groups[0], x) + forward_group(net.groups[1], x));
  }
}

TEST(WeightGradient, Examples) {
  Rng rng(4);
  Neuron lin;
  lin.a = 1.0;
  lin.w = sample_isotropic(6, rng).normalized();
  lin.activation = PolySpec({0.0, 1.0});
  const Vec x = sample_isotropic(6, rng);
  EXPECT_LE((neuron_weight_gradient(lin, x) - x).norm(), 1e-15);

  Neuron sq = lin;
  sq.activation = PolySpec({0.0, 0.0, 1.0});  // He2 / sqrt 2
  Vec x0 = sample_isotropic(6, rng);
  x0 -= x0.dot(sq.w) * sq.w;  // w^T x = 0
  EXPECT_LE(neuron_weight_gradient(sq, x0).norm(), 1e-14);
}

TEST(WeightGradient, FiniteDifference) {
  Rng rng(6);
  const double eps = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Neuron n = random_neuron(8, rng);
    const Vec x = sample_isotropic(8, rng);
    const Vec g = neuron_weight_gradient(n, x);
    for (int i = 0; i < 8; ++i) {
      Neuron p = n, m = n;
      p.w(i) += eps;
      m.w(i) -= eps;
      const double fd = (neuron_output(p, x) - neuron_output(m, x)) / (2 * eps);
      worst = std::max(worst, std::abs(fd - g(i)));
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(BetaCoeffs, Examples) {
  Neuron n;
  n.a = 1.0;
  n.w = basis_vec(3, 0);
  n.activation = PolySpec({0.0, 0.0, 1.0});
  const PolySpec b = beta_coeffs(n, 4);
  EXPECT_NEAR(b.coeff(2), 1.0, 1e-14);
  for (int j : {0, 1, 3, 4}) EXPECT_NEAR(b.coeff(j), 0.0, 1e-14);

  n.a = -1.0;
  EXPECT_NEAR(beta_coeffs(n, 4).coeff(2), -1.0, 1e-14);

  // He2(z + 1) = He2(z) + 2 He1(z) + 1  (raw He2, shift b = 1).
  n.a = 1.0;
  n.b = 1.0;
  n.activation = PolySpec({0.0, 0.0, std::sqrt(2.0)});
  const PolySpec s = beta_coeffs(n, 3);
  EXPECT_NEAR(s.coeff(0), 1.0, 1e-13);
  EXPECT_NEAR(s.coeff(1), 2.0, 1e-13);
  EXPECT_NEAR(s.coeff(2), std::sqrt(2.0), 1e-13);
  EXPECT_NEAR(s.coeff(3), 0.0, 1e-13);
}

TEST(BetaCoeffs, LinearInA) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    Neuron n = random_neuron(3, rng);
    const PolySpec base = beta_coeffs(n, 6);
    const double a = n.a;
    n.a = 1.0;
    const PolySpec unit_a = beta_coeffs(n, 6);
    for (int j = 0; j <= 6; ++j) EXPECT_NEAR(base.coeff(j), a * unit_a.coeff(j), 1e-12);
  }
}

TEST(BetaCoeffs, ShiftMatchesTaylorExpansion) {
  // He_n(z + b) = sum_k C(n, k) b^{n-k} He_k(z).
  const double b = -0.7;
  Neuron n;
  n.a = 1.0;
  n.b = b;
  n.w = basis_vec(2, 0);
  n.activation = PolySpec::unit_hermite(4);  // He4 / sqrt(24)
  const PolySpec s = beta_coeffs(n, 4);
  const double binom[] = {1, 4, 6, 4, 1};
  const double fact[] = {1, 1, 2, 6, 24};
  for (int k = 0; k <= 4; ++k) {
    const double raw = binom[k] * std::pow(b, 4 - k) / std::sqrt(24.0);
    EXPECT_NEAR(s.coeff(k), raw * std::sqrt(fact[k]), 1e-12) << k;
  }
}

TEST(InitWeak, NeuronsInTargetSubspace) {
  const int s = 64;
  const TaskGeometry geom = two_task(256, s);
  Rng rng(10);
  const PolySpec link = PolySpec::normalized({0.0, 0.0, 1.0, -1.0});
  const WeakInit init = init_weak(geom, 10000, 3, link, rng);
  const NeuronGroup& g = init.net.groups[0];
  int high = 0, ok = 0;
  for (int n = 0; n < g.size(); ++n) {
    const Vec w = g.W.col(n);
    if (n < 200) {
      EXPECT_LE(project_perp(geom, 0, w).norm(), 1e-10);
      EXPECT_EQ(g.b[static_cast<std::size_t>(n)], 0.0);
    }
    high += geom.theta(0).dot(w) >= 1.0 / std::sqrt(double(s));
    ok += init.sign_ok[static_cast<std::size_t>(n)];
  }
  const double frac_high = high / 10000.0;
  EXPECT_GE(frac_high, 0.1);
  EXPECT_LE(frac_high, 0.5);
  // p = 2, q = 3: two independent fair signs must agree with the link.
  const double p = 0.25, sd = std::sqrt(p * (1 - p) / 10000.0);
  EXPECT_NEAR(ok / 10000.0, p, 3 * sd);
}

TEST(InitWeak, SignConditionMatchesDefinition) {
  const TaskGeometry geom = two_task(32, 8);
  Rng rng(12);
  const PolySpec link({0.0, 0.0, 0.6, 0.0, -0.8});
  const WeakInit init = init_weak(geom, 200, 4, link, rng);
  for (int n = 0; n < 200; ++n) {
    const Neuron nn = init.net.groups[0].neuron(n);
    const PolySpec b = beta_coeffs(nn, 4);
    const bool expect = link.coeff(2) * b.coeff(2) > 0 && link.coeff(4) * b.coeff(4) >= 0 &&
                        link.coeff(3) * b.coeff(3) >= 0;
    EXPECT_EQ(init.sign_ok[static_cast<std::size_t>(n)], expect);
  }
}

TEST(InitStrongExperiment, Properties) {
  const int d = 256, s = 16;
  const TaskGeometry geom = two_task(d, s);
  Rng rng(14);
  const TwoLayerNet net = init_strong_experiment(geom, {1000, 200}, rng);
  ASSERT_EQ(net.groups.size(), 2u);
  double perp = 0.0;
  std::set<std::vector<double>> acts;
  for (const auto& g : net.groups) {
    for (int n = 0; n < g.size(); ++n) {
      EXPECT_NEAR(g.W.col(n).norm(), 1.0, 1e-12);
      EXPECT_EQ(g.b[static_cast<std::size_t>(n)], 0.0);
      EXPECT_EQ(std::abs(g.a[static_cast<std::size_t>(n)]), 1.0);
      acts.insert(g.activation[static_cast<std::size_t>(n)].coeffs());
      if (g.task == 0) perp += project_perp(geom, 0, g.W.col(n)).squaredNorm();
    }
  }
  EXPECT_LE(perp / 1000.0, 0.02);
  EXPECT_EQ(acts.size(), 4u);
  for (const auto& c : acts) {
    const PolySpec p(c);
    EXPECT_NEAR(std::abs(p.coeff(2)), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(p.coeff(4)), 1.0, 1e-15);
  }
  // Off-target neurons start next to theta_2.
  for (int n = 0; n < 200; ++n) EXPECT_GE(geom.theta(1).dot(net.groups[1].W.col(n)), 0.95);
}

TEST(InitStrongExperiment, RawActivations) {
  const TaskGeometry geom = two_task(32, 4);
  Rng rng(1);
  StrongInitOptions opt;
  opt.normalized_activation = false;
  const TwoLayerNet net = init_strong_experiment(geom, {4, 4}, rng, opt);
  const PolySpec& p = net.groups[0].activation[0];
  EXPECT_NEAR(std::abs(p.coeff(2)), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(std::abs(p.coeff(4)), std::sqrt(24.0), 1e-13);
}

TEST(InitStrongTheory, DeltaSchedule) {
  const auto d = delta_schedule(8);
  EXPECT_DOUBLE_EQ(d[0], 1.0);
  EXPECT_DOUBLE_EQ(d[1], 1.0);
  EXPECT_DOUBLE_EQ(d[2], 1.0);
  EXPECT_NEAR(d[4], 1.0 / 12.0, 1e-15);
  EXPECT_NEAR(d[6], 0.5 * (4.0 / 30.0) * d[4], 1e-15);
  EXPECT_NEAR(d[3], 0.5 * (1.0 / 6.0), 1e-15);
}

TEST(InitStrongTheory, Properties) {
  const int s = 16;
  const TaskGeometry geom = two_task(128, s);
  Rng rng(15);
  const double c_r = 0.1;
  const std::vector<double> pis{0.8, 0.6};
  const TwoLayerNet net = init_strong_theory(geom, {50, 30}, 6, pis, rng, c_r);
  for (const auto& g : net.groups) {
    for (int n = 0; n < g.size(); ++n) {
      const Neuron nn = g.neuron(n);
      EXPECT_NEAR(nn.w.norm(), 1.0, 1e-12);
      EXPECT_NEAR(std::abs(nn.a), pis[static_cast<std::size_t>(g.task)], 1e-15);
      const PolySpec b = beta_coeffs(nn, 8);
      for (int i = 1; i + 2 <= 6; ++i) {
        EXPECT_GT(i * std::abs(b.coeff(i)), std::sqrt((i + 2.0) * (i + 1.0)) * std::abs(b.coeff(i + 2)));
      }
      if (g.task == 0) EXPECT_LE(project_perp(geom, 0, nn.w).squaredNorm(), c_r / std::sqrt(double(s)));
    }
  }
}

TEST(InitWeakOracle, CloseToTheta) {
  auto geom = std::make_shared<const TaskGeometry>(two_task(64, 8));
  const RewardModel rm(geom, {PolySpec::unit_hermite(4), PolySpec::unit_hermite(4)}, equal_pis(2));
  Rng rng(3);
  const TwoLayerNet net = init_weak_oracle(rm, 3, 0.1, rng);
  for (int n = 0; n < 3; ++n) {
    EXPECT_GE(geom->theta(0).dot(net.groups[0].W.col(n)), 0.98);
    EXPECT_EQ(net.groups[0].activation[static_cast<std::size_t>(n)], rm.link(0));
  }
}

TEST(Classify, Examples) {
  Neuron n;
  n.a = 1.0;
  n.w = basis_vec(2, 0);
  n.activation = PolySpec({0.0, 0.0, 1.0, 0.0, 1.0});
  const PolySpec alpha({0.0, 0.0, 0.5, 0.0, 0.5});
  EXPECT_EQ(classify_neuron(n, alpha, SignMode::W2S), "(+,+)");
  n.a = -1.0;
  EXPECT_EQ(classify_neuron(n, alpha, SignMode::W2S), "(-,-)");
  n.a = 1.0;
  n.activation = PolySpec({0.0, 0.0, 1.0, 0.0, -1.0});
  EXPECT_EQ(classify_neuron(n, alpha, SignMode::W2S), "(+,-)");
  EXPECT_EQ(classify_neuron(n, PolySpec::unit_hermite(4), SignMode::SFT), "-");
  try {
    classify_neuron(n, PolySpec::unit_hermite(4), SignMode::W2S);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AmbiguousSign);
  }
}

TEST(Snapshot, RoundTripIsExact) {
  const TaskGeometry geom = two_task(24, 4);
  Rng rng(20);
  TwoLayerNet net = init_strong_experiment(geom, {5, 3}, rng);
  net.groups[0].b[2] = 0.1234567890123;
  std::stringstream ss;
  write_network(ss, net, geometry_hash(geom));
  std::string hash;
  const TwoLayerNet back = read_network(ss, &hash);
  EXPECT_EQ(hash, geometry_hash(geom));
  EXPECT_EQ(back.mode, net.mode);
  ASSERT_EQ(back.groups.size(), net.groups.size());
  for (std::size_t k = 0; k < net.groups.size(); ++k) {
    const auto& a = net.groups[k];
    const auto& b = back.groups[k];
    EXPECT_EQ(a.task, b.task);
    EXPECT_EQ(a.W, b.W);
    EXPECT_EQ(a.a, b.a);
    EXPECT_EQ(a.b, b.b);
    EXPECT_EQ(a.activation, b.activation);
    EXPECT_EQ(a.activation_deriv, b.activation_deriv);
  }
  std::stringstream again;
  write_network(again, back, hash);
  std::stringstream first;
  write_network(first, net, hash);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Snapshot, RejectsGarbage) {
  std::stringstream bad("w2s-network 1\ngeometry abc\nmode sideways\n");
  try {
    read_network(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
  std::stringstream truncated("w2s-network 1\ngeometry abc\nmode weak\ndim 2\ngroups 1\ngroup 1 1\n1 0 2 0 1\n");
  EXPECT_THROW(read_network(truncated), Error);
}

TEST(SelectNeurons, KeepsListedColumns) {
  const TaskGeometry geom = two_task(16, 4);
  Rng rng(2);
  const WeakInit init = init_weak(geom, 6, 2, PolySpec::unit_hermite(2), rng);
  const TwoLayerNet sub = select_neurons(init.net, {4, 1});
  ASSERT_EQ(sub.groups[0].size(), 2);
  EXPECT_EQ(sub.groups[0].W.col(0), init.net.groups[0].W.col(4));
  EXPECT_EQ(sub.groups[0].W.col(1), init.net.groups[0].W.col(1));
  EXPECT_THROW(select_neurons(init.net, {7}), Error);
}
