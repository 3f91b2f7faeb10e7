#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rode/curvature.hpp"
#include "rode/errors.hpp"
#include "support.hpp"

using namespace rode;

namespace {

// W1 by enumerating couplings: with every mass a multiple of 1/n, some optimal plan
// moves whole 1/n atoms, so the minimum over atom permutations is exact.
double brute_force_w1(const MassDistribution& p, const MassDistribution& q, const Tensor& coords, int n) {
  auto atoms = [n](const MassDistribution& m) {
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < m.support.size(); ++i) {
      const long count = std::lround(m.probabilities[i] * n);
      REQUIRE(std::abs(count - m.probabilities[i] * n) < 1e-9);
      for (long c = 0; c < count; ++c) out.push_back(m.support[i]);
    }
    REQUIRE(out.size() == static_cast<std::size_t>(n));
    return out;
  };
  const std::vector<NodeId> a = atoms(p);
  std::vector<NodeId> b = atoms(q);
  std::sort(b.begin(), b.end());
  double best = INFINITY;
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) cost += euclidean_distance(coords.row_span(a[i]), coords.row_span(b[i]));
    best = std::min(best, cost / n);
  } while (std::next_permutation(b.begin(), b.end()));
  return best;
}

TemporalUMGraph clique_graph(std::size_t num_users, const std::vector<UserId>& infected) {
  TemporalUMGraph g(num_users);
  for (std::size_t k = 0; k < infected.size(); ++k) g.add_infection(infected[k], 0.5, std::vector<double>(k, 0.5));
  return g;
}

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor t(r, c);
  for (double& x : t.data()) x = n(rng);
  return t;
}

LipschitzHead fixed_head(std::vector<double> w, double b) {
  const std::size_t d = w.size();
  return {ad::constant(Tensor(d, 1, std::move(w))), ad::constant(Tensor::scalar(b))};
}

}  // namespace

TEST_CASE("mass distribution examples") {
  const TemporalUMGraph g = clique_graph(4, {1, 2});
  const MassDistribution m = mass_distribution(g, 1, 0.5);  // neighbours: message and user 2
  REQUIRE(m.support.size() == 3);
  CHECK(m.support[0] == 1);
  CHECK(m.probabilities == std::vector<double>{0.5, 0.25, 0.25});

  const MassDistribution lazy = mass_distribution(g, g.message_node(), 1.0);
  CHECK(lazy.probabilities[0] == 1.0);
  for (std::size_t i = 1; i < lazy.probabilities.size(); ++i) CHECK(lazy.probabilities[i] == 0.0);

  const MassDistribution isolated = mass_distribution(g, 3, 0.5);
  CHECK(isolated.support == std::vector<NodeId>{3});
  CHECK(isolated.probabilities == std::vector<double>{1.0});
}

TEST_CASE("exact transport: identical, point masses, hand coupling") {
  Tensor coords(4, 2, std::vector<double>{0, 0, 2, 0, 1, 1, 3, -1});
  const MassDistribution a{0, {0}, {1.0}, 0.5};
  const MassDistribution b{1, {1}, {1.0}, 0.5};
  CHECK(wasserstein_lp(a, b, coords) == doctest::Approx(2.0).epsilon(1e-12));

  const MassDistribution p{0, {0, 2, 3}, {0.5, 0.25, 0.25}, 0.5};
  CHECK(std::abs(wasserstein_lp(p, p, coords)) < 1e-12);

  const MassDistribution xy{0, {0, 3}, {0.5, 0.5}, 0.5};
  const MassDistribution z{2, {2}, {1.0}, 0.5};
  const double expected = 0.5 * std::sqrt(2.0) + 0.5 * std::sqrt(8.0);
  CHECK(wasserstein_lp(xy, z, coords) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exact transport matches the one-dimensional closed form") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 6;
    Tensor coords(n, 1);
    for (double& x : coords.data()) x = 10.0 * u(rng);
    std::vector<double> wp(n), wq(n);
    for (auto& x : wp) x = u(rng);
    for (auto& x : wq) x = u(rng);
    const double sp = std::accumulate(wp.begin(), wp.end(), 0.0), sq = std::accumulate(wq.begin(), wq.end(), 0.0);
    for (auto& x : wp) x /= sp;
    for (auto& x : wq) x /= sq;
    std::vector<NodeId> nodes(n);
    std::iota(nodes.begin(), nodes.end(), 0);
    const MassDistribution p{0, nodes, wp, 0.5}, q{0, nodes, wq, 0.5};

    // integral of |F_p - F_q| over the sorted coordinates
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return coords[i] < coords[j]; });
    double cdf = 0.0, closed = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      cdf += wp[order[i]] - wq[order[i]];
      closed += std::abs(cdf) * (coords[order[i + 1]] - coords[order[i]]);
    }
    CHECK(wasserstein_lp(p, q, coords) == doctest::Approx(closed).epsilon(1e-9));
  }
}

TEST_CASE("exact transport agrees with coupling enumeration on cascade graphs") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t infected = 2 + trial % 3;  // atoms per distribution: 4, 6 or 8
    std::vector<UserId> users(7);
    std::iota(users.begin(), users.end(), 0);
    std::shuffle(users.begin(), users.end(), rng);
    users.resize(infected);
    const TemporalUMGraph g = clique_graph(7, users);
    const Tensor coords = random_tensor(8, 3, rng);
    const MassDistribution pm = mass_distribution(g, g.message_node(), 0.5);
    const int atoms = static_cast<int>(2 * infected);
    for (UserId u : users) {
      const MassDistribution pu = mass_distribution(g, u, 0.5);
      CHECK(wasserstein_lp(pm, pu, coords) == doctest::Approx(brute_force_w1(pm, pu, coords, atoms)).epsilon(1e-9));
    }
  }
}

TEST_CASE("exact transport rejects unbalanced inputs") {
  const std::vector<double> supply{0.5, 0.5}, demand{0.7};
  CHECK_THROWS(exact_transport(supply, demand, Tensor(2, 1, 1.0)));
}

TEST_CASE("surrogate: identical nodes, constant potential, hand-set graph") {
  // users 0 and 1 infected out of 3; node 3 is the message, user 2 is isolated
  const TemporalUMGraph g = clique_graph(3, {0, 1});
  const Tensor hv(4, 2, std::vector<double>{0.2, 0.9, 0.7, 0.1, -0.5, 0.4, 0.3, 0.6});
  const ad::Var h = ad::constant(hv);
  const LipschitzHead head = fixed_head({0.6, -0.8}, 0.1);

  CHECK(surrogate_wasserstein(g, h, 0, 0, head, 0.5).item() == 0.0);
  CHECK(surrogate_wasserstein(g, h, 3, 1, fixed_head({0.0, 0.0}, 0.7), 0.5).item() == 0.0);

  auto f = [&](std::size_t n) { return 0.6 * hv(n, 0) - 0.8 * hv(n, 1) + 0.1; };
  const double lf_m = 0.5 * f(3) + 0.25 * (f(0) + f(1));
  const double lf_0 = 0.5 * f(0) + 0.25 * (f(3) + f(1));
  const double lf_2 = f(2);
  CHECK(surrogate_wasserstein(g, h, 3, 0, head, 0.5).item() == doctest::Approx(lf_m - lf_0).epsilon(1e-14));
  CHECK(surrogate_wasserstein(g, h, 3, 2, head, 0.5).item() == doctest::Approx(lf_m - lf_2).epsilon(1e-14));
  for (NodeId a = 0; a < 4; ++a)
    for (NodeId b = 0; b < 4; ++b)
      CHECK(surrogate_wasserstein(g, h, a, b, head, 0.5).item() ==
            -surrogate_wasserstein(g, h, b, a, head, 0.5).item());

  // Ricci curvature composes the two
  CurvatureOptions opt;
  opt.clamp_negative_w = false;
  const double dist0 = std::hypot(hv(3, 0) - hv(0, 0), hv(3, 1) - hv(0, 1));
  CHECK(ricci_curvature(g, h, 3, 0, head, opt).value.item() ==
        doctest::Approx(1.0 - (lf_m - lf_0) / dist0).epsilon(1e-14));
  const Curvatures all = message_curvatures(g, h, head, opt);
  for (UserId u = 0; u < 3; ++u)
    CHECK(all.values.value()[u] == doctest::Approx(ricci_curvature(g, h, 3, u, head, opt).value.item()).epsilon(1e-14));
}

TEST_CASE("curvature edge values") {
  const TemporalUMGraph g = clique_graph(2, {0});
  // message at (0,0), user 0 at (3,4): distance 5
  const ad::Var h = ad::constant(Tensor(3, 2, std::vector<double>{3, 4, 0, 0, 0, 0}));
  CurvatureOptions opt;
  opt.alpha = 1.0;  // surrogate reduces to f(m) - f(u)
  CHECK(ricci_curvature(g, h, 2, 0, fixed_head({0.0, 0.0}, 0.3), opt).value.item() == 1.0);
  // f(m) - f(u) = -(0.6*3 + 0.8*4) = -5 with w = (0.6, 0.8); flip it to reach +5
  CHECK(ricci_curvature(g, h, 2, 0, fixed_head({-0.6, -0.8}, 0.0), opt).value.item() == doctest::Approx(0.0));
  // negative surrogate: clamped to Ric = 1, unclamped above 1
  CHECK(ricci_curvature(g, h, 2, 0, fixed_head({0.6, 0.8}, 0.0), opt).value.item() == 1.0);
  opt.clamp_negative_w = false;
  CHECK(ricci_curvature(g, h, 2, 0, fixed_head({0.6, 0.8}, 0.0), opt).value.item() == doctest::Approx(2.0));
  // coincident nodes hit the distance floor
  const ad::Var same = ad::constant(Tensor(3, 2, 0.5));
  CHECK(ricci_curvature(g, same, 2, 0, fixed_head({0.6, 0.8}, 0.0), opt).distance_floored);
}

TEST_CASE("surrogate never exceeds the exact distance") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + trial % 6;
    std::vector<UserId> users(n);
    std::iota(users.begin(), users.end(), 0);
    std::shuffle(users.begin(), users.end(), rng);
    users.resize(1 + trial % (n - 1));
    const TemporalUMGraph g = clique_graph(n, users);
    const Tensor hv = random_tensor(n + 1, 3, rng);
    Tensor w = random_tensor(3, 1, rng);
    project_to_unit_ball(w);
    const LipschitzHead head{ad::constant(w), ad::constant(Tensor::scalar(0.3))};
    for (UserId u = 0; u < n; ++u) {
      const double s = surrogate_wasserstein(g, ad::constant(hv), g.message_node(), u, head, 0.5).item();
      const MassDistribution pm = mass_distribution(g, g.message_node(), 0.5);
      const double exact = wasserstein_lp(pm, mass_distribution(g, u, 0.5), hv);
      CHECK(s <= exact + 1e-9);
    }
  }
}

TEST_CASE("projection onto the unit ball") {
  Tensor big(3, 1, std::vector<double>{3.0, 4.0, 0.0});
  project_to_unit_ball(big);
  CHECK(std::sqrt(big.squared_norm()) == doctest::Approx(1.0));
  CHECK(big[0] == doctest::Approx(0.6));
  Tensor small(2, 1, std::vector<double>{0.1, -0.2});
  const Tensor before = small;
  project_to_unit_ball(small);
  CHECK(small == before);
}

TEST_CASE("infection distribution: softmax arithmetic, ties, masking, shift") {
  const ad::Var two = ad::constant(Tensor(2, 1, std::vector<double>{1.0, 0.0}));
  const Tensor p = infection_distribution(two, {false, false}).value();
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / (std::exp(1.0) + 1.0)).epsilon(1e-14));

  const Tensor tie = infection_distribution(ad::constant(Tensor(3, 1, 0.4)), {true, false, false}).value();
  CHECK(tie[0] == 0.0);
  CHECK(tie[1] == doctest::Approx(0.5));
  CHECK(tie[2] == doctest::Approx(0.5));

  std::mt19937_64 rng(3);
  const Tensor c = random_tensor(8, 1, rng);
  Tensor shifted = c;
  for (double& x : shifted.data()) x += 7.5;
  const std::vector<bool> mask{false, true, false, false, true, false, false, false};
  const Tensor a = infection_distribution(ad::constant(c), mask).value();
  const Tensor b = infection_distribution(ad::constant(shifted), mask).value();
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  CHECK(std::abs(std::accumulate(a.data().begin(), a.data().end(), 0.0) - 1.0) < 1e-12);

  CHECK_THROWS(infection_distribution(two, {true, true}));
}

TEST_CASE("ricci loss: uniform predictor gives the log of the candidate count") {
  auto t = testing::tiny_instance();
  for (double& x : t.params.at(names::head_weight).data()) x = 0.0;  // every Ric = 1
  Forward f(t.config, t.params, t.graph, false);
  const std::vector<Cascade> one{t.cascades[0]};
  // three transitions with 5, 4 and 3 uninfected users
  CHECK(ricci_loss(f, one).item() == doctest::Approx((std::log(5.0) + std::log(4.0) + std::log(3.0)) / 3.0));
}

TEST_CASE("ricci loss: a dominant curvature drives the term to zero") {
  const ad::Var c = ad::constant(Tensor(3, 1, std::vector<double>{60.0, 0.0, 0.0}));
  CHECK(-ad::masked_log_softmax(c, {false, false, false}).value()[0] < 1e-20);
}

TEST_CASE("ricci loss matches a hand-rolled sum of log-softmax terms") {
  auto t = testing::tiny_instance();
  t.config.clamp_negative_w = false;
  Forward f(t.config, t.params, t.graph, false);
  const Cascade c{"h", {{2, 0.0}, {0, 1.0}, {5, 3.0}}};
  const auto states = run_encoder(f, c);
  const Tensor& w = t.params.at(names::head_weight);
  const double bias = t.params.at(names::head_bias)[0];

  double expected = 0.0;
  for (std::size_t k = 1; k < c.length(); ++k) {
    const Tensor h = states[k].node_embeddings().value();
    const TemporalUMGraph& g = states[k].graph;
    auto pot = [&](NodeId n) {
      double s = bias;
      for (std::size_t x = 0; x < h.cols(); ++x) s += h(n, x) * w[x];
      return s;
    };
    auto lf = [&](NodeId n) {
      const auto& nb = g.neighbors(n);
      if (nb.empty()) return pot(n);
      double mean = 0.0;
      for (NodeId j : nb) mean += pot(j) / nb.size();
      return 0.5 * pot(n) + 0.5 * mean;
    };
    const NodeId m = g.message_node();
    std::vector<double> ric(6);
    for (UserId u = 0; u < 6; ++u)
      ric[u] = 1.0 - (lf(m) - lf(u)) / euclidean_distance(h.row_span(m), h.row_span(u));
    double z = 0.0;
    for (UserId u = 0; u < 6; ++u)
      if (!g.is_infected(u)) z += std::exp(ric[u]);
    expected += -(ric[c.events[k].user] - std::log(z));
  }
  expected /= 2.0;
  const std::vector<Cascade> one{c};
  CHECK(ricci_loss(f, one).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ricci loss gradients match finite differences") {
  for (bool clamp : {true, false}) {
    auto t = testing::tiny_instance();
    t.config.clamp_negative_w = clamp;
    const auto check = testing::check_gradients(t.config, t.params, t.graph,
                                                [&](Forward& f) { return ricci_loss(f, t.cascades); });
    INFO(check.where);
    CHECK(check.worst < 1e-4);
  }
}
