// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <fmt/core.h>

#include "rode/config.hpp"
#include "rode/curvature.hpp"
#include "rode/dynamics.hpp"
#include "rode/evaluation.hpp"
#include "rode/metrics.hpp"
#include "rode/ode.hpp"
#include "rode/synthetic.hpp"
#include "rode/training.hpp"
#include "support.hpp"

using namespace rode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Random G_m over `users` users with `infected` of them infected in random order and random link weights.
TemporalUMGraph random_um_graph(std::size_t users, std::size_t infected, std::mt19937_64& rng) {
  std::vector<UserId> order(users);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> weight(0.01, 0.99);
  TemporalUMGraph g(users);
  for (std::size_t k = 0; k < infected; ++k) {
    std::vector<double> w(k);
    for (double& x : w) x = weight(rng);
    g.add_infection(order[k], weight(rng), w);
  }
  return g;
}

Tensor gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(r, c);
  for (double& x : t.data()) x = n(rng);
  return t;
}

// Head with a random weight, scaled past the unit ball about half the time, then projected.
LipschitzHead random_head(std::size_t d, std::mt19937_64& rng) {
  Tensor w = gaussian(d, 1, rng, 1.5);
  project_to_unit_ball(w);
  return {ad::constant(w), ad::constant(gaussian(1, 1, rng))};
}

Outcome duality_bound() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> users_dist(2, 11);
  std::uniform_real_distribution<double> alpha_dist(0.0, 1.0);
  const std::size_t trials = 1000;
  std::size_t pairs = 0, violations = 0;
  double worst = -INFINITY;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n = users_dist(rng);
    const std::size_t infected = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const TemporalUMGraph g = random_um_graph(n, infected, rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const Tensor h = gaussian(n + 1, d, rng);
    const LipschitzHead head = random_head(d, rng);
    const double alpha = alpha_dist(rng);
    const ad::Var walked = ad::sparse_matmul(lazy_walk_operator(g, alpha), node_potentials(ad::constant(h), head));
    std::vector<MassDistribution> mass;
    for (NodeId a = 0; a < g.num_nodes(); ++a) mass.push_back(mass_distribution(g, a, alpha));
    for (NodeId a = 0; a < g.num_nodes(); ++a) {
      for (NodeId b = 0; b < g.num_nodes(); ++b) {
        if (a == b) continue;
        const double surrogate = walked.value()[a] - walked.value()[b];
        const double exact = wasserstein_lp(mass[a], mass[b], h);
        worst = std::max(worst, surrogate - exact);
        if (surrogate > exact + 1e-6) ++violations;
        ++pairs;
      }
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 30.0,
          fmt::format("{} trials, {} node pairs, {} violations, max(surrogate - LP) = {:.3e}, {:.1f} s", trials, pairs,
                      violations, worst, secs)};
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  const testing::TinyInstance t = testing::tiny_instance();
  RunConfig rc;
  rc.model = t.config;
  rc.solver_steps = 4;
  rc.lambda_ode = 1.0;
  const testing::GradCheck ricci =
      testing::check_gradients(t.config, t.params, t.graph, [&](Forward& f) { return ricci_loss(f, t.cascades); });
  const testing::GradCheck ode = testing::check_gradients(
      t.config, t.params, t.graph, [&](Forward& f) { return ode_loss(f, t.cascades, rc.solver_steps); });
  const testing::GradCheck joint = testing::check_gradients(
      t.config, t.params, t.graph, [&](Forward& f) { return joint_loss(f, t.cascades, rc).total; });
  const double secs = seconds_since(start);
  const double worst = std::max({ricci.worst, ode.worst, joint.worst});
  return {worst < 1e-4 && secs < 60.0,
          fmt::format("{} parameters, worst relative error ricci {:.2e} ({}), ode {:.2e} ({}), joint {:.2e} ({}), "
                      "{:.1f} s",
                      ricci.checked, ricci.worst, ricci.where, ode.worst, ode.where, joint.worst, joint.where, secs)};
}

Outcome solver_order() {
  auto field = [](const Tensor& y, double) { return y; };
  std::vector<double> log_h, log_err;
  std::string errors;
  for (std::size_t steps : {8, 16, 32, 64}) {
    const auto samples = ode_solve(Tensor::scalar(1.0), 0.0, 1.0, field, steps);
    const double err = std::abs(samples.back().state[0] - std::exp(1.0));
    log_h.push_back(std::log(1.0 / static_cast<double>(steps)));
    log_err.push_back(std::log(err));
    errors += fmt::format(" {:.3e}", err);
  }
  // least-squares slope of log error against log step size
  const double n = static_cast<double>(log_h.size());
  const double mx = std::accumulate(log_h.begin(), log_h.end(), 0.0) / n;
  const double my = std::accumulate(log_err.begin(), log_err.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    sxy += (log_h[i] - mx) * (log_err[i] - my);
    sxx += (log_h[i] - mx) * (log_h[i] - mx);
  }
  const double slope = sxy / sxx;
  const double at32 = ode_solve(Tensor::scalar(1.0), 0.0, 1.0, field, 32).back().state[0];
  const double gap = std::abs(at32 - std::exp(1.0));
  return {slope >= 3.7 && slope <= 4.3 && gap <= 1e-6,
          fmt::format("slope {:.3f}, errors at h = 1/8..1/64:{}, |phi(1) - e| at 32 steps = {:.3e}", slope, errors,
                      gap)};
}

Outcome curvature_contracts() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> users_dist(2, 11);
  const std::size_t instances = 10000;
  std::size_t mass_bad = 0, ric_bad = 0, mask_bad = 0, sum_bad = 0;
  double worst_mass = 0.0, worst_sum = 0.0, max_ric = -INFINITY;
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t n = users_dist(rng);
    const std::size_t infected = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const TemporalUMGraph g = random_um_graph(n, infected, rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const ad::Var h = ad::constant(gaussian(n + 1, d, rng));
    const LipschitzHead head = random_head(d, rng);
    const CurvatureOptions options;  // default: alpha 0.5, clamp on

    for (NodeId a = 0; a < g.num_nodes(); ++a) {
      const MassDistribution m = mass_distribution(g, a, options.alpha);
      const double total = std::accumulate(m.probabilities.begin(), m.probabilities.end(), 0.0);
      worst_mass = std::max(worst_mass, std::abs(total - 1.0));
      if (std::abs(total - 1.0) > 1e-9) ++mass_bad;
    }
    const Curvatures ric = message_curvatures(g, h, head, options);
    for (double r : ric.values.value().data()) {
      max_ric = std::max(max_ric, r);
      if (!(r <= 1.0)) ++ric_bad;
    }
    const std::vector<bool> mask = infected_mask(g);
    const Tensor p = infection_distribution(ric.values, mask).value();
    double total = 0.0;
    for (UserId u = 0; u < n; ++u) {
      if (mask[u]) {
        if (p[u] != 0.0) ++mask_bad;
      } else {
        total += p[u];
      }
    }
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    if (std::abs(total - 1.0) > 1e-12) ++sum_bad;
  }
  return {mass_bad + ric_bad + mask_bad + sum_bad == 0,
          fmt::format("{} instances; mass sum off by <= {:.1e}, max Ric {:.6f}, nonzero masked entries {}, "
                      "softmax sum off by <= {:.1e}",
                      instances, worst_mass, max_ric, mask_bad, worst_sum)};
}

// Fixed settings, chosen before looking at the outcome of this criterion.
RunConfig synthetic_run_config() {
  RunConfig rc;
  rc.model.embedding_dim = 16;
  rc.model.time_dim = 16;
  rc.model.dropout = 0.0;
  rc.lr = 0.01;
  rc.epochs = 100;
  rc.solver_steps = 8;
  rc.grid = 64;
  rc.lambda_ode = 10.0;
  rc.seed = 42;
  return rc;
}

Outcome synthetic_end_to_end() {
  const auto start = Clock::now();
  const SyntheticData data = generate_synthetic(50, 200, 7);
  const CascadeSplit split = split_chronologically(data.cascades);
  const RunConfig rc = synthetic_run_config();
  const EvalOptions options{{5}, true, true};

  const ParamStore untrained = init_params(rc.model, data.graph.features.cols(), rc.seed);
  const EvalReport before = evaluate(rc, untrained, data.graph, split.test, options);
  const TrainResult trained = train(rc, data.graph, split.train, split.validation);
  const EvalReport after = evaluate(rc, trained.params, data.graph, split.test, options);
  const double midpoint = constant_time_rmse(split.test, 0.75, rc.model.rescale);
  const double secs = seconds_since(start);

  const double floor = 3.0 * 100.0 * 5.0 / 49.0;
  const bool ranking = after.hits_at.at(5) >= floor;
  const bool timing = after.rmse < before.rmse && after.rmse < midpoint;
  return {ranking && timing && secs < 300.0,
          fmt::format("H@5 {:.1f}% (need >= {:.1f}%, {} steps); RMSE {:.4f} vs untrained {:.4f} and midpoint {:.4f} "
                      "({} pairs); best epoch {}, {:.1f} s",
                      after.hits_at.at(5), floor, after.ranking_steps, after.rmse, before.rmse, midpoint,
                      after.time_pairs, trained.best_epoch, secs)};
}

Outcome determinism() {
  const SyntheticData data = generate_synthetic(25, 40, 19);
  const CascadeSplit split = split_chronologically(data.cascades);
  RunConfig rc;
  rc.model.embedding_dim = 8;
  rc.model.time_dim = 4;
  rc.model.dropout = 0.3;
  rc.lr = 0.01;
  rc.epochs = 8;
  rc.solver_steps = 4;
  rc.grid = 32;
  auto run = [&](std::size_t threads) {
    RunConfig c = rc;
    c.threads = threads;
    const TrainResult r = train(c, data.graph, split.train, split.validation);
    std::ostringstream ckpt;
    write_checkpoint(ckpt, r.params);
    const EvalReport report = evaluate(c, r.params, data.graph, split.test, {{1, 5, 10}, true, true});
    nlohmann::json j = report_json(report, c);
    j["config"].erase("threads");
    return std::make_pair(ckpt.str(), j.dump());
  };
  const auto a = run(1), b = run(1), c = run(4);
  const bool ckpt_same = a.first == b.first && a.first == c.first;
  const bool json_same = a.second == b.second && a.second == c.second;
  return {ckpt_same && json_same,
          fmt::format("checkpoints identical: {}, report JSON identical: {} (runs with 1, 1 and 4 threads)",
                      ckpt_same ? "yes" : "no", json_same ? "yes" : "no")};
}

Outcome time_encoding_bound() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  std::uniform_real_distribution<double> freq(-50.0, 50.0), phase(-10.0, 10.0), time(0.0, 1e6);
  const std::size_t samples = 100000;
  std::size_t bad = 0;
  double worst = -INFINITY;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t t_dim = dim(rng);
    Tensor w(1, t_dim), th(1, t_dim);
    for (double& x : w.data()) x = freq(rng);
    for (double& x : th.data()) x = phase(rng);
    const TimeEncoder enc{ad::constant(w), ad::constant(th)};
    const double bound = std::sqrt(1.0 / static_cast<double>(t_dim));
    const Tensor encoded = encode_time(enc, time(rng)).value();
    for (double v : encoded.data()) {
      worst = std::max(worst, std::abs(v) - bound);
      if (std::abs(v) > bound + 1e-12) ++bad;
    }
  }
  return {bad == 0, fmt::format("{} samples, max(|component| - sqrt(1/T)) = {:.3e}", samples, worst)};
}

Outcome metric_sanity() {
  std::mt19937_64 rng(404);
  const std::size_t n = 100, trials = 10000;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  RankingAccumulator acc({10});
  const std::vector<bool> mask(n, false);
  std::vector<double> scores(n);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& s : scores) s = u(rng);
    acc.add(rank_of(scores, mask, pick(rng)));
  }
  EvalReport r;
  acc.write(r);
  const double sigma = 100.0 * std::sqrt(0.1 * 0.9 / static_cast<double>(trials));
  const double h = r.hits_at.at(10);
  return {std::abs(h - 10.0) <= 3.0 * sigma,
          fmt::format("H@10 = {:.2f}% over {} rankings, 3 sigma band [{:.2f}, {:.2f}]", h, trials,
                      10.0 - 3.0 * sigma, 10.0 + 3.0 * sigma)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"duality bound", duality_bound},
      {"gradient integrity", gradient_integrity},
      {"solver order", solver_order},
      {"curvature contracts", curvature_contracts},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"determinism", determinism},
      {"time-encoding bound", time_encoding_bound},
      {"metric sanity", metric_sanity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
