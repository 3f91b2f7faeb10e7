#include "rode/evaluation.hpp"

#include <algorithm>
#include <exception>
#include <optional>
#include <thread>

#include "rode/curvature.hpp"
#include "rode/encoder.hpp"
#include "rode/errors.hpp"

namespace rode {

namespace {

struct CascadeResult {
  RankingAccumulator ranking;
  ErrorAccumulator timing;
};

CascadeResult evaluate_cascade(Forward& forward, const RunConfig& config, const Cascade& c,
                               const EvalOptions& options) {
  CascadeResult r{RankingAccumulator(options.ks), {}};
  const std::size_t L = c.length();
  if (L < 2) return r;
  if (options.ranking) {
    const auto states = run_encoder(forward, c, L - 1);
    for (std::size_t k = 1; k < L; ++k) {
      const EmbeddingState& s = states[k];
      const Curvatures ric = message_curvatures(forward, s);
      r.ranking.add(rank_of(ric.values.value().data(), infected_mask(s.graph), c.events[k].user));
    }
  }
  if (options.timing) {
    const std::size_t p = revealed_prefix(L);
    const auto states = run_encoder(forward, c, p);
    const TimeScale scale = TimeScale::for_cascade(c, config.model.rescale);
    std::vector<UserId> targets;
    for (std::size_t j = p; j < L; ++j) targets.push_back(c.events[j].user);
    const auto predictions =
        predict_infection_times(forward, states, targets, scale, config.grid, config.solver_steps, config.encounter);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double truth = c.events[p + i].time;
      const double error = config.rmse_wallclock ? predictions[i].wall_clock - truth
                                                 : predictions[i].t_sys - scale.to_system(truth);
      r.timing.add(error, i + 1);
    }
  }
  return r;
}

}  // namespace

EvalReport evaluate(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                    std::span<const Cascade> test, const EvalOptions& options) {
  config.validate();
  for (const Cascade& c : test) {
    validate_cascade(c);
    validate_users(c, graph.num_users);
  }
  std::vector<std::optional<CascadeResult>> results(test.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, test.size()));
  std::vector<std::exception_ptr> failures(workers);
  auto work = [&](std::size_t w) {
    try {
      Forward forward(config.model, params, graph, false);
      for (std::size_t i = w; i < test.size(); i += workers)
        results[i] = evaluate_cascade(forward, config, test[i], options);
    } catch (...) {
      failures[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  RankingAccumulator ranking(options.ks);
  ErrorAccumulator timing;
  for (const auto& r : results) {
    if (!r) continue;
    ranking.merge(r->ranking);
    timing.merge(r->timing);
  }
  EvalReport report;
  if (options.ranking) ranking.write(report);
  report.rmse = timing.rmse();
  report.rmse_by_offset = timing.rmse_by_offset();
  report.time_pairs = timing.count();
  return report;
}

EvalReport evaluate_next_user(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                              std::span<const Cascade> test, std::vector<std::size_t> ks) {
  return evaluate(config, params, graph, test, {std::move(ks), true, false});
}

EvalReport evaluate_infection_time(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                                   std::span<const Cascade> test) {
  return evaluate(config, params, graph, test, {{1}, false, true});
}

double constant_time_rmse(std::span<const Cascade> test, double t_sys, RescaleMode mode) {
  ErrorAccumulator acc;
  for (const Cascade& c : test) {
    if (c.length() < 2) continue;
    const TimeScale scale = TimeScale::for_cascade(c, mode);
    const std::size_t p = revealed_prefix(c.length());
    for (std::size_t j = p; j < c.length(); ++j) acc.add(t_sys - scale.to_system(c.events[j].time), j - p + 1);
  }
  return acc.rmse();
}

std::vector<ScoredUser> rank_next_users(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                                        const Cascade& prefix, std::size_t top) {
  validate_cascade(prefix);
  validate_users(prefix, graph.num_users);
  Forward forward(config.model, params, graph, false);
  const auto states = run_encoder(forward, prefix);
  const EmbeddingState& s = states.back();
  const auto mask = infected_mask(s.graph);
  const Tensor ric = message_curvatures(forward, s).values.value();
  std::vector<ScoredUser> out;
  for (UserId u = 0; u < graph.num_users; ++u)
    if (!mask[u]) out.push_back({u, ric(u, 0)});
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredUser& a, const ScoredUser& b) { return a.curvature > b.curvature; });
  if (top > 0 && out.size() > top) out.resize(top);
  return out;
}

nlohmann::json report_json(const EvalReport& report, const RunConfig& config) {
  nlohmann::json j = to_json(report);
  j["config"] = to_json(config);
  j["seed"] = config.seed;
  return j;
}

}  // namespace rode
