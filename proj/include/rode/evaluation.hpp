#pragma once

#include <span>
#include <utility>
#include <vector>

#include "rode/config.hpp"
#include "rode/data.hpp"
#include "rode/dynamics.hpp"
#include "rode/metrics.hpp"
#include "rode/params.hpp"

namespace rode {

struct EvalOptions {
  std::vector<std::size_t> ks{10, 50, 100};
  bool ranking = true;
  bool timing = true;
};

// Number of events revealed before predicting the remaining infection times.
inline std::size_t revealed_prefix(std::size_t length) { return (length + 1) / 2; }

// Ranking and time metrics over `test`. Cascades are processed on config.threads
// workers and merged in input order, so the report does not depend on the thread count.
EvalReport evaluate(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                    std::span<const Cascade> test, const EvalOptions& options = {});

EvalReport evaluate_next_user(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                              std::span<const Cascade> test, std::vector<std::size_t> ks);
EvalReport evaluate_infection_time(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                                   std::span<const Cascade> test);

// RMSE of always answering `t_sys` for every held-out user.
double constant_time_rmse(std::span<const Cascade> test, double t_sys, RescaleMode mode = RescaleMode::max_time);

struct ScoredUser {
  UserId user = 0;
  double curvature = 0.0;
};

// Uninfected users after the whole of `prefix` by descending Ric(m, u), ties by lower id.
// top == 0 returns every candidate.
std::vector<ScoredUser> rank_next_users(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                                        const Cascade& prefix, std::size_t top);

nlohmann::json report_json(const EvalReport& report, const RunConfig& config);

}  // namespace rode
