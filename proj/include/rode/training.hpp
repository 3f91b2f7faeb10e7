#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "rode/autodiff.hpp"
#include "rode/config.hpp"
#include "rode/data.hpp"
#include "rode/model.hpp"
#include "rode/params.hpp"

namespace rode {

struct JointLoss {
  ad::Var ricci;  // mean over transitions
  ad::Var ode;    // sum of squared errors over sum of lengths
  ad::Var total;  // ricci + lambda_ode * ode
};

// Runs the encoder once per cascade and builds both objectives from the same snapshots.
JointLoss joint_loss(Forward& forward, std::span<const Cascade> cascades, const RunConfig& config);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double ricci = 0.0;
  double ode = 0.0;
  double total = 0.0;
  double validation = 0.0;  // NaN without validation cascades
};

struct TrainResult {
  ParamStore params;  // best-validation parameters, or the last ones without validation data
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 = initial parameters
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Loss of `params` on `cascades` with dropout off.
double evaluate_loss(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                     std::span<const Cascade> cascades);

// Full-batch Adam on the joint objective, one step per epoch, with the potential
// head projected back to the unit ball after every step.
TrainResult train(const RunConfig& config, const SocialGraph& graph, std::span<const Cascade> train_set,
                  std::span<const Cascade> validation_set, const EpochCallback& on_epoch = {});

// Same, continuing from given parameters.
TrainResult train(const RunConfig& config, ParamStore initial, const SocialGraph& graph,
                  std::span<const Cascade> train_set, std::span<const Cascade> validation_set,
                  const EpochCallback& on_epoch = {});

}  // namespace rode
