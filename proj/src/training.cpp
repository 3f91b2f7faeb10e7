#include "rode/training.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "rode/curvature.hpp"
#include "rode/dynamics.hpp"
#include "rode/encoder.hpp"
#include "rode/errors.hpp"

namespace rode {

JointLoss joint_loss(Forward& forward, std::span<const Cascade> cascades, const RunConfig& config) {
  RODE_REQUIRE(!cascades.empty(), "joint loss over no cascades");
  ad::Var ricci_sum = ad::constant(0.0);
  std::size_t transitions = 0, events = 0;
  std::vector<TrajectoryTargets> batch;
  batch.reserve(cascades.size());
  for (const Cascade& c : cascades) {
    const auto states = run_encoder(forward, c);
    LossTerms terms = ricci_loss_terms(forward, c, states);
    if (terms.count > 0) {
      ricci_sum = ricci_sum + terms.total;
      transitions += terms.count;
    }
    batch.push_back(trajectory_targets(c, states, forward.config().rescale));
    events += c.length();
  }
  JointLoss loss;
  loss.ricci = transitions == 0 ? ricci_sum : ricci_sum / static_cast<double>(transitions);
  loss.ode = trajectory_error(forward, batch, config.solver_steps) / static_cast<double>(events);
  loss.total = loss.ricci + loss.ode * config.lambda_ode;
  return loss;
}

namespace {

// Re-runs the cascades one at a time to name the first that breaks.
[[noreturn]] void report_divergence(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                                    std::span<const Cascade> cascades, std::size_t epoch, const std::string& cause) {
  for (const Cascade& c : cascades) {
    Forward forward(config.model, params, graph, false);
    try {
      const JointLoss l = joint_loss(forward, std::span<const Cascade>(&c, 1), config);
      if (!std::isfinite(l.ricci.item()))
        throw NumericalDivergence(
            fmt::format("epoch {}: Ricci loss of cascade {} is not finite ({})", epoch, c.message_id, cause));
      if (!std::isfinite(l.ode.item()))
        throw NumericalDivergence(
            fmt::format("epoch {}: ODE loss of cascade {} is not finite ({})", epoch, c.message_id, cause));
    } catch (const NumericalDivergence& e) {
      if (std::string(e.what()).rfind("epoch", 0) == 0) throw;
      throw NumericalDivergence(fmt::format("epoch {}: cascade {}: {}", epoch, c.message_id, e.what()));
    }
  }
  throw NumericalDivergence(fmt::format("epoch {}: {}", epoch, cause));
}

}  // namespace

double evaluate_loss(const RunConfig& config, const ParamStore& params, const SocialGraph& graph,
                     std::span<const Cascade> cascades) {
  Forward forward(config.model, params, graph, false);
  return joint_loss(forward, cascades, config).total.item();
}

TrainResult train(const RunConfig& config, const SocialGraph& graph, std::span<const Cascade> train_set,
                  std::span<const Cascade> validation_set, const EpochCallback& on_epoch) {
  return train(config, init_params(config.model, graph.features.cols(), config.seed), graph, train_set,
               validation_set, on_epoch);
}

TrainResult train(const RunConfig& config, ParamStore initial, const SocialGraph& graph,
                  std::span<const Cascade> train_set, std::span<const Cascade> validation_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training needs at least one cascade");
  for (const auto* set : {&train_set, &validation_set})
    for (const Cascade& c : *set) {
      validate_cascade(c);
      validate_users(c, graph.num_users);
    }

  TrainResult result;
  result.params = std::move(initial);
  if (config.epochs == 0) return result;

  const bool validating = !validation_set.empty();
  double best = validating ? evaluate_loss(config, result.params, graph, validation_set)
                           : std::numeric_limits<double>::infinity();
  if (!std::isfinite(best)) best = std::numeric_limits<double>::infinity();
  ParamStore best_params = result.params;

  ParamStore params = result.params;
  Adam adam;
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    GradientMap grads;
    try {
      Forward forward(config.model, params, graph, true, config.model.dropout > 0.0 ? &dropout_rng : nullptr);
      const JointLoss loss = joint_loss(forward, train_set, config);
      entry.ricci = loss.ricci.item();
      entry.ode = loss.ode.item();
      entry.total = loss.total.item();
      if (!std::isfinite(entry.total)) report_divergence(config, params, graph, train_set, epoch, "non-finite loss");
      grads = ad::backward(loss.total);
    } catch (const NumericalDivergence& e) {
      if (std::string(e.what()).rfind("epoch", 0) == 0) throw;
      report_divergence(config, params, graph, train_set, epoch, e.what());
    }
    for (const auto& [name, g] : grads)
      if (!g.all_finite())
        throw NumericalDivergence(fmt::format("epoch {}: gradient of {} is not finite", epoch, name));

    adam.step(params, grads, config.lr);
    project_lipschitz(params);

    entry.validation = std::numeric_limits<double>::quiet_NaN();
    if (validating) {
      entry.validation = evaluate_loss(config, params, graph, validation_set);
      if (entry.validation < best) {
        best = entry.validation;
        best_params = params;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (validating) {
    result.params = std::move(best_params);
  } else {
    result.params = std::move(params);
    result.best_epoch = config.epochs;
  }
  return result;
}

}  // namespace rode
