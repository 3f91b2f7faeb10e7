#pragma once

#include <span>
#include <utility>
#include <vector>

#include "rode/autodiff.hpp"
#include "rode/curvature.hpp"
#include "rode/data.hpp"
#include "rode/encoder.hpp"
#include "rode/model.hpp"

namespace rode {

// Maps cascade seconds onto system time in [0, 1].
struct TimeScale {
  double origin = 0.0;
  double end = 1.0;

  static TimeScale for_cascade(const Cascade& cascade, RescaleMode mode);
  static TimeScale with_horizon(double horizon, double origin = 0.0);

  double to_system(double t) const { return (t - origin) / (end - origin); }
  double to_wall_clock(double t_sys) const { return origin + t_sys * (end - origin); }
};

double rescale_time(const Cascade& cascade, double t, RescaleMode mode = RescaleMode::max_time);

// v(u, t) = MLP(g(u) || time_encoding(t)); the current position is not an input.
struct VelocityNet {
  ad::Var user_features;  // N x d, g(u) for every user
  Mlp mlp;
  TimeEncoder time;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

VelocityNet velocity_net(Forward& forward);

// Row r is the velocity of users[r] at system time times(r, 0).
ad::Var velocity(const VelocityNet& net, const std::vector<UserId>& users, const Tensor& times);
ad::Var velocity(const VelocityNet& net, UserId user, const ad::Var& position, double t_sys);

struct Trajectory {
  UserId user = 0;
  std::vector<std::pair<double, Tensor>> samples;  // (t_sys, position), first at 0
  std::size_t solver_steps = 0;
};

Trajectory solve_trajectory(const VelocityNet& net, UserId user, const Tensor& initial, double t_end,
                            std::size_t steps);

// Positions of users[r] at t_end[r], each integrated from 0 with `steps` RK4 steps.
// All rows are integrated together on a shared [0, 1] grid by rescaling time per row.
ad::Var solve_endpoints(const VelocityNet& net, const std::vector<UserId>& users, const ad::Var& initials,
                        const std::vector<double>& t_end, std::size_t steps);

// One cascade's contribution to the trajectory loss.
struct TrajectoryTargets {
  std::vector<UserId> users;
  std::vector<ad::Var> initials;  // h^1 of each user
  std::vector<ad::Var> targets;   // h^k of the user infected at step k
  std::vector<double> t_sys;
};

TrajectoryTargets trajectory_targets(const Cascade& cascade, const std::vector<EmbeddingState>& states,
                                     RescaleMode mode);

// Sum of squared distances between solved positions and snapshots (unnormalized).
ad::Var trajectory_error(Forward& forward, std::span<const TrajectoryTargets> batch, std::size_t steps);

// Squared trajectory error summed over every infection and divided by the number of events.
ad::Var ode_loss(Forward& forward, std::span<const Cascade> cascades, std::size_t steps);

enum class EncounterRule { argmin, threshold };

struct EncounterOptions {
  EncounterRule rule = EncounterRule::argmin;
  double radius = 0.0;  // threshold rule only
};

struct TimePrediction {
  double t_sys = 0.0;
  double wall_clock = 0.0;
  double min_distance = 0.0;
};

// Grid search helper: earliest index with the smallest distance.
std::size_t earliest_argmin(std::span<const double> distances);

// Encounter time of `target` with the latest message coordinate of `states`.
//
// The target's trajectory starts from its step-1 coordinate, is integrated once
// over [0, 1] with `solver_steps` RK4 steps, and is read off at
// current + (1 - current) * j / grid (j = 0..grid) through cubic Hermite
// interpolation of the solver output, so halving the grid spacing only adds points.
TimePrediction predict_infection_time(Forward& forward, const std::vector<EmbeddingState>& states, UserId target,
                                      const TimeScale& scale, std::size_t grid, std::size_t solver_steps,
                                      const EncounterOptions& encounter = {});

// Same, for several targets sharing one observed prefix.
std::vector<TimePrediction> predict_infection_times(Forward& forward, const std::vector<EmbeddingState>& states,
                                                    const std::vector<UserId>& targets, const TimeScale& scale,
                                                    std::size_t grid, std::size_t solver_steps,
                                                    const EncounterOptions& encounter = {});

}  // namespace rode
