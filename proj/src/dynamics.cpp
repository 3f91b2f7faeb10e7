#include "rode/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "rode/errors.hpp"
#include "rode/ode.hpp"

namespace rode {

TimeScale TimeScale::for_cascade(const Cascade& cascade, RescaleMode mode) {
  RODE_REQUIRE(!cascade.events.empty(), "cascade has no events");
  TimeScale s;
  s.origin = mode == RescaleMode::offset ? cascade.first_time() : 0.0;
  s.end = cascade.last_time();
  if (!(s.end > s.origin))
    throw ValidationError("cascade " + cascade.message_id + " has no positive time span to rescale by");
  return s;
}

TimeScale TimeScale::with_horizon(double horizon, double origin) {
  if (!(horizon > origin)) throw ValidationError("prediction horizon must lie after the time origin");
  return {origin, horizon};
}

double rescale_time(const Cascade& cascade, double t, RescaleMode mode) {
  return TimeScale::for_cascade(cascade, mode).to_system(t);
}

VelocityNet velocity_net(Forward& forward) {
  return {forward.velocity_features(), forward.mlp(names::velocity_mlp), forward.time_encoder(names::velocity_time),
          forward.dropout_rate(), forward.rng()};
}

ad::Var velocity(const VelocityNet& net, const std::vector<UserId>& users, const Tensor& times) {
  RODE_REQUIRE(times.rows() == users.size() && times.cols() == 1, "one time per user row is required");
  const ad::Var input = ad::concat_cols(ad::gather_rows(net.user_features, users), encode_times(net.time, times));
  return net.mlp(input, net.dropout, net.rng);
}

ad::Var velocity(const VelocityNet& net, UserId user, const ad::Var& position, double t_sys) {
  (void)position;
  return velocity(net, std::vector<UserId>{user}, Tensor::scalar(t_sys));
}

Trajectory solve_trajectory(const VelocityNet& net, UserId user, const Tensor& initial, double t_end,
                            std::size_t steps) {
  RODE_REQUIRE(t_end > 0.0 && t_end <= 1.0, "trajectory end time must lie in (0, 1]");
  RODE_REQUIRE(initial.rows() == 1, "initial position must be a single row");
  auto field = [&](const ad::Var& y, double t) { return velocity(net, user, y, t); };
  const auto samples = ode_solve(ad::constant(initial), 0.0, t_end, field, steps);
  Trajectory traj;
  traj.user = user;
  traj.solver_steps = steps;
  for (const auto& s : samples) traj.samples.emplace_back(s.time, s.state.value());
  traj.samples.front().second = initial;
  return traj;
}

ad::Var solve_endpoints(const VelocityNet& net, const std::vector<UserId>& users, const ad::Var& initials,
                        const std::vector<double>& t_end, std::size_t steps) {
  RODE_REQUIRE(users.size() == t_end.size() && initials.rows() == users.size(), "batch sizes differ");
  // d/ds phi(T s) = T v(T s) on s in [0, 1] reproduces RK4 on [0, T] step for step.
  const ad::Var span = ad::constant(Tensor::column(t_end));
  auto field = [&](const ad::Var&, double s) {
    Tensor times = Tensor::column(t_end);
    times *= s;
    return velocity(net, users, times) * span;
  };
  return ode_solve(initials, 0.0, 1.0, field, steps).back().state;
}

TrajectoryTargets trajectory_targets(const Cascade& cascade, const std::vector<EmbeddingState>& states,
                                     RescaleMode mode) {
  RODE_REQUIRE(states.size() == cascade.length() + 1, "trajectory targets need every snapshot of the cascade");
  const TimeScale scale = TimeScale::for_cascade(cascade, mode);
  TrajectoryTargets t;
  for (std::size_t k = 1; k <= cascade.length(); ++k) {
    const UserId u = cascade.events[k - 1].user;
    t.users.push_back(u);
    t.initials.push_back(states[1].user_row(u));
    t.targets.push_back(states[k].newest_row());
    t.t_sys.push_back(scale.to_system(cascade.events[k - 1].time));
  }
  return t;
}

ad::Var trajectory_error(Forward& forward, std::span<const TrajectoryTargets> batch, std::size_t steps) {
  std::vector<UserId> users;
  std::vector<ad::Var> initials, targets;
  std::vector<double> t_end;
  for (const auto& b : batch) {
    users.insert(users.end(), b.users.begin(), b.users.end());
    initials.insert(initials.end(), b.initials.begin(), b.initials.end());
    targets.insert(targets.end(), b.targets.begin(), b.targets.end());
    t_end.insert(t_end.end(), b.t_sys.begin(), b.t_sys.end());
  }
  RODE_REQUIRE(!users.empty(), "trajectory error over an empty batch");
  const VelocityNet net = velocity_net(forward);
  const ad::Var positions = solve_endpoints(net, users, ad::stack_rows(initials), t_end, steps);
  return ad::sum(ad::square(positions - ad::stack_rows(targets)));
}

ad::Var ode_loss(Forward& forward, std::span<const Cascade> cascades, std::size_t steps) {
  std::vector<TrajectoryTargets> batch;
  std::size_t events = 0;
  for (const Cascade& c : cascades) {
    batch.push_back(trajectory_targets(c, run_encoder(forward, c), forward.config().rescale));
    events += c.length();
  }
  return trajectory_error(forward, batch, steps) / static_cast<double>(events);
}

std::size_t earliest_argmin(std::span<const double> distances) {
  RODE_REQUIRE(!distances.empty(), "argmin over an empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < distances.size(); ++i)
    if (distances[i] < distances[best]) best = i;
  return best;
}

std::vector<TimePrediction> predict_infection_times(Forward& forward, const std::vector<EmbeddingState>& states,
                                                    const std::vector<UserId>& targets, const TimeScale& scale,
                                                    std::size_t grid, std::size_t solver_steps,
                                                    const EncounterOptions& encounter) {
  RODE_REQUIRE(states.size() >= 2, "time prediction needs at least one observed infection");
  RODE_REQUIRE(grid >= 1 && solver_steps >= 1, "grid and solver steps must be positive");
  const EmbeddingState& latest = states.back();
  if (targets.empty()) return {};
  std::vector<ad::Var> initial_rows;
  for (UserId u : targets) {
    RODE_REQUIRE(u < latest.graph.num_users(), "target user out of range");
    RODE_REQUIRE(!latest.graph.is_infected(u), "target user " + std::to_string(u) + " is already infected");
    initial_rows.push_back(ad::constant(states[1].user_row(u).value()));
  }

  // Inference only: plain values, no dropout.
  VelocityNet net = velocity_net(forward);
  net.user_features = ad::constant(net.user_features.value());
  net.mlp = Mlp{{ad::constant(net.mlp.weight[0].value()), ad::constant(net.mlp.weight[1].value()),
                 ad::constant(net.mlp.weight[2].value())},
                {ad::constant(net.mlp.bias[0].value()), ad::constant(net.mlp.bias[1].value()),
                 ad::constant(net.mlp.bias[2].value())}};
  net.time = {ad::constant(net.time.frequency.value()), ad::constant(net.time.phase.value())};
  net.dropout = 0.0;
  net.rng = nullptr;

  const std::size_t rows = targets.size();
  auto at_time = [&](double t) {
    Tensor times(rows, 1, t);
    return velocity(net, targets, times);
  };
  auto field = [&](const ad::Var&, double t) { return at_time(t); };
  const auto samples = ode_solve(ad::stack_rows(initial_rows), 0.0, 1.0, field, solver_steps);
  std::vector<Tensor> slopes;
  slopes.reserve(samples.size());
  for (const auto& s : samples) slopes.push_back(at_time(s.time).value());

  const double h = 1.0 / static_cast<double>(solver_steps);
  const std::size_t d = latest.message.cols();
  const Tensor& message = latest.message.value();
  const double current = std::clamp(scale.to_system(latest.time), 0.0, 1.0);

  std::vector<std::vector<double>> distances(rows, std::vector<double>(grid + 1));
  std::vector<double> grid_times(grid + 1);
  for (std::size_t j = 0; j <= grid; ++j) {
    const double t = current + (1.0 - current) * (static_cast<double>(j) / static_cast<double>(grid));
    grid_times[j] = t;
    const std::size_t n = std::min(static_cast<std::size_t>(t / h), solver_steps - 1);
    const double s = (t - samples[n].time) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const Tensor& y0 = samples[n].state.value();
    const Tensor& y1 = samples[n + 1].state.value();
    for (std::size_t r = 0; r < rows; ++r) {
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double pos = h00 * y0(r, c) + h10 * h * slopes[n](r, c) + h01 * y1(r, c) + h11 * h * slopes[n + 1](r, c);
        const double diff = pos - message(0, c);
        sq += diff * diff;
      }
      distances[r][j] = std::sqrt(sq);
    }
  }

  std::vector<TimePrediction> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t pick = earliest_argmin(distances[r]);
    if (encounter.rule == EncounterRule::threshold) {
      for (std::size_t j = 0; j <= grid; ++j) {
        if (distances[r][j] <= encounter.radius) {
          pick = j;
          break;
        }
      }
    }
    out.push_back({grid_times[pick], scale.to_wall_clock(grid_times[pick]), distances[r][pick]});
  }
  return out;
}

TimePrediction predict_infection_time(Forward& forward, const std::vector<EmbeddingState>& states, UserId target,
                                      const TimeScale& scale, std::size_t grid, std::size_t solver_steps,
                                      const EncounterOptions& encounter) {
  return predict_infection_times(forward, states, {target}, scale, grid, solver_steps, encounter).front();
}

}  // namespace rode
