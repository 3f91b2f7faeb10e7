#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rode/errors.hpp"

namespace rode {

template <class State>
struct OdeSample {
  double time;
  State state;
};

// Classical fixed-step RK4 over a uniform grid of `steps` intervals on [t0, t1].
// Returns steps + 1 samples, endpoints included. `State` needs `State + State`,
// `double * State` and an ADL-visible `is_finite(const State&)`; this works for
// both plain tensors and differentiable values, so gradients flow through the
// unrolled steps.
template <class State, class Field>
std::vector<OdeSample<State>> ode_solve(const State& initial, double t0, double t1, Field&& field,
                                        std::size_t steps) {
  RODE_REQUIRE(t0 <= t1, "ode_solve requires t0 <= t1");
  RODE_REQUIRE(steps >= 1, "ode_solve requires at least one step");
  std::vector<OdeSample<State>> samples;
  samples.reserve(steps + 1);
  samples.push_back({t0, initial});
  const double h = (t1 - t0) / static_cast<double>(steps);
  State y = initial;
  for (std::size_t n = 0; n < steps; ++n) {
    const double t = t0 + static_cast<double>(n) * h;
    const State k1 = field(y, t);
    const State k2 = field(y + (0.5 * h) * k1, t + 0.5 * h);
    const State k3 = field(y + (0.5 * h) * k2, t + 0.5 * h);
    const State k4 = field(y + h * k3, t + h);
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!is_finite(y))
      throw NumericalDivergence("ODE state became non-finite at step " + std::to_string(n + 1) + " of " +
                                std::to_string(steps));
    const double t_next = n + 1 == steps ? t1 : t0 + static_cast<double>(n + 1) * h;
    samples.push_back({t_next, y});
  }
  return samples;
}

}  // namespace rode
