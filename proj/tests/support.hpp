#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rode/autodiff.hpp"
#include "rode/data.hpp"
#include "rode/model.hpp"
#include "rode/params.hpp"

namespace rode::testing {

struct GradCheck {
  double worst = 0.0;  // largest relative error seen
  std::string where;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor): relative error, with a floor for entries whose
// true derivative is zero up to rounding.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares backward() on loss(forward) with central differences for every scalar of every parameter.
inline GradCheck check_gradients(const ModelConfig& config, const ParamStore& params, const SocialGraph& graph,
                                 const std::function<ad::Var(Forward&)>& loss, double h = 1e-5) {
  Forward forward(config, params, graph, true);
  const GradientMap grads = ad::backward(loss(forward));
  GradCheck out;
  ParamStore probe = params;
  for (const auto& [name, value] : params) {
    const auto it = grads.find(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = probe.at(name)[i];
      probe.at(name)[i] = saved + h;
      Forward plus(config, probe, graph, false);
      const double up = loss(plus).item();
      probe.at(name)[i] = saved - h;
      Forward minus(config, probe, graph, false);
      const double down = loss(minus).item();
      probe.at(name)[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = it == grads.end() ? 0.0 : it->second[i];
      const double err = relative_error(analytic, numeric);
      ++out.checked;
      if (err > out.worst) {
        out.worst = err;
        out.where = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

// Six users on a small connected graph with Gaussian features, plus two cascades.
struct TinyInstance {
  SocialGraph graph;
  std::vector<Cascade> cascades;
  ModelConfig config;
  ParamStore params;
};

inline TinyInstance tiny_instance(std::uint64_t seed = 11) {
  TinyInstance t;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor features(6, 3);
  for (double& x : features.data()) x = normal(rng);
  const std::vector<std::pair<UserId, UserId>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 3}};
  t.graph = make_social_graph(6, edges, features);
  t.cascades.push_back({"a", {{0, 0.0}, {3, 1.5}, {4, 2.0}, {1, 3.25}}});
  t.cascades.push_back({"b", {{5, 0.5}, {2, 1.0}, {1, 4.0}}});
  t.config.embedding_dim = 4;
  t.config.time_dim = 3;
  t.config.dropout = 0.0;
  t.params = init_params(t.config, 3, seed);
  // Move the potential head off the origin so curvature terms are not degenerate.
  Tensor& w = t.params.at(names::head_weight);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i % 2 == 0 ? 0.4 : -0.3);
  return t;
}

}  // namespace rode::testing
