#include "rode/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>

#include "rode/curvature.hpp"
#include "rode/encoder.hpp"
#include "rode/errors.hpp"

namespace rode {

namespace {

std::vector<std::size_t> component_sizes(const SocialGraph& graph, std::vector<std::size_t>& component_of) {
  const auto adj = graph.neighbor_lists();
  component_of.assign(graph.num_users, SIZE_MAX);
  std::vector<std::size_t> sizes;
  for (UserId s = 0; s < graph.num_users; ++s) {
    if (component_of[s] != SIZE_MAX) continue;
    const std::size_t id = sizes.size();
    std::size_t size = 0;
    std::queue<UserId> q;
    q.push(s);
    component_of[s] = id;
    while (!q.empty()) {
      const UserId u = q.front();
      q.pop();
      ++size;
      for (UserId v : adj[u])
        if (component_of[v] == SIZE_MAX) {
          component_of[v] = id;
          q.push(v);
        }
    }
    sizes.push_back(size);
  }
  return sizes;
}

std::size_t sample_index(std::span<const double> logits, std::mt19937_64& rng) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> cumulative(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) cumulative[i] = total += std::exp(logits[i] - top);
  const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
  return std::min<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin(),
                               logits.size() - 1);
}

}  // namespace

SyntheticData generate_synthetic(std::size_t num_users, std::size_t num_cascades, std::uint64_t seed,
                                 const PlantedParams& planted) {
  if (num_users < 5) throw ValidationError("synthetic data needs at least 5 users");
  if (planted.min_length < 2 || planted.mean_length < static_cast<double>(planted.min_length))
    throw ValidationError("cascade lengths must be at least 2 and the mean no smaller than the minimum");
  if (!(planted.temperature > 0.0)) throw ValidationError("teacher temperature must be positive");

  std::mt19937_64 rng(seed);
  SyntheticData data;
  data.seed = seed;
  data.planted = planted;

  const double n = static_cast<double>(num_users);
  const double p = std::min(1.0, 2.0 * std::log(n) / n);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<UserId, UserId>> edges;
  for (UserId a = 0; a < num_users; ++a)
    for (UserId b = a + 1; b < num_users; ++b)
      if (coin(rng)) edges.emplace_back(a, b);
  Tensor features(num_users, planted.feature_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : features.data()) x = normal(rng);
  data.graph = make_social_graph(num_users, edges, features);

  data.teacher_config.embedding_dim = planted.embedding_dim;
  data.teacher_config.time_dim = planted.time_dim;
  data.teacher_config.alpha = planted.alpha;
  data.teacher_config.dropout = 0.0;
  data.teacher_config.clamp_negative_w = planted.clamp_negative_w;
  data.teacher = init_params(data.teacher_config, planted.feature_dim, rng());

  std::vector<std::size_t> component_of;
  const auto sizes = component_sizes(data.graph, component_of);
  const auto adj = data.graph.neighbor_lists();
  Forward teacher(data.teacher_config, data.teacher, data.graph, false);
  std::poisson_distribution<std::size_t> extra(planted.mean_length - static_cast<double>(planted.min_length));
  std::uniform_int_distribution<UserId> pick_user(0, num_users - 1);

  for (std::size_t m = 0; m < num_cascades; ++m) {
    const std::size_t length = std::min(planted.min_length + extra(rng), num_users);
    UserId root = pick_user(rng);
    std::size_t tries = 0;
    while (sizes[component_of[root]] < length) {
      if (++tries > planted.max_retries)
        throw ValidationError(fmt::format("no root component holds a cascade of length {} after {} retries", length,
                                          planted.max_retries));
      root = pick_user(rng);
    }

    Cascade c;
    c.message_id = fmt::format("m{}", m);
    c.events.push_back({root, 0.0});
    EmbeddingState state = step_update(teacher, initial_state(teacher, root), c.events[0], 0.0);
    while (c.length() < length) {
      std::vector<UserId> candidates;
      if (planted.frontier_only) {
        std::vector<char> seen(num_users, 0);
        for (UserId u : state.infected())
          for (UserId v : adj[u])
            if (!state.graph.is_infected(v) && !seen[v]) {
              seen[v] = 1;
              candidates.push_back(v);
            }
        std::sort(candidates.begin(), candidates.end());
      } else {
        for (UserId u = 0; u < num_users; ++u)
          if (!state.graph.is_infected(u)) candidates.push_back(u);
      }
      RODE_REQUIRE(!candidates.empty(), "no candidate left to infect");

      const Tensor ric = message_curvatures(teacher, state).values.value();
      std::vector<double> logits;
      for (UserId u : candidates) logits.push_back(ric(u, 0) / planted.temperature);
      const UserId next = candidates[sample_index(logits, rng)];

      const double distance = euclidean_distance(state.message.value().data(), state.user_row(next).value().data());
      const double jitter = std::exp(planted.gap_jitter * normal(rng));
      const double gap = planted.gap_scale * (planted.gap_offset + distance) * jitter;
      const InfectionEvent event{next, c.last_time() + gap};
      const double prev = c.last_time();
      c.events.push_back(event);
      state = step_update(teacher, state, event, prev);
    }
    data.cascades.push_back(std::move(c));
  }
  return data;
}

nlohmann::json to_json(const PlantedParams& p) {
  return {{"alpha", p.alpha},
          {"temperature", p.temperature},
          {"frontier_only", p.frontier_only},
          {"clamp_negative_w", p.clamp_negative_w},
          {"feature_dim", p.feature_dim},
          {"embedding_dim", p.embedding_dim},
          {"time_dim", p.time_dim},
          {"mean_length", p.mean_length},
          {"min_length", p.min_length},
          {"gap_scale", p.gap_scale},
          {"gap_offset", p.gap_offset},
          {"gap_jitter", p.gap_jitter}};
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw ValidationError(fmt::format("cannot write {}", (dir / name).string()));
    return out;
  };
  {
    auto out = open("graph.tsv");
    write_graph(out, data.graph);
  }
  {
    auto out = open("features.tsv");
    write_features(out, data.graph.features);
  }
  save_cascades(dir / "cascades.tsv", data.cascades);
  save_checkpoint(dir / "teacher.ckpt", data.teacher);
  auto out = open("teacher.json");
  out << nlohmann::json{{"num_users", data.graph.num_users},
                        {"num_cascades", data.cascades.size()},
                        {"seed", data.seed},
                        {"planted", to_json(data.planted)}}
             .dump(2)
      << '\n';
}

}  // namespace rode
