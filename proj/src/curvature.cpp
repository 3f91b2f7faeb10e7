#include "rode/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rode/errors.hpp"

namespace rode {

CurvatureOptions curvature_options(const ModelConfig& config) {
  return {config.alpha, config.clamp_negative_w, 1e-8};
}

MassDistribution mass_distribution(const TemporalUMGraph& graph, NodeId node, double alpha) {
  RODE_REQUIRE(node < graph.num_nodes(), "node is not part of G_m");
  RODE_REQUIRE(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  MassDistribution p;
  p.center = node;
  p.alpha = alpha;
  const auto& nbrs = graph.neighbors(node);
  p.support.push_back(node);
  if (nbrs.empty()) {
    p.probabilities.push_back(1.0);
    return p;
  }
  p.probabilities.push_back(alpha);
  const double share = (1.0 - alpha) / static_cast<double>(nbrs.size());
  for (NodeId j : nbrs) {
    p.support.push_back(j);
    p.probabilities.push_back(share);
  }
  return p;
}

double exact_transport(std::span<const double> supply, std::span<const double> demand, const Tensor& cost) {
  const std::size_t ns = supply.size(), nd = demand.size();
  RODE_REQUIRE(ns > 0 && nd > 0, "transport needs non-empty supports");
  RODE_REQUIRE(cost.rows() == ns && cost.cols() == nd, "cost matrix shape mismatch");
  const double total_supply = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double total_demand = std::accumulate(demand.begin(), demand.end(), 0.0);
  RODE_REQUIRE(std::abs(total_supply - total_demand) <= 1e-9 * std::max(1.0, total_supply),
               "supply and demand totals differ");
  constexpr double kTol = 1e-15;
  std::vector<double> left(supply.begin(), supply.end());
  std::vector<double> need(demand.begin(), demand.end());
  Tensor flow(ns, nd);
  const double inf = std::numeric_limits<double>::infinity();

  // Residual graph: forward arcs source->sink (uncapacitated, cost c), backward
  // arcs sink->source (capacity = flow, cost -c). Bellman-Ford from every
  // source that still has mass.
  for (std::size_t iter = 0; iter < 64 * (ns + nd) * (ns + nd) + 64; ++iter) {
    if (std::accumulate(left.begin(), left.end(), 0.0) <= 1e-12) break;
    std::vector<double> dist(ns + nd, inf);
    std::vector<std::ptrdiff_t> prev(ns + nd, -1);
    for (std::size_t i = 0; i < ns; ++i)
      if (left[i] > kTol) dist[i] = 0.0;
    for (std::size_t round = 0; round < ns + nd; ++round) {
      bool changed = false;
      for (std::size_t i = 0; i < ns; ++i) {
        if (dist[i] == inf) continue;
        for (std::size_t j = 0; j < nd; ++j) {
          const double nd_ = dist[i] + cost(i, j);
          if (nd_ < dist[ns + j] - 1e-15) {
            dist[ns + j] = nd_;
            prev[ns + j] = static_cast<std::ptrdiff_t>(i);
            changed = true;
          }
        }
      }
      for (std::size_t j = 0; j < nd; ++j) {
        if (dist[ns + j] == inf) continue;
        for (std::size_t i = 0; i < ns; ++i) {
          if (flow(i, j) <= kTol) continue;
          const double nd_ = dist[ns + j] - cost(i, j);
          if (nd_ < dist[i] - 1e-15) {
            dist[i] = nd_;
            prev[i] = static_cast<std::ptrdiff_t>(ns + j);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    std::size_t sink = nd;
    for (std::size_t j = 0; j < nd; ++j)
      if (need[j] > kTol && dist[ns + j] < inf && (sink == nd || dist[ns + j] < dist[ns + sink])) sink = j;
    if (sink == nd) break;

    // Walk back to the originating source, collecting the bottleneck.
    double amount = need[sink];
    std::size_t at = ns + sink;
    while (prev[at] >= 0) {
      const auto from = static_cast<std::size_t>(prev[at]);
      if (at < ns) amount = std::min(amount, flow(at, from - ns));  // backward arc sink->source
      at = from;
    }
    amount = std::min(amount, left[at]);
    const std::size_t origin = at;
    at = ns + sink;
    while (prev[at] >= 0) {
      const auto from = static_cast<std::size_t>(prev[at]);
      if (at >= ns)
        flow(from, at - ns) += amount;
      else
        flow(at, from - ns) -= amount;
      at = from;
    }
    left[origin] -= amount;
    need[sink] -= amount;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t j = 0; j < nd; ++j) total += flow(i, j) * cost(i, j);
  return total;
}

double wasserstein_lp(const MassDistribution& p, const MassDistribution& q, const Tensor& coords) {
  RODE_REQUIRE(!p.support.empty() && !q.support.empty(), "mass distributions need non-empty supports");
  Tensor cost(p.support.size(), q.support.size());
  for (std::size_t i = 0; i < p.support.size(); ++i)
    for (std::size_t j = 0; j < q.support.size(); ++j)
      cost(i, j) = euclidean_distance(coords.row_span(p.support[i]), coords.row_span(q.support[j]));
  return exact_transport(p.probabilities, q.probabilities, cost);
}

LipschitzHead lipschitz_head(const Forward& forward) {
  return {forward.param(names::head_weight), forward.param(names::head_bias)};
}

void project_to_unit_ball(Tensor& weight) {
  const double norm = std::sqrt(weight.squared_norm());
  if (norm > 1.0) weight *= 1.0 / norm;
}

void project_lipschitz(ParamStore& params) { project_to_unit_ball(params.at(names::head_weight)); }

ad::SparseMatrix lazy_walk_operator(const TemporalUMGraph& graph, double alpha) {
  std::vector<ad::SparseMatrix::Entry> entries;
  for (NodeId i = 0; i < graph.num_nodes(); ++i) {
    const auto& nbrs = graph.neighbors(i);
    if (nbrs.empty()) {
      entries.push_back({i, i, 1.0});
      continue;
    }
    entries.push_back({i, i, alpha});
    const double share = (1.0 - alpha) / static_cast<double>(nbrs.size());
    for (NodeId j : nbrs) entries.push_back({i, j, share});
  }
  return ad::SparseMatrix(graph.num_nodes(), graph.num_nodes(), std::move(entries));
}

ad::Var node_potentials(const ad::Var& embeddings, const LipschitzHead& head) {
  return ad::matmul(embeddings, head.weight) + head.bias;
}

ad::Var surrogate_wasserstein(const TemporalUMGraph& graph, const ad::Var& embeddings, NodeId a, NodeId b,
                              const LipschitzHead& head, double alpha) {
  RODE_REQUIRE(embeddings.rows() == graph.num_nodes(), "embeddings must have one row per G_m node");
  RODE_REQUIRE(a < graph.num_nodes() && b < graph.num_nodes(), "node out of range");
  const ad::Var walked = ad::sparse_matmul(lazy_walk_operator(graph, alpha), node_potentials(embeddings, head));
  return ad::element(walked, a) - ad::element(walked, b);
}

CurvatureValue ricci_curvature(const TemporalUMGraph& graph, const ad::Var& embeddings, NodeId message_node,
                               UserId user, const LipschitzHead& head, const CurvatureOptions& options) {
  RODE_REQUIRE(user != message_node, "curvature needs two distinct nodes");
  ad::Var w = surrogate_wasserstein(graph, embeddings, message_node, user, head, options.alpha);
  if (options.clamp_negative_w) w = ad::clamp_min(w, 0.0);
  const ad::Var diff = ad::slice_rows(embeddings, message_node, 1) - ad::slice_rows(embeddings, user, 1);
  const ad::Var sq = ad::squared_norm(diff);
  const double floor2 = options.epsilon * options.epsilon;
  CurvatureValue out;
  out.distance_floored = !(sq.item() > floor2);
  out.value = 1.0 - w / ad::sqrt(ad::clamp_min(sq, floor2));
  return out;
}

Curvatures message_curvatures(const TemporalUMGraph& graph, const ad::Var& embeddings, const LipschitzHead& head,
                              const CurvatureOptions& options) {
  const std::size_t n = graph.num_users();
  RODE_REQUIRE(embeddings.rows() == n + 1, "embeddings must have one row per G_m node");
  const ad::Var walked =
      ad::sparse_matmul(lazy_walk_operator(graph, options.alpha), node_potentials(embeddings, head));
  ad::Var w = ad::element(walked, n) - ad::slice_rows(walked, 0, n);
  if (options.clamp_negative_w) w = ad::clamp_min(w, 0.0);
  const ad::Var sq = ad::row_sum(ad::square(ad::slice_rows(embeddings, 0, n) - ad::slice_rows(embeddings, n, 1)));
  const double floor2 = options.epsilon * options.epsilon;
  Curvatures out;
  for (double v : sq.value().data())
    if (!(v > floor2)) ++out.floored;
  out.values = 1.0 - w / ad::sqrt(ad::clamp_min(sq, floor2));
  return out;
}

Curvatures message_curvatures(Forward& forward, const EmbeddingState& state) {
  return message_curvatures(state.graph, state.node_embeddings(), lipschitz_head(forward),
                            curvature_options(forward.config()));
}

std::vector<bool> infected_mask(const TemporalUMGraph& graph) {
  std::vector<bool> mask(graph.num_users(), false);
  for (UserId u : graph.infected()) mask[u] = true;
  return mask;
}

ad::Var infection_distribution(const ad::Var& curvatures, const std::vector<bool>& infected) {
  return ad::masked_softmax(curvatures, infected);
}

LossTerms ricci_loss_terms(Forward& forward, const Cascade& cascade, const std::vector<EmbeddingState>& states) {
  LossTerms terms;
  for (std::size_t k = 1; k < cascade.length() && k < states.size(); ++k) {
    const EmbeddingState& s = states[k];
    const Curvatures ric = message_curvatures(forward, s);
    const ad::Var logp = ad::masked_log_softmax(ric.values, infected_mask(s.graph));
    const ad::Var term = -ad::element(logp, cascade.events[k].user);
    terms.total = terms.count == 0 ? term : terms.total + term;
    ++terms.count;
  }
  return terms;
}

ad::Var ricci_loss(Forward& forward, std::span<const Cascade> cascades) {
  ad::Var total = ad::constant(0.0);
  std::size_t count = 0;
  for (const Cascade& c : cascades) {
    const auto states = run_encoder(forward, c, c.length() - 1);
    LossTerms t = ricci_loss_terms(forward, c, states);
    if (t.count == 0) continue;
    total = total + t.total;
    count += t.count;
  }
  RODE_REQUIRE(count > 0, "ricci_loss needs at least one cascade transition");
  return total / static_cast<double>(count);
}

}  // namespace rode
