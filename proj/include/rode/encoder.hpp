#pragma once

#include <vector>

#include "rode/autodiff.hpp"
#include "rode/data.hpp"
#include "rode/model.hpp"

namespace rode {

// ReLU(Â X W) for the normalized adjacency Â.
ad::Var initial_embeddings(const ad::SparseMatrix& normalized_adjacency, const ad::Var& features,
                           const ad::Var& weight);
ad::Var initial_embeddings(const SocialGraph& graph, const ad::Var& weight);

// sigmoid(MLP((h_i + h_j) || (t_now + t_prev))), one weight per row of `pair_sums`.
ad::Var attention_weights(const Mlp& mlp, const ad::Var& pair_sums, const ad::Var& time_sum, double dropout = 0.0,
                          std::mt19937_64* rng = nullptr);
ad::Var attention_weight(const Mlp& mlp, const ad::Var& h_i, const ad::Var& h_j, const ad::Var& t_now,
                         const ad::Var& t_prev);

// Snapshot of user and message coordinates after `step` infections of one cascade.
//
// Users never infected keep their H^0 row, so only the infected rows are stored;
// the full matrices are assembled on demand.
struct EmbeddingState {
  std::size_t step = 0;
  double time = 0.0;
  ad::Var base;                // N x d, H^0
  ad::Var infected_rows;       // step x d, row i belongs to graph.infected()[i]; undefined at step 0
  ad::Var message;             // 1 x d
  ad::Var local_weights;       // (step+1)^2 attention weights over [message, infected...]
  TemporalUMGraph graph;

  const std::vector<UserId>& infected() const { return graph.infected(); }
  ad::Var user_row(UserId u) const;
  ad::Var user_embeddings() const;  // N x d
  ad::Var node_embeddings() const;  // (N + 1) x d, message node last
  ad::Var newest_row() const;       // embedding of the most recently infected user
};

// Step-0 state: empty G_m; the message starts at the root's H^0 row (or the mean row).
EmbeddingState initial_state(Forward& forward, UserId root);

// Grows G_m with `event` and applies the attentive user and message updates.
EmbeddingState step_update(Forward& forward, const EmbeddingState& state, const InfectionEvent& event,
                           double prev_time);

// states[k] is the snapshot after the first k events, for k = 0..count.
std::vector<EmbeddingState> run_encoder(Forward& forward, const Cascade& cascade, std::size_t count);
inline std::vector<EmbeddingState> run_encoder(Forward& forward, const Cascade& cascade) {
  return run_encoder(forward, cascade, cascade.length());
}

}  // namespace rode
