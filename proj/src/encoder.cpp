#include "rode/encoder.hpp"

#include <algorithm>

#include "rode/errors.hpp"

namespace rode {

ad::Var initial_embeddings(const ad::SparseMatrix& normalized_adjacency, const ad::Var& features,
                           const ad::Var& weight) {
  return ad::relu(ad::sparse_matmul(normalized_adjacency, ad::matmul(features, weight)));
}

ad::Var initial_embeddings(const SocialGraph& graph, const ad::Var& weight) {
  return initial_embeddings(normalized_adjacency(graph), ad::constant(graph.features), weight);
}

ad::Var attention_weights(const Mlp& mlp, const ad::Var& pair_sums, const ad::Var& time_sum, double dropout,
                          std::mt19937_64* rng) {
  RODE_REQUIRE(time_sum.rows() == 1, "time_sum must be a single row");
  ad::Var times = pair_sums.rows() == 1 ? time_sum
                                        : ad::matmul(ad::constant(Tensor(pair_sums.rows(), 1, 1.0)), time_sum);
  return ad::sigmoid(mlp(ad::concat_cols(pair_sums, times), dropout, rng));
}

ad::Var attention_weight(const Mlp& mlp, const ad::Var& h_i, const ad::Var& h_j, const ad::Var& t_now,
                         const ad::Var& t_prev) {
  return attention_weights(mlp, h_i + h_j, t_now + t_prev);
}

ad::Var EmbeddingState::user_row(UserId u) const {
  const auto& inf = graph.infected();
  auto it = std::find(inf.begin(), inf.end(), u);
  if (it == inf.end()) return ad::slice_rows(base, u, 1);
  return ad::slice_rows(infected_rows, static_cast<std::size_t>(it - inf.begin()), 1);
}

ad::Var EmbeddingState::user_embeddings() const {
  if (step == 0) return base;
  return ad::scatter_rows(base, graph.infected(), infected_rows);
}

ad::Var EmbeddingState::node_embeddings() const { return ad::stack_rows({user_embeddings(), message}); }

ad::Var EmbeddingState::newest_row() const {
  RODE_REQUIRE(step > 0, "no user has been infected yet");
  return ad::slice_rows(infected_rows, step - 1, 1);
}

EmbeddingState initial_state(Forward& forward, UserId root) {
  const ad::Var& h0 = forward.initial_embeddings();
  RODE_REQUIRE(root < h0.rows(), "root user out of range");
  EmbeddingState s;
  s.base = h0;
  s.graph = TemporalUMGraph(h0.rows());
  if (forward.config().message_init == MessageInit::root) {
    s.message = ad::slice_rows(h0, root, 1);
  } else {
    const double n = static_cast<double>(h0.rows());
    s.message = ad::matmul(ad::constant(Tensor(1, h0.rows(), 1.0 / n)), h0);
  }
  return s;
}

EmbeddingState step_update(Forward& forward, const EmbeddingState& state, const InfectionEvent& event,
                           double prev_time) {
  RODE_REQUIRE(event.user < state.base.rows(), "infected user out of range");
  RODE_REQUIRE(!state.graph.is_infected(event.user), "user " + std::to_string(event.user) + " is already infected");
  const std::size_t k_old = state.step;
  const std::size_t n = k_old + 2;  // local nodes after this step: message, old infected, new user

  // Local node order: [message, infected_1 .. infected_k_old].
  const ad::Var prev_local = k_old == 0 ? state.message : ad::stack_rows({state.message, state.infected_rows});
  const ad::Var h_new_user = ad::slice_rows(state.base, event.user, 1);

  const TimeEncoder enc = forward.time_encoder(names::encoder_time);
  const ad::Var time_sum = encode_time(enc, event.time) + encode_time(enc, prev_time);
  const ad::Var w_new = attention_weights(forward.mlp(names::attention), prev_local + h_new_user, time_sum,
                                          forward.dropout_rate(), forward.rng());

  EmbeddingState next;
  next.step = k_old + 1;
  next.time = event.time;
  next.base = state.base;
  next.graph = state.graph;
  std::vector<double> user_link_weights(k_old);
  for (std::size_t j = 0; j < k_old; ++j) user_link_weights[j] = w_new.value()[j + 1];
  next.graph.add_infection(event.user, w_new.value()[0], user_link_weights);

  // Symmetric placement of the new links into the grown local weight matrix.
  std::vector<std::pair<std::size_t, std::size_t>> placement;
  for (std::size_t j = 0; j <= k_old; ++j) {
    placement.emplace_back(j, j * n + (n - 1));
    placement.emplace_back(j, (n - 1) * n + j);
  }
  ad::Var weights = ad::index_map(w_new, n, n, placement);
  if (k_old > 0) {
    std::vector<std::pair<std::size_t, std::size_t>> grow;
    const std::size_t m = n - 1;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < m; ++c) grow.emplace_back(r * m + c, r * n + c);
    weights = ad::index_map(state.local_weights, n, n, grow) + weights;
  }
  next.local_weights = weights;

  // Every infected user gained a neighbour, so all of them are refreshed; the
  // aggregation uses the step-(k-1) coordinates of message and users alike.
  const ad::Var prev_all = ad::stack_rows({prev_local, h_new_user});
  const ad::Var aggregated = ad::matmul(weights, prev_all);
  next.infected_rows = ad::sigmoid(ad::slice_rows(prev_all, 1, n - 1) + ad::slice_rows(aggregated, 1, n - 1));
  next.message = ad::sigmoid(state.message + ad::matmul(ad::slice(weights, 0, 1, 1, n - 1), next.infected_rows));
  return next;
}

std::vector<EmbeddingState> run_encoder(Forward& forward, const Cascade& cascade, std::size_t count) {
  RODE_REQUIRE(!cascade.events.empty(), "cascade has no events");
  RODE_REQUIRE(count <= cascade.length(), "more events requested than the cascade holds");
  std::vector<EmbeddingState> states;
  states.reserve(count + 1);
  states.push_back(initial_state(forward, cascade.events.front().user));
  for (std::size_t k = 0; k < count; ++k) {
    const double prev = k == 0 ? cascade.events[0].time : cascade.events[k - 1].time;
    states.push_back(step_update(forward, states.back(), cascade.events[k], prev));
  }
  return states;
}

}  // namespace rode
