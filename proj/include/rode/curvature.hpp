#pragma once

#include <span>
#include <vector>

#include "rode/autodiff.hpp"
#include "rode/data.hpp"
#include "rode/encoder.hpp"
#include "rode/model.hpp"

namespace rode {

struct CurvatureOptions {
  double alpha = 0.5;
  bool clamp_negative_w = true;
  double epsilon = 1e-8;
};

CurvatureOptions curvature_options(const ModelConfig& config);

// Lazy mass on a node of G_m: alpha on itself, (1 - alpha)/degree on each neighbour.
struct MassDistribution {
  NodeId center = 0;
  std::vector<NodeId> support;  // center first, then neighbours in link order
  std::vector<double> probabilities;
  double alpha = 0.5;
};

MassDistribution mass_distribution(const TemporalUMGraph& graph, NodeId node, double alpha);

// Minimum-cost transport between `supply` and `demand` (equal totals) under `cost`
// (supply.size() x demand.size()), solved exactly by successive shortest paths.
double exact_transport(std::span<const double> supply, std::span<const double> demand, const Tensor& cost);

// Exact W1 between two mass distributions; ground cost is the Euclidean
// distance between rows of `coords` (indexed by node id).
double wasserstein_lp(const MassDistribution& p, const MassDistribution& q, const Tensor& coords);

// Row-wise affine potential f(h) = h . weight + bias, kept 1-Lipschitz by projection.
struct LipschitzHead {
  ad::Var weight;  // d x 1
  ad::Var bias;    // 1 x 1
};

LipschitzHead lipschitz_head(const Forward& forward);
void project_to_unit_ball(Tensor& weight);
void project_lipschitz(ParamStore& params);

// L = alpha I + (1 - alpha) D^{-1} A over the link structure of G_m. A node
// without links keeps all of its mass, so its row is the identity row.
ad::SparseMatrix lazy_walk_operator(const TemporalUMGraph& graph, double alpha);

ad::Var node_potentials(const ad::Var& embeddings, const LipschitzHead& head);

// [L f(H)]_a - [L f(H)]_b, with H the (N + 1) x d node embeddings.
ad::Var surrogate_wasserstein(const TemporalUMGraph& graph, const ad::Var& embeddings, NodeId a, NodeId b,
                              const LipschitzHead& head, double alpha);

struct CurvatureValue {
  ad::Var value;  // 1 x 1
  bool distance_floored = false;
};

// 1 - W_hat(p_m, p_u) / max(|m - h_u|, eps).
CurvatureValue ricci_curvature(const TemporalUMGraph& graph, const ad::Var& embeddings, NodeId message_node,
                               UserId user, const LipschitzHead& head, const CurvatureOptions& options);

struct Curvatures {
  ad::Var values;  // N x 1, Ric(m, u) for every user
  std::size_t floored = 0;
};

// Ric(m, u) for all users at once.
Curvatures message_curvatures(const TemporalUMGraph& graph, const ad::Var& embeddings, const LipschitzHead& head,
                              const CurvatureOptions& options);
Curvatures message_curvatures(Forward& forward, const EmbeddingState& state);

std::vector<bool> infected_mask(const TemporalUMGraph& graph);

// Softmax over curvatures with infected users masked to probability 0.
ad::Var infection_distribution(const ad::Var& curvatures, const std::vector<bool>& infected);

struct LossTerms {
  ad::Var total;  // sum of per-step terms (undefined when count == 0)
  std::size_t count = 0;
};

// Sum over k >= 1 of -log p(u_{k+1}) computed from the step-k snapshot.
LossTerms ricci_loss_terms(Forward& forward, const Cascade& cascade, const std::vector<EmbeddingState>& states);

// Mean negative log-likelihood of every observed transition in `cascades`.
ad::Var ricci_loss(Forward& forward, std::span<const Cascade> cascades);

}  // namespace rode
