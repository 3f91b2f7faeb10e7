#include "rode/model.hpp"

#include <cmath>
#include <numbers>

#include "rode/encoder.hpp"
#include "rode/errors.hpp"

namespace rode {

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w(fan_in, fan_out);
  for (double& v : w.data()) v = dist(rng);
  return w;
}

void add_mlp(ParamStore& p, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
             std::mt19937_64& rng) {
  const std::size_t dims[4] = {in, hidden, hidden, out};
  for (int l = 0; l < 3; ++l) {
    p.add(prefix + "." + std::to_string(l) + ".weight", xavier(dims[l], dims[l + 1], rng));
    p.add(prefix + "." + std::to_string(l) + ".bias", Tensor(1, dims[l + 1]));
  }
}

// Geometric frequencies spanning [lowest, 1] with zero phase.
void add_time_encoder(ParamStore& p, const std::string& prefix, std::size_t dim, double lowest, double top) {
  Tensor freq(1, dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double frac = dim == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(dim - 1);
    freq[j] = top * std::pow(lowest / top, frac);
  }
  p.add(prefix + ".frequency", std::move(freq));
  p.add(prefix + ".phase", Tensor(1, dim));
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::size_t feature_dim, std::uint64_t seed) {
  RODE_REQUIRE(config.embedding_dim >= 1 && config.time_dim >= 1 && feature_dim >= 1, "dimensions must be >= 1");
  const std::size_t d = config.embedding_dim;
  const std::size_t t = config.time_dim;
  std::mt19937_64 rng(seed);
  ParamStore p;
  p.add(names::gcn_weight, xavier(feature_dim, d, rng));
  add_time_encoder(p, names::encoder_time, t, 1e-4, 1.0);
  add_mlp(p, names::attention, d + t, d, 1, rng);

  Tensor head = xavier(d, 1, rng);
  const double norm = std::sqrt(head.squared_norm());
  if (norm > 1.0) head *= 1.0 / norm;
  p.add(names::head_weight, std::move(head));
  p.add(names::head_bias, Tensor(1, 1));

  p.add(names::velocity_gnn_weight, xavier(feature_dim, d, rng));
  add_time_encoder(p, names::velocity_time, t, 0.5, 2.0 * std::numbers::pi * static_cast<double>(t) / 4.0);
  add_mlp(p, names::velocity_mlp, d + t, d, d, rng);
  return p;
}

ModelShape infer_shape(const ParamStore& params) {
  const Tensor& gcn = params.at(names::gcn_weight);
  return {gcn.rows(), gcn.cols(), params.at(names::encoder_time + ".frequency").cols()};
}

ad::SparseMatrix normalized_adjacency(const SocialGraph& graph) {
  const std::size_t n = graph.num_users;
  const auto nbrs = graph.neighbor_lists();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(nbrs[i].size() + 1));
  std::vector<ad::SparseMatrix::Entry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
    for (UserId j : nbrs[i]) entries.push_back({i, j, inv_sqrt[i] * inv_sqrt[j]});
  }
  return ad::SparseMatrix(n, n, std::move(entries));
}

ad::Var Mlp::operator()(const ad::Var& x, double dropout, std::mt19937_64* rng) const {
  ad::Var h = x;
  for (int l = 0; l < 3; ++l) {
    h = ad::matmul(h, weight[l]) + bias[l];
    if (l < 2) {
      h = ad::tanh(h);
      if (rng && dropout > 0.0) h = ad::dropout(h, dropout, *rng);
    }
  }
  return h;
}

ad::Var encode_time(const TimeEncoder& encoder, double t) { return encode_times(encoder, Tensor::scalar(t)); }

ad::Var encode_times(const TimeEncoder& encoder, const Tensor& times) {
  RODE_REQUIRE(times.cols() == 1, "encode_times expects a column of times");
  const double amplitude = std::sqrt(1.0 / static_cast<double>(encoder.dim()));
  ad::Var angles = ad::matmul(ad::constant(times), encoder.frequency) + encoder.phase;
  return ad::cos(angles) * amplitude;
}

Forward::Forward(const ModelConfig& config, const ParamStore& params, const SocialGraph& graph, bool requires_grad,
                 std::mt19937_64* dropout_rng)
    : config_(config),
      graph_(&graph),
      vars_(params.bind(requires_grad)),
      propagation_(normalized_adjacency(graph)),
      features_(ad::constant(graph.features)),
      rng_(dropout_rng) {
  const ModelShape shape = infer_shape(params);
  RODE_REQUIRE(shape.feature_dim == graph.features.cols(), "parameter feature dimension does not match the graph");
  config_.embedding_dim = shape.embedding_dim;
  config_.time_dim = shape.time_dim;
}

const ad::Var& Forward::param(const std::string& name) const {
  auto it = vars_.find(name);
  RODE_REQUIRE(it != vars_.end(), "unknown parameter: " + name);
  return it->second;
}

Mlp Forward::mlp(const std::string& prefix) const {
  Mlp m;
  for (int l = 0; l < 3; ++l) {
    m.weight[l] = param(prefix + "." + std::to_string(l) + ".weight");
    m.bias[l] = param(prefix + "." + std::to_string(l) + ".bias");
  }
  return m;
}

TimeEncoder Forward::time_encoder(const std::string& prefix) const {
  return {param(prefix + ".frequency"), param(prefix + ".phase")};
}

const ad::Var& Forward::initial_embeddings() {
  if (!h0_) h0_ = rode::initial_embeddings(propagation_, features_, param(names::gcn_weight));
  return *h0_;
}

const ad::Var& Forward::velocity_features() {
  if (!g_) g_ = ad::tanh(ad::sparse_matmul(propagation_, ad::matmul(features_, param(names::velocity_gnn_weight))));
  return *g_;
}

}  // namespace rode
