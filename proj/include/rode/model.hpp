#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "rode/autodiff.hpp"
#include "rode/data.hpp"
#include "rode/params.hpp"

namespace rode {

enum class MessageInit { root, mean };
enum class RescaleMode { max_time, offset };

struct ModelConfig {
  std::size_t embedding_dim = 64;
  std::size_t time_dim = 16;
  double alpha = 0.5;
  double dropout = 0.3;
  MessageInit message_init = MessageInit::root;
  bool clamp_negative_w = true;
  RescaleMode rescale = RescaleMode::max_time;
};

namespace names {
inline const std::string gcn_weight = "encoder.gcn.weight";
inline const std::string encoder_time = "encoder.time";
inline const std::string attention = "encoder.attention";
inline const std::string head_weight = "curvature.head.weight";
inline const std::string head_bias = "curvature.head.bias";
inline const std::string velocity_gnn_weight = "dynamics.gnn.weight";
inline const std::string velocity_time = "dynamics.time";
inline const std::string velocity_mlp = "dynamics.mlp";
}  // namespace names

// Every learnable tensor of the model, Xavier-initialized from `seed`.
ParamStore init_params(const ModelConfig& config, std::size_t feature_dim, std::uint64_t seed);

// Dimensions implied by a parameter set.
struct ModelShape {
  std::size_t feature_dim;
  std::size_t embedding_dim;
  std::size_t time_dim;
};
ModelShape infer_shape(const ParamStore& params);

// D^{-1/2} (A + I) D^{-1/2} of the social graph.
ad::SparseMatrix normalized_adjacency(const SocialGraph& graph);

// Two tanh hidden layers and a linear output layer.
struct Mlp {
  ad::Var weight[3];
  ad::Var bias[3];

  ad::Var operator()(const ad::Var& x, double dropout = 0.0, std::mt19937_64* rng = nullptr) const;
};

// Learnable cosine features sqrt(1/T) * cos(frequency * t + phase).
struct TimeEncoder {
  ad::Var frequency;  // 1 x T
  ad::Var phase;      // 1 x T

  std::size_t dim() const { return frequency.cols(); }
};

ad::Var encode_time(const TimeEncoder& encoder, double t);             // 1 x T
ad::Var encode_times(const TimeEncoder& encoder, const Tensor& times);  // (R x 1) -> R x T

// Parameters bound as graph leaves for one forward pass, plus values shared by
// every cascade in that pass. Dropout is active only when an RNG is supplied.
class Forward {
 public:
  Forward(const ModelConfig& config, const ParamStore& params, const SocialGraph& graph, bool requires_grad,
          std::mt19937_64* dropout_rng = nullptr);

  const ModelConfig& config() const { return config_; }
  const SocialGraph& graph() const { return *graph_; }
  const ad::Var& param(const std::string& name) const;
  bool training() const { return rng_ != nullptr; }
  double dropout_rate() const { return rng_ ? config_.dropout : 0.0; }
  std::mt19937_64* rng() const { return rng_; }

  const ad::SparseMatrix& propagation() const { return propagation_; }
  const ad::Var& features() const { return features_; }
  Mlp mlp(const std::string& prefix) const;
  TimeEncoder time_encoder(const std::string& prefix) const;

  // H^0, computed on first use.
  const ad::Var& initial_embeddings();
  // GNN(A, X) inside the velocity net, computed on first use.
  const ad::Var& velocity_features();

 private:
  ModelConfig config_;
  const SocialGraph* graph_;
  std::map<std::string, ad::Var> vars_;
  ad::SparseMatrix propagation_;
  ad::Var features_;
  std::mt19937_64* rng_;
  std::optional<ad::Var> h0_;
  std::optional<ad::Var> g_;
};

}  // namespace rode
