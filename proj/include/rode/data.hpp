#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rode/tensor.hpp"

namespace rode {

using UserId = std::size_t;
using NodeId = std::size_t;

// Static undirected user graph with node features.
struct SocialGraph {
  std::size_t num_users = 0;
  std::set<std::pair<UserId, UserId>> edges;  // stored with first < second
  Tensor adjacency;                           // N x N, symmetric, zero diagonal
  Tensor features;                            // N x F

  std::vector<std::vector<UserId>> neighbor_lists() const;
};

// Validates ids and builds the adjacency. Self-loops are ignored.
SocialGraph make_social_graph(std::size_t num_users, std::span<const std::pair<UserId, UserId>> edges,
                              std::optional<Tensor> features = std::nullopt);

// One-hot rows when N <= 4096, otherwise seeded uniform(-0.05, 0.05) rows.
Tensor default_features(std::size_t num_users, std::uint64_t seed = 0x5eed);

SocialGraph load_graph(const std::filesystem::path& path, std::size_t num_users,
                       const std::optional<std::filesystem::path>& feature_path = std::nullopt);
std::vector<std::pair<UserId, UserId>> parse_edges(std::istream& in, std::size_t num_users,
                                                   const std::string& source = "<edges>");
Tensor parse_features(std::istream& in, std::size_t num_users, const std::string& source = "<features>");
void write_graph(std::ostream& out, const SocialGraph& graph);
void write_features(std::ostream& out, const Tensor& features);

struct InfectionEvent {
  UserId user = 0;
  double time = 0.0;
  friend bool operator==(const InfectionEvent&, const InfectionEvent&) = default;
};

struct Cascade {
  std::string message_id;
  std::vector<InfectionEvent> events;

  std::size_t length() const noexcept { return events.size(); }
  double first_time() const { return events.front().time; }
  double last_time() const { return events.back().time; }
  friend bool operator==(const Cascade&, const Cascade&) = default;
};

// Strictly increasing timestamps and no repeated user; throws ValidationError naming the cascade.
void validate_cascade(const Cascade& cascade);
void validate_users(const Cascade& cascade, std::size_t num_users);

struct CascadeSet {
  std::vector<Cascade> cascades;
  std::size_t dropped = 0;  // cascades shorter than two events
};

// Parses one `message_id<TAB>user:time;user:time;...` line (any length >= 1).
Cascade parse_cascade_line(const std::string& line, const std::string& source = "<cascades>",
                           std::size_t lineno = 1);
CascadeSet parse_cascades(std::istream& in, const std::string& source = "<cascades>");
CascadeSet load_cascades(const std::filesystem::path& path);
void write_cascades(std::ostream& out, std::span<const Cascade> cascades);
void save_cascades(const std::filesystem::path& path, std::span<const Cascade> cascades);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
};

struct CascadeSplit {
  std::vector<Cascade> train;
  std::vector<Cascade> validation;
  std::vector<Cascade> test;
};

// Orders cascades by first timestamp (stable) and cuts train/validation/test.
CascadeSplit split_chronologically(std::vector<Cascade> cascades, SplitRatios ratios = {});

// Weighted graph over the users plus one message node (id = num_users), grown
// one infection at a time. Links are kept in insertion order: for each event,
// the message link first, then links to earlier infected users in infection order.
class TemporalUMGraph {
 public:
  struct Link {
    NodeId a;
    NodeId b;
    double weight;
  };

  TemporalUMGraph() = default;
  explicit TemporalUMGraph(std::size_t num_users);

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_nodes() const noexcept { return num_users_ + 1; }
  NodeId message_node() const noexcept { return num_users_; }
  std::size_t step() const noexcept { return infected_.size(); }

  const std::vector<UserId>& infected() const noexcept { return infected_; }
  bool is_infected(UserId u) const { return u < num_users_ && infected_flag_[u]; }
  const std::vector<Link>& links() const noexcept { return links_; }
  const std::vector<NodeId>& neighbors(NodeId n) const { return neighbors_.at(n); }
  std::size_t degree(NodeId n) const { return neighbors_.at(n).size(); }
  double weight(NodeId a, NodeId b) const;
  Tensor weighted_adjacency() const;

  // In-place growth. `user_link_weights[i]` weights the link to infected()[i].
  void add_infection(UserId user, double message_link_weight, std::span<const double> user_link_weights);

 private:
  std::size_t num_users_ = 0;
  std::vector<UserId> infected_;
  std::vector<char> infected_flag_;
  std::vector<Link> links_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<std::vector<std::size_t>> incident_;  // link indices, aligned with neighbors_
};

struct LinkWeights {
  double message_link = 0.0;
  std::vector<double> user_links;  // aligned with the graph's infected() order
};

TemporalUMGraph grow_um_graph(const TemporalUMGraph& graph, const InfectionEvent& event,
                              const LinkWeights& weights);

}  // namespace rode
