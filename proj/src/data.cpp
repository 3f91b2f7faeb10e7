#include "rode/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "rode/errors.hpp"

namespace rode {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

}  // namespace

std::vector<std::vector<UserId>> SocialGraph::neighbor_lists() const {
  std::vector<std::vector<UserId>> out(num_users);
  for (const auto& [a, b] : edges) {
    out[a].push_back(b);
    out[b].push_back(a);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

SocialGraph make_social_graph(std::size_t num_users, std::span<const std::pair<UserId, UserId>> edges,
                              std::optional<Tensor> features) {
  if (num_users == 0) throw ValidationError("graph must have at least one user");
  SocialGraph g;
  g.num_users = num_users;
  g.adjacency = Tensor(num_users, num_users);
  for (auto [a, b] : edges) {
    if (a >= num_users || b >= num_users)
      throw ValidationError(fmt::format("edge ({}, {}) references a user outside [0, {})", a, b, num_users));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    g.edges.emplace(a, b);
    g.adjacency(a, b) = 1.0;
    g.adjacency(b, a) = 1.0;
  }
  g.features = features ? std::move(*features) : default_features(num_users);
  if (g.features.rows() != num_users)
    throw ValidationError(fmt::format("feature matrix has {} rows, expected {}", g.features.rows(), num_users));
  if (g.features.cols() == 0) throw ValidationError("feature dimension must be at least 1");
  return g;
}

Tensor default_features(std::size_t num_users, std::uint64_t seed) {
  if (num_users <= 4096) return Tensor::identity(num_users);
  constexpr std::size_t kDim = 64;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  Tensor x(num_users, kDim);
  for (double& v : x.data()) v = dist(rng);
  return x;
}

std::vector<std::pair<UserId, UserId>> parse_edges(std::istream& in, std::size_t num_users,
                                                   const std::string& source) {
  std::vector<std::pair<UserId, UserId>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const std::string_view body = trim(line);
    const auto sep = body.find_first_of("\t ");
    if (sep == std::string_view::npos) throw ParseError(source, lineno, "expected 'src<TAB>dst'");
    const auto src = parse_number<UserId>(body.substr(0, sep));
    const auto dst = parse_number<UserId>(body.substr(sep + 1));
    if (!src || !dst) throw ParseError(source, lineno, "edge endpoints must be non-negative integers");
    if (*src >= num_users || *dst >= num_users)
      throw ValidationError(
          fmt::format("{}:{}: edge ({}, {}) out of range for {} users", source, lineno, *src, *dst, num_users));
    edges.emplace_back(*src, *dst);
  }
  return edges;
}

Tensor parse_features(std::istream& in, std::size_t num_users, const std::string& source) {
  std::vector<std::vector<double>> rows(num_users);
  std::vector<char> seen(num_users, 0);
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const std::string_view body = trim(line);
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos) throw ParseError(source, lineno, "expected 'node_id<TAB>f1,f2,...'");
    const auto id = parse_number<UserId>(body.substr(0, tab));
    if (!id) throw ParseError(source, lineno, "node id must be a non-negative integer");
    if (*id >= num_users)
      throw ValidationError(fmt::format("{}:{}: node {} out of range for {} users", source, lineno, *id, num_users));
    if (seen[*id]) throw ValidationError(fmt::format("{}:{}: duplicate features for node {}", source, lineno, *id));
    std::vector<double> values;
    std::string_view rest = body.substr(tab + 1);
    while (true) {
      const auto comma = rest.find(',');
      const auto v = parse_number<double>(rest.substr(0, comma));
      if (!v) throw ParseError(source, lineno, "feature values must be decimal numbers");
      values.push_back(*v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (dim == 0) dim = values.size();
    if (values.size() != dim)
      throw ParseError(source, lineno, fmt::format("expected {} features, found {}", dim, values.size()));
    rows[*id] = std::move(values);
    seen[*id] = 1;
  }
  for (std::size_t u = 0; u < num_users; ++u)
    if (!seen[u]) throw ValidationError(fmt::format("{}: no features for node {}", source, u));
  Tensor x(num_users, dim);
  for (std::size_t u = 0; u < num_users; ++u)
    for (std::size_t c = 0; c < dim; ++c) x(u, c) = rows[u][c];
  return x;
}

SocialGraph load_graph(const std::filesystem::path& path, std::size_t num_users,
                       const std::optional<std::filesystem::path>& feature_path) {
  auto in = open_input(path);
  const auto edges = parse_edges(in, num_users, path.string());
  std::optional<Tensor> features;
  if (feature_path) {
    auto fin = open_input(*feature_path);
    features = parse_features(fin, num_users, feature_path->string());
  }
  return make_social_graph(num_users, edges, std::move(features));
}

void write_graph(std::ostream& out, const SocialGraph& graph) {
  for (const auto& [a, b] : graph.edges) out << a << '\t' << b << '\n';
}

void write_features(std::ostream& out, const Tensor& features) {
  for (std::size_t r = 0; r < features.rows(); ++r) {
    out << r << '\t';
    for (std::size_t c = 0; c < features.cols(); ++c) out << (c ? "," : "") << fmt::format("{}", features(r, c));
    out << '\n';
  }
}

void validate_cascade(const Cascade& cascade) {
  if (cascade.events.empty()) throw ValidationError("cascade " + cascade.message_id + " has no events");
  std::unordered_set<UserId> users;
  for (std::size_t i = 0; i < cascade.events.size(); ++i) {
    const auto& e = cascade.events[i];
    if (!std::isfinite(e.time))
      throw ValidationError("cascade " + cascade.message_id + " has a non-finite timestamp");
    if (i > 0 && !(e.time > cascade.events[i - 1].time))
      throw ValidationError(fmt::format("cascade {}: timestamps must be strictly increasing (event {} at {} after {})",
                                        cascade.message_id, i, e.time, cascade.events[i - 1].time));
    if (!users.insert(e.user).second)
      throw ValidationError(fmt::format("cascade {}: user {} appears twice", cascade.message_id, e.user));
  }
}

void validate_users(const Cascade& cascade, std::size_t num_users) {
  for (const auto& e : cascade.events)
    if (e.user >= num_users)
      throw ValidationError(
          fmt::format("cascade {}: user {} out of range for {} users", cascade.message_id, e.user, num_users));
}

Cascade parse_cascade_line(const std::string& line, const std::string& source, std::size_t lineno) {
  const std::string_view body = trim(line);
  const auto tab = body.find('\t');
  if (tab == std::string_view::npos || tab == 0)
    throw ParseError(source, lineno, "expected 'message_id<TAB>user:time;...'");
  Cascade c;
  c.message_id = std::string(body.substr(0, tab));
  std::string_view rest = trim(body.substr(tab + 1));
  while (!rest.empty()) {
    const auto semi = rest.find(';');
    const std::string_view item = trim(rest.substr(0, semi));
    if (!item.empty()) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) throw ParseError(source, lineno, "expected 'user:timestamp'");
      const auto user = parse_number<UserId>(item.substr(0, colon));
      const auto time = parse_number<double>(item.substr(colon + 1));
      if (!user) throw ParseError(source, lineno, "user id must be a non-negative integer");
      if (!time) throw ParseError(source, lineno, "timestamp must be a decimal number");
      c.events.push_back({*user, *time});
    }
    if (semi == std::string_view::npos) break;
    rest.remove_prefix(semi + 1);
  }
  if (c.events.empty()) throw ParseError(source, lineno, "cascade " + c.message_id + " has no events");
  validate_cascade(c);
  return c;
}

CascadeSet parse_cascades(std::istream& in, const std::string& source) {
  CascadeSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    Cascade c = parse_cascade_line(line, source, lineno);
    if (c.length() < 2) {
      ++set.dropped;
      continue;
    }
    if (!(c.last_time() > 0.0))
      throw ValidationError("cascade " + c.message_id + ": last timestamp must be positive for time rescaling");
    set.cascades.push_back(std::move(c));
  }
  return set;
}

CascadeSet load_cascades(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_cascades(in, path.string());
}

void write_cascades(std::ostream& out, std::span<const Cascade> cascades) {
  for (const auto& c : cascades) {
    out << c.message_id << '\t';
    for (std::size_t i = 0; i < c.events.size(); ++i)
      out << (i ? ";" : "") << c.events[i].user << ':' << fmt::format("{}", c.events[i].time);
    out << '\n';
  }
}

void save_cascades(const std::filesystem::path& path, std::span<const Cascade> cascades) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_cascades(out, cascades);
}

CascadeSplit split_chronologically(std::vector<Cascade> cascades, SplitRatios ratios) {
  RODE_REQUIRE(ratios.train >= 0 && ratios.validation >= 0 && ratios.train + ratios.validation <= 1.0,
               "split ratios must be non-negative and sum to at most 1");
  std::stable_sort(cascades.begin(), cascades.end(),
                   [](const Cascade& a, const Cascade& b) { return a.first_time() < b.first_time(); });
  const std::size_t n = cascades.size();
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n) + 1e-9));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::floor(ratios.validation * static_cast<double>(n) + 1e-9)));
  CascadeSplit split;
  auto it = std::make_move_iterator(cascades.begin());
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(it + static_cast<std::ptrdiff_t>(n_train),
                          it + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(cascades.end()));
  return split;
}

TemporalUMGraph::TemporalUMGraph(std::size_t num_users)
    : num_users_(num_users), infected_flag_(num_users, 0), neighbors_(num_users + 1), incident_(num_users + 1) {}

double TemporalUMGraph::weight(NodeId a, NodeId b) const {
  const auto& nb = neighbors_.at(a);
  for (std::size_t i = 0; i < nb.size(); ++i)
    if (nb[i] == b) return links_[incident_[a][i]].weight;
  return 0.0;
}

Tensor TemporalUMGraph::weighted_adjacency() const {
  Tensor a(num_nodes(), num_nodes());
  for (const auto& l : links_) {
    a(l.a, l.b) = l.weight;
    a(l.b, l.a) = l.weight;
  }
  return a;
}

void TemporalUMGraph::add_infection(UserId user, double message_link_weight,
                                    std::span<const double> user_link_weights) {
  RODE_REQUIRE(user < num_users_, "infected user out of range");
  RODE_REQUIRE(!infected_flag_[user], fmt::format("user {} is already infected", user));
  RODE_REQUIRE(user_link_weights.size() == infected_.size(),
               "one user-link weight is required per previously infected user");
  auto connect = [this](NodeId a, NodeId b, double w) {
    RODE_REQUIRE(std::isfinite(w) && w >= 0.0 && w <= 1.0, "link weights must lie in [0, 1]");
    const std::size_t index = links_.size();
    links_.push_back({a, b, w});
    neighbors_[a].push_back(b);
    incident_[a].push_back(index);
    neighbors_[b].push_back(a);
    incident_[b].push_back(index);
  };
  connect(message_node(), user, message_link_weight);
  for (std::size_t i = 0; i < infected_.size(); ++i) connect(user, infected_[i], user_link_weights[i]);
  infected_.push_back(user);
  infected_flag_[user] = 1;
}

TemporalUMGraph grow_um_graph(const TemporalUMGraph& graph, const InfectionEvent& event,
                              const LinkWeights& weights) {
  TemporalUMGraph next = graph;
  next.add_infection(event.user, weights.message_link, weights.user_links);
  return next;
}

}  // namespace rode
