#include "rode/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "rode/errors.hpp"

namespace rode {

std::size_t rank_of(std::span<const double> scores, const std::vector<bool>& mask, std::size_t truth) {
  RODE_REQUIRE(mask.size() == scores.size() && truth < scores.size(), "rank_of: bad inputs");
  RODE_REQUIRE(!mask[truth], "the true user is masked");
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i] || i == truth) continue;
    if (scores[i] > scores[truth] || (scores[i] == scores[truth] && i < truth)) ++rank;
  }
  return rank;
}

RankingAccumulator::RankingAccumulator(std::vector<std::size_t> ks)
    : ks_(std::move(ks)), hits_(ks_.size(), 0.0), reciprocal_(ks_.size(), 0.0) {
  for (std::size_t k : ks_) RODE_REQUIRE(k >= 1, "K must be at least 1");
}

void RankingAccumulator::add(std::size_t rank) {
  RODE_REQUIRE(rank >= 1, "ranks are 1-based");
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    if (rank <= ks_[i]) {
      hits_[i] += 1.0;
      reciprocal_[i] += 1.0 / static_cast<double>(rank);
    }
  }
  ++count_;
}

void RankingAccumulator::merge(const RankingAccumulator& other) {
  RODE_REQUIRE(ks_ == other.ks_, "merging accumulators with different K lists");
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    hits_[i] += other.hits_[i];
    reciprocal_[i] += other.reciprocal_[i];
  }
  count_ += other.count_;
}

void RankingAccumulator::write(EvalReport& report) const {
  report.ranking_steps = count_;
  const double n = count_ == 0 ? 1.0 : static_cast<double>(count_);
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    report.hits_at[ks_[i]] = 100.0 * hits_[i] / n;
    report.map_at[ks_[i]] = 100.0 * reciprocal_[i] / n;
  }
}

void ErrorAccumulator::add(double error, std::size_t offset) {
  total_ += error * error;
  ++count_;
  auto& [sum, n] = by_offset_[offset];
  sum += error * error;
  ++n;
}

void ErrorAccumulator::merge(const ErrorAccumulator& other) {
  total_ += other.total_;
  count_ += other.count_;
  for (const auto& [offset, entry] : other.by_offset_) {
    auto& [sum, n] = by_offset_[offset];
    sum += entry.first;
    n += entry.second;
  }
}

double ErrorAccumulator::rmse() const {
  return count_ == 0 ? 0.0 : std::sqrt(total_ / static_cast<double>(count_));
}

std::map<std::size_t, double> ErrorAccumulator::rmse_by_offset() const {
  std::map<std::size_t, double> out;
  for (const auto& [offset, entry] : by_offset_)
    out[offset] = std::sqrt(entry.first / static_cast<double>(entry.second));
  return out;
}

nlohmann::json to_json(const EvalReport& report) {
  auto keyed = [](const std::map<std::size_t, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
  };
  return {{"hits_at", keyed(report.hits_at)},
          {"map_at", keyed(report.map_at)},
          {"rmse", report.rmse},
          {"rmse_by_offset", keyed(report.rmse_by_offset)},
          {"ranking_steps", report.ranking_steps},
          {"time_pairs", report.time_pairs}};
}

std::string format_table(const EvalReport& report) {
  std::string out = fmt::format("{:<12}{:>10}{:>10}\n", "K", "H@K", "M@K");
  for (const auto& [k, hits] : report.hits_at)
    out += fmt::format("{:<12}{:>10.2f}{:>10.2f}\n", k, hits, report.map_at.at(k));
  out += fmt::format("ranking steps: {}\n", report.ranking_steps);
  out += fmt::format("RMSE: {:.4f} over {} (user, time) pairs\n", report.rmse, report.time_pairs);
  for (const auto& [offset, v] : report.rmse_by_offset) out += fmt::format("  future user {:>3}: {:.4f}\n", offset, v);
  return out;
}

}  // namespace rode
