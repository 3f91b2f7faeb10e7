#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace rode {

struct EvalReport {
  std::map<std::size_t, double> hits_at;  // percent
  std::map<std::size_t, double> map_at;   // percent, reciprocal rank truncated at K
  double rmse = 0.0;
  std::map<std::size_t, double> rmse_by_offset;  // 1 = first held-out user
  std::size_t ranking_steps = 0;
  std::size_t time_pairs = 0;
};

// 1-based rank of `truth` among unmasked entries by descending score; ties go to the lower index.
std::size_t rank_of(std::span<const double> scores, const std::vector<bool>& mask, std::size_t truth);

class RankingAccumulator {
 public:
  explicit RankingAccumulator(std::vector<std::size_t> ks);

  void add(std::size_t rank);
  void merge(const RankingAccumulator& other);
  std::size_t count() const noexcept { return count_; }
  void write(EvalReport& report) const;

 private:
  std::vector<std::size_t> ks_;
  std::vector<double> hits_;
  std::vector<double> reciprocal_;
  std::size_t count_ = 0;
};

class ErrorAccumulator {
 public:
  void add(double error, std::size_t offset);
  void merge(const ErrorAccumulator& other);
  std::size_t count() const noexcept { return count_; }
  double rmse() const;
  std::map<std::size_t, double> rmse_by_offset() const;

 private:
  double total_ = 0.0;
  std::size_t count_ = 0;
  std::map<std::size_t, std::pair<double, std::size_t>> by_offset_;
};

nlohmann::json to_json(const EvalReport& report);
std::string format_table(const EvalReport& report);

}  // namespace rode
