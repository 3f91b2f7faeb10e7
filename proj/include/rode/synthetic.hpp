#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "rode/data.hpp"
#include "rode/model.hpp"
#include "rode/params.hpp"

namespace rode {

// Knobs of the teacher that generates synthetic cascades.
struct PlantedParams {
  double alpha = 0.5;
  double temperature = 0.02;  // next user drawn with probability ∝ exp(Ric / temperature)
  bool frontier_only = false;  // restrict candidates to social neighbours of infected users
  bool clamp_negative_w = false;  // the clamp ties every user with a negative surrogate at Ric = 1
  std::size_t feature_dim = 16;
  std::size_t embedding_dim = 16;
  std::size_t time_dim = 16;
  double mean_length = 8.0;
  std::size_t min_length = 2;
  double gap_scale = 60.0;    // seconds per unit of message-user distance
  double gap_offset = 0.1;    // minimum gap, in distance units
  double gap_jitter = 0.8;    // log-normal spread of each gap
  std::size_t max_retries = 100;
};

struct SyntheticData {
  SocialGraph graph;
  std::vector<Cascade> cascades;
  ModelConfig teacher_config;
  ParamStore teacher;
  PlantedParams planted;
  std::uint64_t seed = 0;
};

// Erdős–Rényi graph with p = 2 ln N / N, Gaussian features, and cascades simulated
// by a randomly initialized model.
SyntheticData generate_synthetic(std::size_t num_users, std::size_t num_cascades, std::uint64_t seed,
                                 const PlantedParams& planted = {});

nlohmann::json to_json(const PlantedParams& planted);

// graph.tsv, features.tsv, cascades.tsv, teacher.ckpt and teacher.json.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace rode
