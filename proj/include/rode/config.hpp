#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "rode/data.hpp"
#include "rode/dynamics.hpp"
#include "rode/model.hpp"

namespace rode {

struct RunConfig {
  ModelConfig model;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t solver_steps = 32;
  std::size_t grid = 256;
  std::uint64_t seed = 42;
  SplitRatios split;
  double lambda_ode = 1.0;
  EncounterOptions encounter;
  bool rmse_wallclock = false;
  std::size_t threads = 1;

  // Throws ValidationError on out-of-range settings.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

std::string to_string(MessageInit m);
std::string to_string(RescaleMode m);
std::string to_string(const EncounterOptions& e);
MessageInit parse_message_init(const std::string& s);
RescaleMode parse_rescale_mode(const std::string& s);
// "argmin" or "threshold:<radius>".
EncounterOptions parse_encounter(const std::string& s);

}  // namespace rode
