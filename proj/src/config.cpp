#include "rode/config.hpp"

#include <fmt/format.h>

#include "rode/errors.hpp"

namespace rode {

void RunConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (model.embedding_dim < 1 || model.time_dim < 1) throw ValidationError("dimensions must be at least 1");
  if (!in_unit(model.alpha)) throw ValidationError("alpha must lie in [0, 1]");
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (!in_unit(lr)) throw ValidationError("learning rate must lie in [0, 1]");
  if (!in_unit(split.train) || !in_unit(split.validation) || split.train + split.validation > 1.0)
    throw ValidationError("split ratios must lie in [0, 1] and sum to at most 1");
  if (solver_steps < 1 || grid < 1) throw ValidationError("solver steps and grid must be at least 1");
  if (lambda_ode < 0.0) throw ValidationError("lambda_ode must be non-negative");
  if (threads < 1) throw ValidationError("threads must be at least 1");
  if (encounter.rule == EncounterRule::threshold && !(encounter.radius >= 0.0))
    throw ValidationError("encounter radius must be non-negative");
}

std::string to_string(MessageInit m) { return m == MessageInit::root ? "root" : "mean"; }
std::string to_string(RescaleMode m) { return m == RescaleMode::max_time ? "max" : "offset"; }

std::string to_string(const EncounterOptions& e) {
  return e.rule == EncounterRule::argmin ? "argmin" : fmt::format("threshold:{}", e.radius);
}

MessageInit parse_message_init(const std::string& s) {
  if (s == "root") return MessageInit::root;
  if (s == "mean") return MessageInit::mean;
  throw ValidationError("m0 must be 'root' or 'mean', got '" + s + "'");
}

RescaleMode parse_rescale_mode(const std::string& s) {
  if (s == "max") return RescaleMode::max_time;
  if (s == "offset") return RescaleMode::offset;
  throw ValidationError("rescale must be 'max' or 'offset', got '" + s + "'");
}

EncounterOptions parse_encounter(const std::string& s) {
  if (s == "argmin") return {};
  const std::string prefix = "threshold:";
  if (s.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const double r = std::stod(s.substr(prefix.size()), &used);
      if (used == s.size() - prefix.size() && r >= 0.0) return {EncounterRule::threshold, r};
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("encounter must be 'argmin' or 'threshold:<radius>', got '" + s + "'");
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"d", c.model.embedding_dim},
      {"T", c.model.time_dim},
      {"alpha", c.model.alpha},
      {"dropout", c.model.dropout},
      {"m0", to_string(c.model.message_init)},
      {"clamp_negative_w", c.model.clamp_negative_w},
      {"rescale", to_string(c.model.rescale)},
      {"lr", c.lr},
      {"epochs", c.epochs},
      {"solver_steps", c.solver_steps},
      {"grid", c.grid},
      {"seed", c.seed},
      {"split", {{"train", c.split.train}, {"validation", c.split.validation}}},
      {"lambda_ode", c.lambda_ode},
      {"encounter", to_string(c.encounter)},
      {"rmse_wallclock", c.rmse_wallclock},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.model.embedding_dim = j.value("d", c.model.embedding_dim);
    c.model.time_dim = j.value("T", c.model.time_dim);
    c.model.alpha = j.value("alpha", c.model.alpha);
    c.model.dropout = j.value("dropout", c.model.dropout);
    c.model.message_init = parse_message_init(j.value("m0", std::string("root")));
    c.model.clamp_negative_w = j.value("clamp_negative_w", c.model.clamp_negative_w);
    c.model.rescale = parse_rescale_mode(j.value("rescale", std::string("max")));
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.solver_steps = j.value("solver_steps", c.solver_steps);
    c.grid = j.value("grid", c.grid);
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) {
      c.split.train = j["split"].value("train", c.split.train);
      c.split.validation = j["split"].value("validation", c.split.validation);
    }
    c.lambda_ode = j.value("lambda_ode", c.lambda_ode);
    c.encounter = parse_encounter(j.value("encounter", std::string("argmin")));
    c.rmse_wallclock = j.value("rmse_wallclock", c.rmse_wallclock);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad run configuration: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace rode
