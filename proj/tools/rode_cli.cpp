// rode: train, evaluate and query R-ODE models from the command line.
#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "rode/config.hpp"
#include "rode/data.hpp"
#include "rode/dynamics.hpp"
#include "rode/errors.hpp"
#include "rode/evaluation.hpp"
#include "rode/params.hpp"
#include "rode/synthetic.hpp"
#include "rode/training.hpp"

namespace fs = std::filesystem;
using namespace rode;

namespace {

struct DataArgs {
  std::string graph;
  std::string features;
  std::size_t users = 0;  // 0 = infer from the files
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--graph", a.graph, "edge list, one 'src<TAB>dst' per line")->required();
  cmd->add_option("--features", a.features, "node features, 'id<TAB>f1,f2,...' per line");
  cmd->add_option("--users", a.users, "number of users (default: inferred)");
}

std::size_t max_id_in(const std::vector<std::pair<UserId, UserId>>& edges) {
  std::size_t n = 0;
  for (auto [a, b] : edges) n = std::max({n, a + 1, b + 1});
  return n;
}

std::size_t infer_users(const DataArgs& a, std::span<const Cascade> cascades) {
  if (a.users > 0) return a.users;
  std::ifstream in(a.graph);
  if (!in) throw ValidationError("cannot open graph file " + a.graph);
  std::size_t n = max_id_in(parse_edges(in, std::numeric_limits<std::size_t>::max(), a.graph));
  for (const Cascade& c : cascades)
    for (const auto& e : c.events) n = std::max(n, e.user + 1);
  if (!a.features.empty()) {
    std::ifstream f(a.features);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(f, line))
      if (!line.empty() && line[0] != '#') ++rows;
    n = std::max(n, rows);
  }
  if (n == 0) throw ValidationError("cannot infer the number of users; pass --users");
  return n;
}

SocialGraph load_social_graph(const DataArgs& a, std::size_t users) {
  std::optional<fs::path> features;
  if (!a.features.empty()) features = a.features;
  return load_graph(a.graph, users, features);
}

Cascade load_prefix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open cascade prefix " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    Cascade c = parse_cascade_line(line, path, lineno);
    validate_cascade(c);
    return c;
  }
  throw ValidationError("cascade prefix file " + path + " holds no cascade");
}

fs::path sidecar(const fs::path& ckpt) { return fs::path(ckpt.string() + ".config.json"); }

struct Model {
  RunConfig config;
  ParamStore params;
  std::size_t users = 0;
};

Model load_model(const std::string& ckpt) {
  Model m;
  m.params = load_checkpoint(ckpt);
  std::ifstream in(sidecar(ckpt));
  if (!in) throw ValidationError("missing model configuration " + sidecar(ckpt).string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(sidecar(ckpt).string() + ": " + e.what());
  }
  m.config = run_config_from_json(j);
  m.users = j.value("num_users", std::size_t{0});
  return m;
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long k = std::stol(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw ValidationError("--ks expects comma-separated positive integers, got '" + s + "'");
    }
  }
  if (ks.empty()) throw ValidationError("--ks is empty");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

// Flags shared by train (all) and eval (inference-side only).
struct ConfigArgs {
  std::string config_file;
  std::string m0, rescale, encounter;
  bool no_clamp = false;
  RunConfig values;
};

void add_inference_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--grid", a.values.grid, "prediction grid intervals");
  cmd->add_option("--solver-steps", a.values.solver_steps, "RK4 steps over [0, 1]");
  cmd->add_option("--encounter", a.encounter, "argmin | threshold:<radius>");
  cmd->add_flag("--rmse-wallclock", a.values.rmse_wallclock, "report RMSE in seconds");
  cmd->add_option("--threads", a.values.threads, "evaluation workers");
}

void add_training_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.config_file, "JSON run configuration; flags override it");
  cmd->add_option("--d", a.values.model.embedding_dim, "embedding dimension");
  cmd->add_option("--T", a.values.model.time_dim, "time-encoding dimension");
  cmd->add_option("--alpha", a.values.model.alpha, "lazy-walk mass kept at a node");
  cmd->add_option("--dropout", a.values.model.dropout, "dropout rate");
  cmd->add_option("--lr", a.values.lr, "Adam learning rate");
  cmd->add_option("--epochs", a.values.epochs, "training epochs");
  cmd->add_option("--seed", a.values.seed, "random seed");
  cmd->add_option("--train-ratio", a.values.split.train, "chronological training share");
  cmd->add_option("--val-ratio", a.values.split.validation, "chronological validation share");
  cmd->add_option("--lambda-ode", a.values.lambda_ode, "weight of the trajectory loss");
  cmd->add_option("--m0", a.m0, "initial message coordinate: root | mean");
  cmd->add_option("--rescale", a.rescale, "system time: max | offset");
  cmd->add_flag("--no-clamp", a.no_clamp, "keep negative surrogate distances");
  add_inference_options(cmd, a);
}

// Applies explicitly given flags on top of `base`.
RunConfig resolve(const CLI::App* cmd, const ConfigArgs& a, RunConfig base) {
  auto given = [&](const char* name) { return cmd->get_option_no_throw(name) && cmd->count(name) > 0; };
  const RunConfig& v = a.values;
  if (given("--d")) base.model.embedding_dim = v.model.embedding_dim;
  if (given("--T")) base.model.time_dim = v.model.time_dim;
  if (given("--alpha")) base.model.alpha = v.model.alpha;
  if (given("--dropout")) base.model.dropout = v.model.dropout;
  if (given("--lr")) base.lr = v.lr;
  if (given("--epochs")) base.epochs = v.epochs;
  if (given("--seed")) base.seed = v.seed;
  if (given("--train-ratio")) base.split.train = v.split.train;
  if (given("--val-ratio")) base.split.validation = v.split.validation;
  if (given("--lambda-ode")) base.lambda_ode = v.lambda_ode;
  if (given("--m0")) base.model.message_init = parse_message_init(a.m0);
  if (given("--rescale")) base.model.rescale = parse_rescale_mode(a.rescale);
  if (given("--no-clamp")) base.model.clamp_negative_w = false;
  if (given("--grid")) base.grid = v.grid;
  if (given("--solver-steps")) base.solver_steps = v.solver_steps;
  if (given("--encounter")) base.encounter = parse_encounter(a.encounter);
  if (given("--rmse-wallclock")) base.rmse_wallclock = true;
  if (given("--threads")) base.threads = v.threads;
  base.validate();
  return base;
}

RunConfig base_config(const ConfigArgs& a) {
  if (a.config_file.empty()) return {};
  std::ifstream in(a.config_file);
  if (!in) throw ValidationError("cannot open configuration " + a.config_file);
  try {
    nlohmann::json j;
    in >> j;
    return run_config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(a.config_file + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"R-ODE: curvature-regulated diffusion prediction"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit a model on the training split");
  DataArgs train_data;
  ConfigArgs train_cfg;
  std::string train_cascades, train_out, train_report;
  add_data_options(train_cmd, train_data);
  train_cmd->add_option("--cascades", train_cascades, "cascade file")->required();
  train_cmd->add_option("--out", train_out, "checkpoint to write")->required();
  train_cmd->add_option("--report", train_report, "also evaluate the test split and write JSON here ('-' = stdout)");
  add_training_options(train_cmd, train_cfg);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "ranking and infection-time metrics");
  DataArgs eval_data;
  ConfigArgs eval_cfg;
  std::string eval_ckpt, eval_cascades, eval_ks = "10,50,100", eval_json;
  bool eval_test_only = false;
  add_data_options(eval_cmd, eval_data);
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint")->required();
  eval_cmd->add_option("--cascades", eval_cascades, "cascade file")->required();
  eval_cmd->add_option("--ks", eval_ks, "comma-separated cut-offs");
  eval_cmd->add_option("--json", eval_json, "write the report as JSON ('-' = stdout)");
  eval_cmd->add_flag("--test-split", eval_test_only, "evaluate only the chronological test split");
  add_inference_options(eval_cmd, eval_cfg);

  // predict-next
  auto* next_cmd = app.add_subcommand("predict-next", "rank the next users of a cascade prefix");
  DataArgs next_data;
  std::string next_ckpt, next_prefix;
  std::size_t next_top = 10;
  add_data_options(next_cmd, next_data);
  next_cmd->add_option("--ckpt", next_ckpt, "checkpoint")->required();
  next_cmd->add_option("--cascade-prefix", next_prefix, "file with one cascade line")->required();
  next_cmd->add_option("--top", next_top, "number of users to list (0 = all)");

  // predict-time
  auto* time_cmd = app.add_subcommand("predict-time", "predict when a user is reached");
  DataArgs time_data;
  std::string time_ckpt, time_prefix;
  UserId time_target = 0;
  double time_horizon = 0.0;
  std::size_t time_grid = 0;
  add_data_options(time_cmd, time_data);
  time_cmd->add_option("--ckpt", time_ckpt, "checkpoint")->required();
  time_cmd->add_option("--cascade-prefix", time_prefix, "file with one cascade line")->required();
  time_cmd->add_option("--target-user", time_target, "user to predict")->required();
  time_cmd->add_option("--horizon", time_horizon, "wall-clock time mapped to system time 1")->required();
  time_cmd->add_option("--grid", time_grid, "prediction grid intervals (default: from the model config)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset from a random teacher");
  std::size_t synth_users = 50, synth_cascades = 200;
  std::uint64_t synth_seed = 42;
  std::string synth_dir;
  PlantedParams planted;
  synth_cmd->add_option("--users", synth_users, "number of users");
  synth_cmd->add_option("--cascades", synth_cascades, "number of cascades");
  synth_cmd->add_option("--seed", synth_seed, "random seed");
  synth_cmd->add_option("--out-dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--temperature", planted.temperature, "teacher softmax temperature");
  synth_cmd->add_option("--alpha", planted.alpha, "teacher lazy-walk alpha");
  synth_cmd->add_option("--mean-length", planted.mean_length, "mean cascade length");
  synth_cmd->add_flag("--frontier", planted.frontier_only, "only social neighbours of infected users can be next");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*train_cmd) {
    const RunConfig config = resolve(train_cmd, train_cfg, base_config(train_cfg));
    CascadeSet set = load_cascades(train_cascades);
    if (set.dropped > 0) fmt::print(stderr, "dropped {} cascades shorter than two events\n", set.dropped);
    const std::size_t users = infer_users(train_data, set.cascades);
    const SocialGraph graph = load_social_graph(train_data, users);
    const CascadeSplit split = split_chronologically(std::move(set.cascades), config.split);
    fmt::print(stderr, "{} users, {} train / {} validation / {} test cascades\n", users, split.train.size(),
               split.validation.size(), split.test.size());
    const TrainResult result = train(config, graph, split.train, split.validation, [](const EpochLog& e) {
      fmt::print(stderr, "epoch {:4d}  ricci {:.6f}  ode {:.6f}  total {:.6f}  validation {:.6f}\n", e.epoch, e.ricci,
                 e.ode, e.total, e.validation);
    });
    save_checkpoint(train_out, result.params);
    nlohmann::json side = to_json(config);
    side["num_users"] = users;
    write_json(sidecar(train_out).string(), side);
    fmt::print(stderr, "kept epoch {}; wrote {}\n", result.best_epoch, train_out);
    if (!train_report.empty()) {
      if (split.test.empty()) throw ValidationError("the test split is empty; nothing to report");
      const EvalReport report = evaluate(config, result.params, graph, split.test);
      fmt::print("{}", format_table(report));
      write_json(train_report, report_json(report, config));
    }
    return 0;
  }

  if (*eval_cmd) {
    Model model = load_model(eval_ckpt);
    const RunConfig config = resolve(eval_cmd, eval_cfg, model.config);
    CascadeSet set = load_cascades(eval_cascades);
    if (set.dropped > 0) fmt::print(stderr, "dropped {} cascades shorter than two events\n", set.dropped);
    if (eval_data.users == 0) eval_data.users = model.users;
    const SocialGraph graph = load_social_graph(eval_data, infer_users(eval_data, set.cascades));
    std::vector<Cascade> test = std::move(set.cascades);
    if (eval_test_only) test = split_chronologically(std::move(test), config.split).test;
    EvalOptions options;
    options.ks = parse_ks(eval_ks);
    const EvalReport report = evaluate(config, model.params, graph, test, options);
    if (eval_json != "-") fmt::print("{}", format_table(report));
    if (!eval_json.empty()) write_json(eval_json, report_json(report, config));
    return 0;
  }

  if (*next_cmd) {
    Model model = load_model(next_ckpt);
    const Cascade prefix = load_prefix(next_prefix);
    if (next_data.users == 0) next_data.users = model.users;
    const SocialGraph graph = load_social_graph(next_data, infer_users(next_data, std::span(&prefix, 1)));
    const auto ranked = rank_next_users(model.config, model.params, graph, prefix, next_top);
    std::string line = fmt::format("{}\t{}\t", prefix.message_id, prefix.length());
    for (std::size_t i = 0; i < ranked.size(); ++i)
      line += fmt::format("{}{}:{:.6g}", i == 0 ? "" : ",", ranked[i].user, ranked[i].curvature);
    fmt::print("{}\n", line);
    return 0;
  }

  if (*time_cmd) {
    Model model = load_model(time_ckpt);
    const Cascade prefix = load_prefix(time_prefix);
    if (time_data.users == 0) time_data.users = model.users;
    const SocialGraph graph = load_social_graph(time_data, infer_users(time_data, std::span(&prefix, 1)));
    validate_users(prefix, graph.num_users);
    if (time_target >= graph.num_users) throw ValidationError(fmt::format("target user {} out of range", time_target));
    for (const auto& e : prefix.events)
      if (e.user == time_target)
        throw ValidationError(fmt::format("target user {} is already infected", time_target));
    const double origin = model.config.model.rescale == RescaleMode::offset ? prefix.first_time() : 0.0;
    const TimeScale scale = TimeScale::with_horizon(time_horizon, origin);
    Forward forward(model.config.model, model.params, graph, false);
    const auto states = run_encoder(forward, prefix);
    const TimePrediction p =
        predict_infection_time(forward, states, time_target, scale, time_grid > 0 ? time_grid : model.config.grid,
                               model.config.solver_steps, model.config.encounter);
    fmt::print("{}\t{:.6f}\t{:.6f}\t{:.6f}\n", time_target, p.t_sys, p.wall_clock, p.min_distance);
    return 0;
  }

  if (*synth_cmd) {
    const SyntheticData data = generate_synthetic(synth_users, synth_cascades, synth_seed, planted);
    write_synthetic(synth_dir, data);
    fmt::print(stderr, "wrote {} users and {} cascades to {}\n", synth_users, data.cascades.size(), synth_dir);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericalDivergence& e) {
    fmt::print(stderr, "numerical divergence: {}\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return 1;
  }
}
