#include "hwsf/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace hwsf {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: section '" + where + "' must be an object");
  for (const auto& item : j.items())
    if (allowed.find(item.key()) == allowed.end())
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
}

Eigen::Vector2d vec2(const json& j, const std::string& where) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError("config: " + where + " must have 2 entries");
  return Eigen::Vector2d(v[0], v[1]);
}

Eigen::VectorXd vecn(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
}

void parse_env(const json& j, EnvConfig& env) {
  require_keys(j, {"dt", "horizon", "gamma", "start_p", "start_v", "waypoint", "ref_speed",
                   "action_lo", "action_hi", "alpha0", "alpha1", "obstacles",
                   "lqr_state_weights", "lqr_input_weights", "slack_weight", "soft",
                   "spd_floor"},
               "env");
  if (j.contains("dt")) env.dt = j["dt"].get<double>();
  if (j.contains("horizon")) env.horizon = j["horizon"].get<int>();
  if (j.contains("gamma")) env.gamma = j["gamma"].get<double>();
  if (j.contains("start_p")) env.start_p = vec2(j["start_p"], "env.start_p");
  if (j.contains("start_v")) env.start_v = vec2(j["start_v"], "env.start_v");
  if (j.contains("waypoint")) env.waypoint = vec2(j["waypoint"], "env.waypoint");
  if (j.contains("ref_speed")) env.ref_speed = j["ref_speed"].get<double>();
  if (j.contains("action_lo")) env.action_lo = vecn(j["action_lo"]);
  if (j.contains("action_hi")) env.action_hi = vecn(j["action_hi"]);
  if (j.contains("alpha0")) env.alpha0 = j["alpha0"].get<double>();
  if (j.contains("alpha1")) env.alpha1 = j["alpha1"].get<double>();
  if (j.contains("slack_weight")) env.slack_weight = j["slack_weight"].get<double>();
  if (j.contains("soft")) env.soft = j["soft"].get<bool>();
  if (j.contains("spd_floor")) env.spd_floor = j["spd_floor"].get<double>();
  if (j.contains("lqr_state_weights")) {
    const auto v = j["lqr_state_weights"].get<std::vector<double>>();
    if (v.size() != 4) throw ConfigError("config: env.lqr_state_weights must have 4 entries");
    env.lqr_state_weights = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  }
  if (j.contains("lqr_input_weights"))
    env.lqr_input_weights = vec2(j["lqr_input_weights"], "env.lqr_input_weights");
  if (j.contains("obstacles")) {
    env.obstacles.clear();
    for (const auto& jo : j["obstacles"]) {
      require_keys(jo, {"center", "radius", "margin"}, "env.obstacles[]");
      Obstacle o;
      o.center = vec2(jo.at("center"), "obstacle center");
      o.radius = jo.at("radius").get<double>();
      o.margin = jo.value("margin", 0.0);
      env.obstacles.push_back(std::move(o));
    }
  }
}

void parse_fqi(const json& j, FqiSection& f) {
  require_keys(j, {"gamma", "alpha", "beta", "tau", "epsilon", "d_radius", "theta_tol",
                   "max_iters", "grid_per_dim", "grid_cap", "grid_seed", "poly_degree",
                   "rbf_count", "rbf_width"},
               "fqi");
  if (j.contains("gamma")) f.gamma = j["gamma"].get<double>();
  if (j.contains("alpha")) f.alpha = j["alpha"].get<double>();
  if (j.contains("beta")) f.beta = j["beta"].get<double>();
  if (j.contains("tau")) f.tau = j["tau"].get<double>();
  if (j.contains("epsilon")) f.epsilon = j["epsilon"].get<double>();
  if (j.contains("d_radius")) f.d_radius = j["d_radius"].get<double>();
  if (j.contains("theta_tol")) f.theta_tol = j["theta_tol"].get<double>();
  if (j.contains("max_iters")) f.max_iters = j["max_iters"].get<int>();
  if (j.contains("grid_per_dim")) f.grid_per_dim = j["grid_per_dim"].get<int>();
  if (j.contains("grid_cap")) f.grid_cap = j["grid_cap"].get<int>();
  if (j.contains("grid_seed")) f.grid_seed = j["grid_seed"].get<std::uint64_t>();
  if (j.contains("poly_degree")) f.poly_degree = j["poly_degree"].get<int>();
  if (j.contains("rbf_count")) f.rbf_count = j["rbf_count"].get<int>();
  if (j.contains("rbf_width")) f.rbf_width = j["rbf_width"].get<double>();
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  if (!(fqi.gamma > 0.0 && fqi.gamma < 1.0)) throw ConfigError("config: fqi.gamma in (0,1)");
  if (fqi.alpha < 0.0 || fqi.beta < 0.0) throw ConfigError("config: negative fqi weight");
  if (fqi.tau <= 0.0 || fqi.epsilon <= 0.0)
    throw ConfigError("config: fqi.tau and fqi.epsilon must be positive");
  if (fqi.theta_tol <= 0.0) throw ConfigError("config: fqi.theta_tol must be positive");
  if (fqi.max_iters < 1) throw ConfigError("config: fqi.max_iters must be >= 1");
  if (fqi.grid_per_dim < 1 || fqi.grid_cap < 1) throw ConfigError("config: bad fqi grid spec");
  if (fqi.poly_degree < 0 || fqi.poly_degree > 2)
    throw ConfigError("config: fqi.poly_degree in {0,1,2}");
  if (fqi.rbf_count < 0) throw ConfigError("config: negative fqi.rbf_count");
  if (fqi.rbf_count > 0 && fqi.rbf_width <= 0.0)
    throw ConfigError("config: fqi.rbf_width must be positive");
  if (fqi.d_radius <= 0.0) throw ConfigError("config: fqi.d_radius must be positive");
  if (bounds.instances < 0) throw ConfigError("config: negative bounds.instances");
  if (bounds.tol <= 0.0) throw ConfigError("config: bounds.tol must be positive");
  if (bounds.d_radius <= 0.0) throw ConfigError("config: bounds.d_radius must be positive");
  if (collect.rollouts < 1) throw ConfigError("config: collect.rollouts must be >= 1");
  if (collect.explore_noise < 0.0) throw ConfigError("config: negative explore noise");
  if (bench.scenarios < 1) throw ConfigError("config: bench.scenarios must be >= 1");
  for (const auto& f : simulate.filters) filter_kind_from_string(f);
  if (simulate.w_source != "analytic" && simulate.w_source != "learned")
    throw ConfigError("config: simulate.w_source must be 'analytic' or 'learned'");
  if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  require_keys(j, {"env", "fqi", "bounds", "collect", "simulate", "bench", "output_dir", "seed"},
               "top level");
  ExperimentConfig cfg;
  if (j.contains("env")) parse_env(j["env"], cfg.env);
  if (j.contains("fqi")) parse_fqi(j["fqi"], cfg.fqi);
  if (j.contains("bounds")) {
    require_keys(j["bounds"], {"instances", "seed", "tol", "d_radius"}, "bounds");
    const auto& jb = j["bounds"];
    if (jb.contains("instances")) cfg.bounds.instances = jb["instances"].get<int>();
    if (jb.contains("seed")) cfg.bounds.seed = jb["seed"].get<std::uint64_t>();
    if (jb.contains("tol")) cfg.bounds.tol = jb["tol"].get<double>();
    if (jb.contains("d_radius")) cfg.bounds.d_radius = jb["d_radius"].get<double>();
  }
  if (j.contains("collect")) {
    require_keys(j["collect"], {"rollouts", "explore_noise"}, "collect");
    const auto& jc = j["collect"];
    if (jc.contains("rollouts")) cfg.collect.rollouts = jc["rollouts"].get<int>();
    if (jc.contains("explore_noise"))
      cfg.collect.explore_noise = jc["explore_noise"].get<double>();
  }
  if (j.contains("simulate")) {
    require_keys(j["simulate"], {"filters", "w_source", "model_file"}, "simulate");
    const auto& js = j["simulate"];
    if (js.contains("filters")) cfg.simulate.filters = js["filters"].get<std::vector<std::string>>();
    if (js.contains("w_source")) cfg.simulate.w_source = js["w_source"].get<std::string>();
    if (js.contains("model_file")) cfg.simulate.model_file = js["model_file"].get<std::string>();
  }
  if (j.contains("bench")) {
    require_keys(j["bench"], {"scenarios"}, "bench");
    if (j["bench"].contains("scenarios"))
      cfg.bench.scenarios = j["bench"]["scenarios"].get<int>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

void apply_override(std::string& json_text, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // fall back to a plain string

  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override has an empty key path");
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
  (*node)[parts.back()] = parsed;
  json_text = j.dump();
}

}  // namespace hwsf
