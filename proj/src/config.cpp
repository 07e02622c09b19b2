#include "alignlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace alignlab {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKinds[] = {
    {ExperimentKind::Sweep, "sweep"},
    {ExperimentKind::Single, "single"},
    {ExperimentKind::Stability, "stability"},
    {ExperimentKind::Concentration, "concentration"},
    {ExperimentKind::Extremal, "extremal"},
    {ExperimentKind::AlignProbe, "align_probe"},
};

const std::set<std::string> kKeys = {"kind",     "input",         "teacher", "init",     "optimizer",
                                     "stop",     "n_values",      "seeds",   "probe_every",
                                     "analysis", "stability",     "concentration",
                                     "align_probe", "output_dir", "workers"};

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kKinds) {
    if (s == name) return kind;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

void ExperimentConfig::validate() const {
  input.validate();
  teacher.validate();
  init.validate();
  optimizer.validate();
  stop.validate();
  if (input.dim() != init.d || teacher.dim() != init.d) {
    throw ConfigError("input (d=" + std::to_string(input.dim()) + "), teacher (d=" +
                      std::to_string(teacher.dim()) + ") and init (d=" + std::to_string(init.d) +
                      ") dimensions differ");
  }
  if (n_values.empty()) throw ConfigError("n_values is empty");
  if (!std::is_sorted(n_values.begin(), n_values.end())) throw ConfigError("n_values must be ascending");
  if (n_values.front() == 0) throw ConfigError("n_values must be positive");
  if (seeds.empty()) throw ConfigError("seeds is empty");
  if (analysis.n_test == 0) throw ConfigError("analysis.n_test must be positive");
  if (!(analysis.interpolation_tol > 0.0)) throw ConfigError("analysis.interpolation_tol must be positive");
  if (!(analysis.width_cos_threshold > 0.0 && analysis.width_cos_threshold < 1.0)) {
    throw ConfigError("analysis.width_cos_threshold must lie in (0, 1)");
  }
  if (analysis.hist_bins == 0) throw ConfigError("analysis.hist_bins must be positive");
  if (!(stability.factor > 0.0 && stability.factor <= 1.0)) throw ConfigError("stability.factor must lie in (0, 1]");
  if (stability.every_steps == 0) throw ConfigError("stability.every_steps must be positive");
  if (!(stability.lr_floor_ratio > 0.0 && stability.lr_floor_ratio < 1.0)) {
    throw ConfigError("stability.lr_floor_ratio must lie in (0, 1)");
  }
  if (concentration.budget == 0) throw ConfigError("concentration.budget must be positive");
  for (double l : align_probe.lambdas) {
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("align_probe.lambdas must lie in (0, 1)");
  }
  if (!(align_probe.epsilon > 0.0)) throw ConfigError("align_probe.epsilon must be positive");
}

ExperimentConfig default_sweep_config() {
  ExperimentConfig c;
  c.validate();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"kind", to_string(c.kind)},
      {"input", to_json(c.input)},
      {"teacher", to_json(c.teacher)},
      {"init", to_json(c.init)},
      {"optimizer", to_json(c.optimizer)},
      {"stop", to_json(c.stop)},
      {"n_values", c.n_values},
      {"seeds", c.seeds},
      {"probe_every", c.probe_every},
      {"analysis",
       {{"n_test", c.analysis.n_test},
        {"interpolation_tol", c.analysis.interpolation_tol},
        {"width_cos_threshold", c.analysis.width_cos_threshold},
        {"hist_bins", c.analysis.hist_bins},
        {"extremal_budget", c.analysis.extremal_budget}}},
      {"stability",
       {{"factor", c.stability.factor},
        {"every_steps", c.stability.every_steps},
        {"lr_floor_ratio", c.stability.lr_floor_ratio}}},
      {"concentration", {{"budget", c.concentration.budget}}},
      {"align_probe", {{"epsilon", c.align_probe.epsilon}, {"lambdas", c.align_probe.lambdas}}},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
  };
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  try {
    ExperimentConfig c;
    if (j.contains("kind")) c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("input")) c.input = input_spec_from_json(j.at("input"));
    if (j.contains("teacher")) c.teacher = teacher_from_json(j.at("teacher"));
    if (j.contains("init")) c.init = init_spec_from_json(j.at("init"));
    if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
    if (j.contains("stop")) c.stop = stop_from_json(j.at("stop"));
    c.n_values = j.value("n_values", c.n_values);
    c.seeds = j.value("seeds", c.seeds);
    c.probe_every = j.value("probe_every", c.probe_every);
    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      c.analysis.n_test = a.value("n_test", c.analysis.n_test);
      c.analysis.interpolation_tol = a.value("interpolation_tol", c.analysis.interpolation_tol);
      c.analysis.width_cos_threshold = a.value("width_cos_threshold", c.analysis.width_cos_threshold);
      c.analysis.hist_bins = a.value("hist_bins", c.analysis.hist_bins);
      c.analysis.extremal_budget = a.value("extremal_budget", c.analysis.extremal_budget);
    }
    if (j.contains("stability")) {
      const auto& s = j.at("stability");
      c.stability.factor = s.value("factor", c.stability.factor);
      c.stability.every_steps = s.value("every_steps", c.stability.every_steps);
      c.stability.lr_floor_ratio = s.value("lr_floor_ratio", c.stability.lr_floor_ratio);
    }
    if (j.contains("concentration")) {
      c.concentration.budget = j.at("concentration").value("budget", c.concentration.budget);
    }
    if (j.contains("align_probe")) {
      const auto& a = j.at("align_probe");
      c.align_probe.epsilon = a.value("epsilon", c.align_probe.epsilon);
      c.align_probe.lambdas = a.value("lambdas", c.align_probe.lambdas);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.workers = j.value("workers", c.workers);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string fingerprint(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");
  j.erase("workers");
  return sha256_hex(j.dump());
}

}  // namespace alignlab
