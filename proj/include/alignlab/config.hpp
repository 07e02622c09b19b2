#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "alignlab/data_model.hpp"
#include "alignlab/network.hpp"
#include "alignlab/optim.hpp"

namespace alignlab {

enum class ExperimentKind { Sweep, Single, Stability, Concentration, Extremal, AlignProbe };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct StabilitySettings {
  double factor = 0.85;
  std::size_t every_steps = 50000;
  /// Stop once lr < lr_floor_ratio * lr0.
  double lr_floor_ratio = 1e-8;
};

struct ConcentrationSettings {
  /// Directions sampled when exact enumeration is out of reach.
  std::size_t budget = 20000;
};

struct AlignProbeSettings {
  double epsilon = 0.2;
  std::vector<double> lambdas = {1e-3};
};

struct AnalysisSettings {
  std::size_t n_test = 100000;
  double interpolation_tol = 1.0 / 3.0;
  double width_cos_threshold = 0.95;
  std::size_t hist_bins = 20;
  std::size_t extremal_budget = 2000;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Sweep;
  InputSpec input = InputSpec::gaussian(5);
  TeacherSpec teacher = TeacherSpec::linear(Vec::Unit(5, 0), 0.3);
  InitSpec init{GaussianIID{}, 1000, 5, Activation::ReLU};
  OptimizerSpec optimizer{SGD{0.01, 32}, ConstantSchedule{}};
  StopSpec stop{};
  std::vector<std::size_t> n_values = {100, 500, 2000, 5000};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t probe_every = 10000;
  AnalysisSettings analysis{};
  StabilitySettings stability{};
  ConcentrationSettings concentration{};
  AlignProbeSettings align_probe{};
  std::string output_dir = "out";
  /// 0 picks the OpenMP default.
  std::size_t workers = 0;

  [[nodiscard]] std::size_t d() const { return init.d; }
  [[nodiscard]] std::size_t m() const { return init.m; }
  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// The scaled version of the paper's main experiment.
ExperimentConfig default_sweep_config();

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys take the defaults above; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON form (output_dir and workers excluded).
std::string fingerprint(const ExperimentConfig& c);

}  // namespace alignlab
