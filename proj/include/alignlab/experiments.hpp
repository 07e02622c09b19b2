#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "alignlab/analysis.hpp"
#include "alignlab/config.hpp"
#include "alignlab/geometry.hpp"
#include "alignlab/optim.hpp"

namespace alignlab {

inline constexpr int kCsvSchemaVersion = 1;

struct RunOptions {
  /// Where per-run files go; empty writes nothing.
  std::filesystem::path out_dir;
  /// Keep the final state (params and a resumable checkpoint) in the record.
  bool keep_state = false;
  /// Overrides config.workers when nonzero.
  std::size_t workers = 0;
};

struct RunRecord {
  std::string fingerprint;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";

  std::size_t steps = 0;
  bool converged = false;
  std::string stop_reason;
  std::size_t max_sign_flips = 0;

  double train_loss = 0.0;  // (1/2n) sum r^2
  double train_mse = 0.0;
  double test_loss_half = 0.0;
  double test_mse = 0.0;
  double excess_risk = 0.0;
  double sigma2 = 0.0;
  double ols_train_loss = 0.0;
  double ols_train_mse = 0.0;
  double ols_test_mse = 0.0;
  double split_ols_gap = 0.0;
  double frac_cos_above_09 = 0.0;
  std::size_t effective_width = 0;
  bool interpolated = false;
  double l2_rel_to_limit = 0.0;

  double wall_seconds = 0.0;
  std::string trajectory_path;

  CosineHistogram histogram;
  std::vector<TrajectoryRow> trajectory;
  std::optional<Checkpoint> final_state;

  [[nodiscard]] bool ok() const { return status == "ok"; }
};

nlohmann::json to_json(const RunRecord& r);
std::string sweep_csv_header();
std::string sweep_csv_row(const RunRecord& r);

/// Worker count: explicit value, then ALIGNLAB_WORKERS, then the config, then
/// the OpenMP default.
std::size_t resolve_workers(std::size_t explicit_workers, std::size_t config_workers);

/// Dataset of one (n, seed) run; resampled from scratch for every pair.
Dataset run_dataset(const ExperimentConfig& c, std::size_t n, std::uint64_t seed);
/// Hex digest of a dataset's inputs and labels.
std::string dataset_digest(const Dataset& data);

/// Train and analyse one run. Library errors are caught and reported in `status`.
RunRecord run_single(const ExperimentConfig& c, std::size_t n, std::uint64_t seed,
                     const RunOptions& opts = {});

/// The analysis columns of a run for an already trained network.
RunRecord analyse_run(const ExperimentConfig& c, const Dataset& data, const NetParams& net,
                      std::uint64_t seed);

/// All (n, seed) pairs, in parallel across runs; records come back in
/// (n, seed) order. Writes sweep.csv and records.jsonl when out_dir is set.
std::vector<RunRecord> run_sweep(const ExperimentConfig& c, const RunOptions& opts = {});

// ---------------------------------------------------------------------------

struct StabilityResult {
  std::vector<TrajectoryRow> trajectory;
  double restart_loss = 0.0;
  double final_loss = 0.0;
  double relative_change = 0.0;  // |final - restart| / restart
  double final_lr = 0.0;
  std::size_t steps = 0;
};

/// Continues `ck` on `data` with lr0 * factor^floor(t / every) until the rate
/// drops below lr_floor_ratio * lr0 (or stop.max_steps when factor is 1).
StabilityResult run_stability(const ExperimentConfig& c, const Checkpoint& ck, const Dataset& data,
                              const RunOptions& opts = {});

// ---------------------------------------------------------------------------

struct ConcentrationRow {
  std::size_t n = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
  double sup_dev = 0.0;
  CellMode mode = CellMode::Exact;
};

struct ConcentrationResult {
  std::vector<ConcentrationRow> rows;
  std::vector<std::size_t> n_values;
  std::vector<double> medians;
  double slope = 0.0;  // least-squares slope of log median vs log n
};

ConcentrationResult run_concentration(const ExperimentConfig& c, const RunOptions& opts = {});

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------

struct ExtremalReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  CellMode mode = CellMode::Exact;
  std::size_t cells = 0;
  std::vector<ExtremalCandidate> extremal;
  Dataset data;
};

/// For every (n, seed): enumerate cells (exact when allowed), run the
/// extremal search from each. Writes extremal.jsonl when out_dir is set.
std::vector<ExtremalReport> run_extremal(const ExperimentConfig& c, const RunOptions& opts = {});

// ---------------------------------------------------------------------------

struct AlignProbeRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double tau = 0.0;
  std::size_t steps = 0;
  double min_cos_to_target = 0.0;
  double mean_cos_to_target = 0.0;
  double frac_above_09 = 0.0;
  double max_norm = 0.0;
  std::size_t sign_flips = 0;
  AlignmentReport report;
};

/// Dominated init at each lambda, trained for round(tau / lr) steps on the
/// first n value, then probed.
std::vector<AlignProbeRow> run_align_probe(const ExperimentConfig& c, const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// CSV and plots

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index; throws FormatError if absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
  [[nodiscard]] bool has(const std::string& name) const;
};

/// Comma-separated, no quoting. Throws FormatError when empty or ragged.
CsvTable read_csv(const std::filesystem::path& path);

void write_histogram_csv(const CosineHistogram& h, const std::filesystem::path& path);

/// One SVG per CSV (sweep, histogram, trajectory or concentration layout),
/// written next to out_dir/<stem>.svg. Returns the written paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& csvs,
                                              const std::filesystem::path& out_dir);

}  // namespace alignlab
