#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "alignlab/config.hpp"
#include "alignlab/experiments.hpp"
#include "alignlab/svg.hpp"
#include "test_util.hpp"

using namespace alignlab;
using alignlab::test::vec;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "alignlab_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.input = InputSpec::gaussian(3);
  c.teacher = TeacherSpec::linear(vec({1.0, 0.0, 0.0}), 0.3);
  c.init = InitSpec{GaussianIID{}, 20, 3, Activation::ReLU};
  c.optimizer = OptimizerSpec{SGD{0.05, 8}, ConstantSchedule{}};
  c.stop = StopSpec{400, 1e-8, 1e-7, 100};
  c.n_values = {30, 60};
  c.seeds = {0, 1};
  c.probe_every = 100;
  c.analysis.n_test = 2000;
  c.validate();
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST_CASE("config JSON round trip and fingerprint") {
  ExperimentConfig c = tiny_config();
  c.teacher = TeacherSpec::random_k_relu(5, 3, 2, 0.3);
  c.optimizer = OptimizerSpec{Adam{}, GeometricSchedule{0.9, 100}};
  const ExperimentConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(fingerprint(back) == fingerprint(c));
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  moved.workers = 3;
  CHECK(fingerprint(moved) == fingerprint(c));
  moved.seeds = {7};
  CHECK(fingerprint(moved) != fingerprint(c));
  CHECK(fingerprint(c).size() == 64);
  for (auto k : {ExperimentKind::Sweep, ExperimentKind::Single, ExperimentKind::Stability, ExperimentKind::Concentration,
                 ExperimentKind::Extremal, ExperimentKind::AlignProbe}) {
    CHECK(experiment_kind_from_string(to_string(k)) == k);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"n_value", {1, 2}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), ConfigError);
  ExperimentConfig c = tiny_config();
  c.init.d = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.n_values = {60, 30};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.stability.factor = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto dir = fresh_dir("cfg");
  write_text(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  write_text(dir / "partial.json", R"({"n_values": [10, 20], "seeds": [4]})");
  const ExperimentConfig p = load_config(dir / "partial.json");
  CHECK(p.n_values == std::vector<std::size_t>{10, 20});
  CHECK(p.m() == 1000);
}

TEST_CASE("worker precedence") {
  unsetenv("ALIGNLAB_WORKERS");
  CHECK(resolve_workers(3, 2) == 3);
  CHECK(resolve_workers(0, 2) == 2);
  setenv("ALIGNLAB_WORKERS", "5", 1);
  CHECK(resolve_workers(0, 2) == 5);
  CHECK(resolve_workers(4, 2) == 4);
  unsetenv("ALIGNLAB_WORKERS");
  CHECK(resolve_workers(0, 0) >= 1);
}

// ---------------------------------------------------------------------------
// Runs

TEST_CASE("sweep writes one CSV row per run and is deterministic") {
  const ExperimentConfig c = tiny_config();
  const auto dir1 = fresh_dir("sweep1");
  const auto dir2 = fresh_dir("sweep2");
  const auto r1 = run_sweep(c, RunOptions{dir1, false, 1});
  const auto r2 = run_sweep(c, RunOptions{dir2, false, 2});
  REQUIRE(r1.size() == 4);
  CHECK(r1[0].n == 30);
  CHECK(r1[1].n == 30);
  CHECK(r1[1].seed == 1);
  CHECK(r1[3].n == 60);
  for (const auto& r : r1) {
    CHECK(r.ok());
    CHECK(r.fingerprint == fingerprint(c));
    CHECK(r.train_mse == doctest::Approx(2.0 * r.train_loss));
    CHECK(r.sigma2 == doctest::Approx(0.09));
    CHECK(r.histogram.total() + r.histogram.zero_norm == 20);
  }
  const CsvTable t = read_csv(dir1 / "sweep.csv");
  CHECK(t.rows.size() == 4);
  CHECK(t.header.front() == "schema_version");
  CHECK(t.has("frac_cos_above_0.9"));
  CHECK(t.rows[0][t.column("schema_version")] == std::to_string(kCsvSchemaVersion));
  CHECK(slurp(dir1 / "sweep.csv") == slurp(dir2 / "sweep.csv"));
  CHECK(fs::exists(dir1 / "runs" / "n30_s0_trajectory.csv"));
  CHECK(fs::exists(dir1 / "runs" / "n60_s1_checkpoint.json"));
  CHECK(fs::exists(dir1 / "config.json"));
  CHECK(count_of(slurp(dir1 / "records.jsonl"), "\n") == 4);
}

TEST_CASE("a failing run is reported and the sweep continues") {
  ExperimentConfig c = tiny_config();
  c.optimizer = OptimizerSpec{GD{80.0}, ConstantSchedule{}};
  c.n_values = {30};
  c.seeds = {0};
  const auto records = run_sweep(c, RunOptions{{}, false, 1});
  REQUIRE(records.size() == 1);
  CHECK_FALSE(records[0].ok());
  CHECK(records[0].status.rfind("failed: ", 0) == 0);
  CHECK(sweep_csv_row(records[0]).find("failed") != std::string::npos);
}

TEST_CASE("run_single keeps a resumable state and analyse_run reproduces the analysis") {
  const ExperimentConfig c = tiny_config();
  const RunRecord r = run_single(c, 30, 0, RunOptions{{}, true, 1});
  REQUIRE(r.final_state.has_value());
  const Dataset data = run_dataset(c, 30, 0);
  CHECK(r.final_state->fingerprint == dataset_digest(data));
  const RunRecord again = analyse_run(c, data, r.final_state->params, 0);
  CHECK(again.test_mse == r.test_mse);
  CHECK(again.frac_cos_above_09 == r.frac_cos_above_09);
  CHECK(again.l2_rel_to_limit == r.l2_rel_to_limit);
  CHECK(run_dataset(c, 30, 0).X == data.X);
  CHECK(run_dataset(c, 30, 1).X != data.X);
}

TEST_CASE("stability restart") {
  ExperimentConfig c = tiny_config();
  c.stability = StabilitySettings{0.5, 10, 1e-2};
  const RunRecord r = run_single(c, 30, 0, RunOptions{{}, true, 1});
  const Dataset data = run_dataset(c, 30, 0);
  const auto dir = fresh_dir("stab");
  const StabilityResult s = run_stability(c, *r.final_state, data, RunOptions{dir, false, 1});
  CHECK(s.steps == 70);  // floor(log 0.01 / log 0.5) + 1 = 7 decays
  CHECK(s.final_lr < 1e-2 * 0.05);
  CHECK(s.restart_loss == doctest::Approx(r.train_loss));
  CHECK(s.relative_change == doctest::Approx(std::abs(s.final_loss - s.restart_loss) / s.restart_loss));
  CHECK(fs::exists(dir / "stability.csv"));
  CHECK_THROWS_AS(run_stability(c, *r.final_state, run_dataset(c, 30, 1)), ConfigError);
  CHECK_THROWS_AS(run_stability(c, *r.final_state, run_dataset(c, 60, 0)), ConfigError);
}

TEST_CASE("concentration experiment") {
  ExperimentConfig c = tiny_config();
  c.kind = ExperimentKind::Concentration;
  c.input = InputSpec::gaussian(2);
  c.teacher = TeacherSpec::linear(vec({1.0, 0.0}), 0.3);
  c.init.d = 2;
  c.n_values = {16, 32, 64};
  c.seeds = {0, 1, 2};
  const auto dir = fresh_dir("conc");
  const ConcentrationResult r = run_concentration(c, RunOptions{dir, false, 1});
  CHECK(r.rows.size() == 9);
  CHECK(r.medians.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(row.mode == CellMode::Exact);
    CHECK(row.sup_dev > 0.0);
  }
  CHECK(read_csv(dir / "concentration.csv").rows.size() == 9);
  CHECK(loglog_slope({1.0, 4.0, 16.0}, {1.0, 0.5, 0.25}) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), DimensionError);
}

TEST_CASE("extremal experiment") {
  ExperimentConfig c = tiny_config();
  c.input = InputSpec::gaussian(2);
  c.teacher = TeacherSpec::linear(vec({1.0, 0.0}), 0.3);
  c.init.d = 2;
  c.n_values = {5};
  c.seeds = {3};
  const auto dir = fresh_dir("extremal");
  const auto reports = run_extremal(c, RunOptions{dir, false, 1});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].mode == CellMode::Exact);
  CHECK(reports[0].cells == 10);
  CHECK_FALSE(reports[0].extremal.empty());
  for (const auto& e : reports[0].extremal) CHECK(e.verdict == Verdict::Extremal);
  CHECK(count_of(slurp(dir / "extremal.jsonl"), "\n") == reports[0].extremal.size());
}

TEST_CASE("alignment probe under a dominated init") {
  ExperimentConfig c = tiny_config();
  c.optimizer = OptimizerSpec{GD{0.05}, ConstantSchedule{}};
  c.n_values = {500};
  c.seeds = {0};
  c.align_probe.lambdas = {1e-3};
  const auto dir = fresh_dir("align");
  const auto rows = run_align_probe(c, RunOptions{dir, false, 1});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].steps == static_cast<std::size_t>(std::llround(rows[0].tau / 0.05)));
  CHECK(rows[0].sign_flips == 0);
  CHECK(rows[0].min_cos_to_target <= rows[0].mean_cos_to_target);
  CHECK(rows[0].report.neurons.size() == 20);
  CHECK(read_csv(dir / "align_probe.csv").rows.size() == 1);
  CHECK(read_csv(dir / "align_probe_neurons.csv").rows.size() == 20);
}

// ---------------------------------------------------------------------------
// CSV and plots

TEST_CASE("read_csv errors") {
  const auto dir = fresh_dir("csv");
  write_text(dir / "empty.csv", "");
  write_text(dir / "header.csv", "a,b\n");
  write_text(dir / "ragged.csv", "a,b\n1,2\n3\n");
  write_text(dir / "ok.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(read_csv(dir / "empty.csv"), FormatError);
  CHECK_THROWS_AS(read_csv(dir / "header.csv"), FormatError);
  CHECK_THROWS_AS(read_csv(dir / "ragged.csv"), FormatError);
  CHECK_THROWS_AS(read_csv(dir / "missing.csv"), FormatError);
  const CsvTable t = read_csv(dir / "ok.csv");
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS((void)t.column("c"), FormatError);
}

TEST_CASE("plots from sweep, histogram and trajectory CSVs") {
  const ExperimentConfig c = tiny_config();
  const auto dir = fresh_dir("plots");
  run_sweep(c, RunOptions{dir, false, 1});
  const auto out = dir / "svg";
  const auto written = emit_plots({dir / "sweep.csv", dir / "runs" / "n30_s0_cosine.csv",
                                   dir / "runs" / "n30_s0_trajectory.csv"},
                                  out);
  REQUIRE(written.size() == 3);
  for (const auto& p : written) CHECK(slurp(p).rfind("<svg", 0) == 0);
  const std::string hist = slurp(written[1]);
  CHECK(count_of(hist, "class=\"bar\"") == c.analysis.hist_bins);
  CHECK(count_of(slurp(written[0]), "class=\"series\"") >= 2);
  write_text(dir / "other.csv", "foo,bar\n1,2\n");
  CHECK_THROWS_AS(emit_plots({dir / "other.csv"}, out), FormatError);
}

TEST_CASE("svg rendering") {
  svg::LineChart chart{"t", "n", "mse", true, true, {{"a", {1.0, 10.0, 100.0}, {1.0, 0.1, 0.01}, false}}, {{"ref", 0.09}}};
  const std::string s = svg::render(chart);
  CHECK(s == svg::render(chart));
  CHECK(count_of(s, "class=\"hline\"") == 1);
  chart.series[0].y.pop_back();
  CHECK_THROWS_AS(svg::render(chart), DimensionError);
  const svg::Histogram h{"h", "cos", {0.0, 0.5, 1.0}, {3.0, 1000.0}};
  const std::string hs = svg::render(h);
  CHECK(hs.find("data-count=\"1000\"") != std::string::npos);
  CHECK_THROWS_AS(svg::render(svg::Histogram{"h", "x", {0.0, 1.0}, {1.0, 2.0}}), DimensionError);
}
