// alignlab command line: dataset generation, training, sweeps and the
// geometry experiments. Exit codes: 0 success, 2 configuration error, 3 run failure.

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "alignlab/config.hpp"
#include "alignlab/experiments.hpp"

namespace {

using namespace alignlab;

constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t workers = 0;
};

ExperimentConfig load(const Globals& g, ExperimentKind kind) {
  ExperimentConfig c = g.config_path.empty() ? default_sweep_config() : load_config(g.config_path);
  if (g.config_path.empty()) c.kind = kind;
  if (g.seed) c.seeds = {*g.seed};
  if (!g.out_dir.empty()) c.output_dir = g.out_dir;
  c.validate();
  return c;
}

RunOptions options(const ExperimentConfig& c, const Globals& g) {
  RunOptions o;
  o.out_dir = c.output_dir;
  o.workers = g.workers;
  return o;
}

int report_runs(const std::vector<RunRecord>& records) {
  bool failed = false;
  std::printf("%8s %6s %10s %10s %10s %6s %s\n", "n", "seed", "train_mse", "test_mse", "cos>0.9", "interp",
              "status");
  for (const auto& r : records) {
    std::printf("%8zu %6llu %10.5f %10.5f %10.3f %6d %s\n", r.n, static_cast<unsigned long long>(r.seed),
                r.train_mse, r.test_mse, r.frac_cos_above_09, int{r.interpolated}, r.status.c_str());
    failed = failed || !r.ok();
  }
  return failed ? kExitRun : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alignlab: early alignment and the optimization threshold in two-layer ReLU networks"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run a single seed instead of the config's seed list");
  app.add_option("--out-dir", g.out_dir, "Output directory (overrides the config)");
  app.add_option("--workers", g.workers, "Concurrent runs (overrides ALIGNLAB_WORKERS and the config)");

  std::size_t gen_n = 0;
  auto* gen = app.add_subcommand("gen", "Generate a dataset as CSV");
  gen->add_option("--n", gen_n, "Number of samples (default: first n value)");

  std::size_t train_n = 0;
  auto* train_cmd = app.add_subcommand("train", "Train and analyse one (n, seed) run");
  train_cmd->add_option("--n", train_n, "Number of samples (default: first n value)");

  auto* sweep = app.add_subcommand("sweep", "Train over every n value and seed");

  std::string stab_ckpt;
  auto* stability = app.add_subcommand("stability", "Warm restart with a geometric learning-rate decay");
  stability->add_option("--checkpoint", stab_ckpt, "Checkpoint written by train or sweep")
      ->required()
      ->check(CLI::ExistingFile);

  auto* concentration = app.add_subcommand("concentration", "Deviation of D_n from its population value");
  auto* extremal = app.add_subcommand("extremal", "Enumerate cells and certify extremal vectors");
  auto* align = app.add_subcommand("align-probe", "Neuron alignment at the end of the early phase");

  std::string an_ckpt;
  auto* analyze = app.add_subcommand("analyze", "Analysis columns for a saved checkpoint");
  analyze->add_option("--checkpoint", an_ckpt, "Checkpoint to analyse")->required()->check(CLI::ExistingFile);

  std::vector<std::string> plot_inputs;
  auto* plot = app.add_subcommand("plot", "Render CSV outputs as SVG");
  plot->add_option("csv", plot_inputs, "CSV files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const ExperimentConfig c = load(g, ExperimentKind::Single);
      const std::size_t n = gen_n ? gen_n : c.n_values.front();
      const Dataset data = run_dataset(c, n, c.seeds.front());
      std::filesystem::create_directories(c.output_dir);
      const auto path = std::filesystem::path(c.output_dir) / "dataset.csv";
      write_dataset_csv(data, path);
      std::cout << "wrote " << path.string() << " (n=" << n << ", d=" << data.d() << ")\n";
      return 0;
    }
    if (*train_cmd) {
      const ExperimentConfig c = load(g, ExperimentKind::Single);
      const std::size_t n = train_n ? train_n : c.n_values.front();
      const RunRecord r = run_single(c, n, c.seeds.front(), options(c, g));
      std::cout << to_json(r).dump(2) << '\n';
      return r.ok() ? 0 : kExitRun;
    }
    if (*sweep) {
      const ExperimentConfig c = load(g, ExperimentKind::Sweep);
      const auto records = run_sweep(c, options(c, g));
      const int code = report_runs(records);
      std::cout << "wrote " << (std::filesystem::path(c.output_dir) / "sweep.csv").string() << '\n';
      return code;
    }
    if (*stability) {
      const ExperimentConfig c = load(g, ExperimentKind::Stability);
      const Checkpoint ck = load_checkpoint(stab_ckpt, c.d());
      const Dataset data = run_dataset(c, ck.data_n, c.seeds.front());
      const StabilityResult s = run_stability(c, ck, data, options(c, g));
      std::printf("restart loss %.6g, final loss %.6g, relative change %.3g, final lr %.3g after %zu steps\n",
                  s.restart_loss, s.final_loss, s.relative_change, s.final_lr, s.steps);
      return 0;
    }
    if (*concentration) {
      const ExperimentConfig c = load(g, ExperimentKind::Concentration);
      const ConcentrationResult r = run_concentration(c, options(c, g));
      for (std::size_t i = 0; i < r.n_values.size(); ++i) {
        std::printf("n=%-8zu median sup deviation %.5f\n", r.n_values[i], r.medians[i]);
      }
      std::printf("log-log slope %.3f\n", r.slope);
      return 0;
    }
    if (*extremal) {
      const ExperimentConfig c = load(g, ExperimentKind::Extremal);
      for (const auto& rep : run_extremal(c, options(c, g))) {
        std::printf("n=%zu seed=%llu %s cells=%zu extremal=%zu\n", rep.n, static_cast<unsigned long long>(rep.seed),
                    rep.mode == CellMode::Exact ? "exact" : "sampled", rep.cells, rep.extremal.size());
      }
      return 0;
    }
    if (*align) {
      const ExperimentConfig c = load(g, ExperimentKind::AlignProbe);
      for (const auto& r : run_align_probe(c, options(c, g))) {
        std::printf("lambda=%g seed=%llu tau=%.4f steps=%zu min cos %.4f mean cos %.4f frac>0.9 %.3f\n", r.lambda,
                    static_cast<unsigned long long>(r.seed), r.tau, r.steps, r.min_cos_to_target,
                    r.mean_cos_to_target, r.frac_above_09);
      }
      return 0;
    }
    if (*analyze) {
      const ExperimentConfig c = load(g, ExperimentKind::Single);
      const Checkpoint ck = load_checkpoint(an_ckpt, c.d());
      const Dataset data = run_dataset(c, ck.data_n, c.seeds.front());
      if (!ck.fingerprint.empty() && ck.fingerprint != dataset_digest(data)) {
        throw ConfigError("checkpoint was trained on a different dataset (check --seed and --config)");
      }
      std::cout << to_json(analyse_run(c, data, ck.params, c.seeds.front())).dump(2) << '\n';
      return 0;
    }
    if (*plot) {
      std::vector<std::filesystem::path> inputs(plot_inputs.begin(), plot_inputs.end());
      const auto out = g.out_dir.empty() ? std::filesystem::path("plots") : std::filesystem::path(g.out_dir);
      for (const auto& p : emit_plots(inputs, out)) std::cout << "wrote " << p.string() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnsupportedError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitRun;
  }
  return 0;
}
