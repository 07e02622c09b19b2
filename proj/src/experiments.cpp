#include "alignlab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#ifdef ALIGNLAB_HAVE_OPENMP
#include <omp.h>
#endif

#include "alignlab/rng.hpp"
#include "alignlab/svg.hpp"

namespace alignlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string run_stem(std::size_t n, std::uint64_t seed) {
  return "n" + std::to_string(n) + "_s" + std::to_string(seed);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

std::uint64_t derived_seed(std::uint64_t seed, std::string_view tag, std::size_t n) {
  return Rng::stream(seed, tag).split(static_cast<std::uint64_t>(n)).next_u64();
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void fail_record(RunRecord& r, const std::string& what) {
  r.status = "failed: " + what;
  for (double* f : {&r.train_loss, &r.train_mse, &r.test_loss_half, &r.test_mse, &r.excess_risk,
                    &r.ols_train_loss, &r.ols_train_mse, &r.ols_test_mse, &r.split_ols_gap,
                    &r.frac_cos_above_09, &r.l2_rel_to_limit}) {
    *f = kNaN;
  }
}

void analyse(const ExperimentConfig& c, const Dataset& data, const Dataset& test, const NetParams& net,
             RunRecord& r) {
  r.train_mse = 2.0 * r.train_loss;
  r.sigma2 = c.teacher.noise_variance();
  const TestMetrics tm = test_metrics(net, test);
  r.test_loss_half = tm.test_loss_half;
  r.test_mse = tm.test_mse;
  r.excess_risk = tm.excess_risk;

  const OlsResult o = ols(data);
  r.ols_train_mse = o.residual_mse;
  r.ols_train_loss = 0.5 * o.residual_mse;
  r.ols_test_mse = test_metrics(LinearPredictor{o.beta}, test).test_mse;

  const Vec split_ref = c.teacher.is_linear() ? c.teacher.beta_star() : o.beta;
  try {
    const SplitOls s = ols_split(data, split_ref);
    r.split_ols_gap = (s.plus.beta - s.minus.beta).norm();
    r.l2_rel_to_limit = l2_relative_gap(net, LimitPredictor{s.plus.beta, s.minus.beta}, test.X);
  } catch (const UnsupportedError&) {
    r.split_ols_gap = kNaN;
    r.l2_rel_to_limit = kNaN;
  }

  if (o.beta.norm() > 0.0) {
    r.histogram = cosine_histogram(net, o.beta, c.analysis.hist_bins);
    r.frac_cos_above_09 = r.histogram.fraction_above(0.9);
  }
  r.effective_width = effective_width(net, c.analysis.width_cos_threshold);
  r.interpolated = interpolation_check(net, data, c.analysis.interpolation_tol).interpolated;
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json to_json(const RunRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"fingerprint", r.fingerprint},
          {"n", r.n},
          {"seed", r.seed},
          {"status", r.status},
          {"steps", r.steps},
          {"converged", r.converged},
          {"stop_reason", r.stop_reason},
          {"max_sign_flips", r.max_sign_flips},
          {"train_loss", num(r.train_loss)},
          {"train_mse", num(r.train_mse)},
          {"test_loss_half", num(r.test_loss_half)},
          {"test_mse", num(r.test_mse)},
          {"excess_risk", num(r.excess_risk)},
          {"sigma2", r.sigma2},
          {"ols_train_loss", num(r.ols_train_loss)},
          {"ols_train_mse", num(r.ols_train_mse)},
          {"ols_test_mse", num(r.ols_test_mse)},
          {"split_ols_gap", num(r.split_ols_gap)},
          {"frac_cos_above_0.9", num(r.frac_cos_above_09)},
          {"effective_width", r.effective_width},
          {"interpolated", r.interpolated},
          {"l2_rel_to_limit", num(r.l2_rel_to_limit)},
          {"zero_norm_neurons", r.histogram.zero_norm},
          {"wall_seconds", r.wall_seconds},
          {"trajectory", r.trajectory_path}};
}

std::string sweep_csv_header() {
  return "schema_version,fingerprint,n,seed,status,steps,converged,max_sign_flips,train_loss,train_mse,"
         "test_loss_half,test_mse,excess_risk,sigma2,ols_train_loss,ols_train_mse,ols_test_mse,"
         "split_ols_gap,frac_cos_above_0.9,effective_width,interpolated,l2_rel_to_limit";
}

std::string sweep_csv_row(const RunRecord& r) {
  std::string status = r.status;
  std::replace(status.begin(), status.end(), ',', ';');
  std::replace(status.begin(), status.end(), '\n', ' ');
  std::ostringstream o;
  o << kCsvSchemaVersion << ',' << r.fingerprint << ',' << r.n << ',' << r.seed << ',' << status << ','
    << r.steps << ',' << int{r.converged} << ',' << r.max_sign_flips << ',' << fmt(r.train_loss) << ','
    << fmt(r.train_mse) << ',' << fmt(r.test_loss_half) << ',' << fmt(r.test_mse) << ','
    << fmt(r.excess_risk) << ',' << fmt(r.sigma2) << ',' << fmt(r.ols_train_loss) << ','
    << fmt(r.ols_train_mse) << ',' << fmt(r.ols_test_mse) << ',' << fmt(r.split_ols_gap) << ','
    << fmt(r.frac_cos_above_09) << ',' << r.effective_width << ',' << int{r.interpolated} << ','
    << fmt(r.l2_rel_to_limit);
  return o.str();
}

std::size_t resolve_workers(std::size_t explicit_workers, std::size_t config_workers) {
  if (explicit_workers > 0) return explicit_workers;
  if (const char* env = std::getenv("ALIGNLAB_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0) {
      throw ConfigError(std::string("ALIGNLAB_WORKERS must be a positive integer, got '") + env + "'");
    }
    return static_cast<std::size_t>(v);
  }
  if (config_workers > 0) return config_workers;
#ifdef ALIGNLAB_HAVE_OPENMP
  return static_cast<std::size_t>(omp_get_max_threads());
#else
  return 1;
#endif
}

Dataset run_dataset(const ExperimentConfig& c, std::size_t n, std::uint64_t seed) {
  return gen_dataset(c.input, c.teacher, n, derived_seed(seed, "run-data", n));
}

std::string dataset_digest(const Dataset& data) {
  std::string bytes;
  bytes.append(reinterpret_cast<const char*>(data.X.data()), sizeof(double) * static_cast<std::size_t>(data.X.size()));
  bytes.append(reinterpret_cast<const char*>(data.y.data()), sizeof(double) * static_cast<std::size_t>(data.y.size()));
  return sha256_hex(bytes);
}

RunRecord run_single(const ExperimentConfig& c, std::size_t n, std::uint64_t seed, const RunOptions& opts) {
  RunRecord r;
  r.fingerprint = fingerprint(c);
  r.n = n;
  r.seed = seed;
  r.sigma2 = c.teacher.noise_variance();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Dataset data = run_dataset(c, n, seed);
    const std::uint64_t run_seed = derived_seed(seed, "run-init", n);
    Trainer trainer(init_params(c.init, run_seed), data, c.optimizer, run_seed);
    ProbeSpec probes;
    probes.every = c.probe_every;
    TrainResult tr = train(trainer, c.stop, probes);
    r.steps = tr.steps;
    r.converged = tr.converged;
    r.stop_reason = tr.stop_reason;
    r.max_sign_flips = tr.max_sign_flips;
    r.train_loss = tr.final_loss;
    r.trajectory = std::move(tr.trajectory);

    const Dataset test = make_test_set(c.input, c.teacher, c.analysis.n_test, seed);
    analyse(c, data, test, tr.params, r);

    if (opts.keep_state || !opts.out_dir.empty()) {
      Checkpoint ck = trainer.checkpoint(dataset_digest(data));
      if (!opts.out_dir.empty()) {
        const auto dir = opts.out_dir / "runs";
        ensure_dir(dir);
        const auto stem = run_stem(n, seed);
        r.trajectory_path = (dir / (stem + "_trajectory.csv")).string();
        write_trajectory_csv(r.trajectory, r.trajectory_path);
        save_checkpoint(ck, dir / (stem + "_checkpoint.json"));
        if (!r.histogram.counts.empty()) write_histogram_csv(r.histogram, dir / (stem + "_cosine.csv"));
      }
      if (opts.keep_state) r.final_state = std::move(ck);
    }
  } catch (const std::exception& e) {
    fail_record(r, e.what());
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

RunRecord analyse_run(const ExperimentConfig& c, const Dataset& data, const NetParams& net,
                      std::uint64_t seed) {
  RunRecord r;
  r.fingerprint = fingerprint(c);
  r.n = data.n();
  r.seed = seed;
  r.train_loss = train_loss(net, data);
  analyse(c, data, make_test_set(c.input, c.teacher, c.analysis.n_test, seed), net, r);
  return r;
}

std::vector<RunRecord> run_sweep(const ExperimentConfig& c, const RunOptions& opts) {
  c.validate();
  std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
  for (std::size_t n : c.n_values) {
    for (std::uint64_t s : c.seeds) jobs.emplace_back(n, s);
  }
  std::vector<RunRecord> records(jobs.size());
  const int workers = static_cast<int>(resolve_workers(opts.workers, c.workers));
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    records[i] = run_single(c, jobs[i].first, jobs[i].second, opts);
  }
  if (!opts.out_dir.empty()) {
    ensure_dir(opts.out_dir);
    auto csv = open_out(opts.out_dir / "sweep.csv");
    csv << sweep_csv_header() << '\n';
    for (const auto& r : records) csv << sweep_csv_row(r) << '\n';
    auto jl = open_out(opts.out_dir / "records.jsonl");
    for (const auto& r : records) jl << to_json(r).dump() << '\n';
    open_out(opts.out_dir / "config.json") << to_json(c).dump(2) << '\n';
  }
  return records;
}

// ---------------------------------------------------------------------------

StabilityResult run_stability(const ExperimentConfig& c, const Checkpoint& ck, const Dataset& data,
                              const RunOptions& opts) {
  if (ck.data_n != data.n()) {
    throw ConfigError("checkpoint was trained on n=" + std::to_string(ck.data_n) + ", dataset has n=" +
                      std::to_string(data.n()));
  }
  if (!ck.fingerprint.empty() && ck.fingerprint != dataset_digest(data)) {
    throw ConfigError("checkpoint was trained on a different dataset");
  }
  Trainer trainer = Trainer::resume(ck, data);
  OptimizerSpec decayed = ck.optimizer;
  decayed.schedule = GeometricSchedule{c.stability.factor, c.stability.every_steps};
  trainer.restart_with(decayed);

  std::size_t steps = c.stop.max_steps;
  if (c.stability.factor < 1.0) {
    const auto k = static_cast<std::size_t>(
        std::floor(std::log(c.stability.lr_floor_ratio) / std::log(c.stability.factor)) + 1.0);
    steps = k * c.stability.every_steps;
  }
  StopSpec stop = c.stop;
  stop.max_steps = steps;
  stop.loss_tol = 0.0;
  stop.param_rel_change_tol = 0.0;
  ProbeSpec probes;
  probes.every = c.probe_every;
  TrainResult tr = train(trainer, stop, probes);

  StabilityResult out;
  out.restart_loss = tr.initial_loss;
  out.final_loss = tr.final_loss;
  out.relative_change = std::abs(tr.final_loss - tr.initial_loss) / tr.initial_loss;
  out.final_lr = trainer.current_lr();
  out.steps = tr.steps - ck.step;
  out.trajectory = std::move(tr.trajectory);
  if (!opts.out_dir.empty()) {
    ensure_dir(opts.out_dir);
    write_trajectory_csv(out.trajectory, opts.out_dir / "stability.csv");
  }
  return out;
}

// ---------------------------------------------------------------------------

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope needs two or more points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ConcentrationResult run_concentration(const ExperimentConfig& c, const RunOptions& opts) {
  c.validate();
  if (!c.teacher.is_linear() || !c.input.symmetric_continuous()) {
    throw ConfigError("concentration needs a linear teacher and a symmetric continuous input law");
  }
  std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
  for (std::size_t n : c.n_values) {
    for (std::uint64_t s : c.seeds) jobs.emplace_back(n, s);
  }
  ConcentrationResult out;
  out.rows.resize(jobs.size());
  const int workers = static_cast<int>(resolve_workers(opts.workers, c.workers));
  std::string error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto [n, seed] = jobs[i];
    try {
      const Dataset data = run_dataset(c, n, seed);
      const DeviationResult dev =
          sup_deviation(data, c.input, c.teacher, c.concentration.budget, derived_seed(seed, "sup", n));
      out.rows[i] = {n, c.d(), seed, dev.value, dev.mode_used};
    } catch (const std::exception& e) {
#pragma omp critical(concentration_error)
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw RunError("concentration: " + error);

  for (std::size_t n : c.n_values) {
    std::vector<double> v;
    for (const auto& r : out.rows) {
      if (r.n == n) v.push_back(r.sup_dev);
    }
    out.n_values.push_back(n);
    out.medians.push_back(median(v));
  }
  if (out.n_values.size() >= 2) {
    std::vector<double> xs(out.n_values.begin(), out.n_values.end());
    out.slope = loglog_slope(xs, out.medians);
  } else {
    out.slope = kNaN;
  }
  if (!opts.out_dir.empty()) {
    ensure_dir(opts.out_dir);
    auto csv = open_out(opts.out_dir / "concentration.csv");
    csv << "n,d,seed,sup_dev\n";
    for (const auto& r : out.rows) csv << r.n << ',' << r.d << ',' << r.seed << ',' << fmt(r.sup_dev) << '\n';
    open_out(opts.out_dir / "concentration_summary.json")
        << nlohmann::json{{"n_values", out.n_values}, {"medians", out.medians}, {"slope", out.slope}}.dump(2)
        << '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ExtremalReport> run_extremal(const ExperimentConfig& c, const RunOptions& opts) {
  c.validate();
  std::vector<ExtremalReport> out;
  for (std::size_t n : c.n_values) {
    for (std::uint64_t seed : c.seeds) {
      ExtremalReport rep;
      rep.n = n;
      rep.seed = seed;
      rep.data = run_dataset(c, n, seed);
      const bool exact_ok = rep.data.d() <= kExactMaxDim && n <= kExactMaxPoints;
      const CellEnumeration cells =
          enumerate_cells(rep.data, exact_ok ? CellMode::Exact : CellMode::Sampled, c.analysis.extremal_budget,
                          derived_seed(seed, "extremal-cells", n));
      rep.mode = cells.mode_used;
      rep.cells = cells.cells.size();
      rep.extremal = extremal_set(rep.data, cells);
      out.push_back(std::move(rep));
    }
  }
  if (!opts.out_dir.empty()) {
    ensure_dir(opts.out_dir);
    auto jl = open_out(opts.out_dir / "extremal.jsonl");
    for (const auto& rep : out) {
      for (const auto& e : rep.extremal) {
        nlohmann::json j = to_json(e, rep.data);
        j["n"] = rep.n;
        j["seed"] = rep.seed;
        jl << j.dump() << '\n';
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<AlignProbeRow> run_align_probe(const ExperimentConfig& c, const RunOptions& opts) {
  c.validate();
  const double lr = c.optimizer.base_lr();
  std::vector<AlignProbeRow> rows;
  for (double lambda : c.align_probe.lambdas) {
    for (std::uint64_t seed : c.seeds) {
      const std::size_t n = c.n_values.front();
      const Dataset data = run_dataset(c, n, seed);
      InitSpec init = c.init;
      init.scheme = Dominated{lambda};
      const std::uint64_t run_seed = derived_seed(seed, "run-init", n);
      AlignProbeRow row;
      row.lambda = lambda;
      row.seed = seed;
      row.tau = alignment_time(c.align_probe.epsilon, lambda, c.input, c.teacher);
      row.steps = static_cast<std::size_t>(std::llround(row.tau / lr));
      StopSpec stop = c.stop;
      stop.max_steps = std::max<std::size_t>(row.steps, 1);
      stop.loss_tol = 0.0;
      stop.param_rel_change_tol = 0.0;
      ProbeSpec probes;
      probes.every = 0;
      const TrainResult tr = train(init_params(init, run_seed), data, c.optimizer, stop, probes, run_seed);
      row.sign_flips = tr.max_sign_flips;
      row.report = alignment_probe(tr.params, c.input, c.teacher);
      row.min_cos_to_target = row.report.min_cos_to_target;
      double sum = 0.0;
      std::size_t count = 0;
      std::size_t above = 0;
      for (const auto& na : row.report.neurons) {
        row.max_norm = std::max(row.max_norm, na.norm);
        if (na.zero_norm) continue;
        sum += na.cos_to_target();
        above += na.cos_to_target() >= 0.9;
        ++count;
      }
      row.mean_cos_to_target = count ? sum / static_cast<double>(count) : kNaN;
      row.frac_above_09 = count ? static_cast<double>(above) / static_cast<double>(count) : kNaN;
      rows.push_back(std::move(row));
    }
  }
  if (!opts.out_dir.empty()) {
    ensure_dir(opts.out_dir);
    auto csv = open_out(opts.out_dir / "align_probe.csv");
    csv << "lambda,seed,tau,steps,min_cos_to_target,mean_cos_to_target,frac_above_0.9,max_norm,sign_flips\n";
    for (const auto& r : rows) {
      csv << fmt(r.lambda) << ',' << r.seed << ',' << fmt(r.tau) << ',' << r.steps << ','
          << fmt(r.min_cos_to_target) << ',' << fmt(r.mean_cos_to_target) << ',' << fmt(r.frac_above_09) << ','
          << fmt(r.max_norm) << ',' << r.sign_flips << '\n';
    }
    auto per = open_out(opts.out_dir / "align_probe_neurons.csv");
    per << "lambda,seed,neuron,a_sign,cos_to_plus,cos_to_minus,norm,zero_norm\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.report.neurons.size(); ++i) {
        const auto& na = r.report.neurons[i];
        per << fmt(r.lambda) << ',' << r.seed << ',' << i << ',' << na.a_sign << ',' << fmt(na.cos_to_plus) << ','
            << fmt(na.cos_to_minus) << ',' << fmt(na.norm) << ',' << int{na.zero_norm} << '\n';
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw FormatError("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw FormatError(path.string() + ": row " + std::to_string(t.rows.size() + 2) + " has " +
                        std::to_string(row.size()) + " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw FormatError(path.string() + ": empty csv");
  if (t.rows.empty()) throw FormatError(path.string() + ": csv has a header but no rows");
  return t;
}

void write_histogram_csv(const CosineHistogram& h, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out << fmt(h.edges[b]) << ',' << fmt(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
  }
}

namespace {

double to_double(const std::string& s, const std::filesystem::path& path) {
  if (s == "nan" || s == "-nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": '" + s + "' is not a number");
  }
}

std::string plot_sweep(const CsvTable& t, const std::filesystem::path& path) {
  const auto cn = t.column("n");
  const auto cs = t.column("status");
  const auto ctr = t.column("train_mse");
  const auto cte = t.column("test_mse");
  const auto cols = t.column("ols_test_mse");
  const auto csig = t.column("sigma2");
  std::map<double, std::array<double, 4>> acc;  // n -> sums of train, test, ols, count
  double sigma2 = kNaN;
  for (const auto& row : t.rows) {
    if (row[cs] != "ok") continue;
    auto& a = acc[to_double(row[cn], path)];
    a[0] += to_double(row[ctr], path);
    a[1] += to_double(row[cte], path);
    a[2] += to_double(row[cols], path);
    a[3] += 1.0;
    sigma2 = to_double(row[csig], path);
  }
  svg::LineChart chart;
  chart.title = "Train and test error against n";
  chart.x_label = "n";
  chart.y_label = "mean squared error";
  chart.log_x = true;
  chart.log_y = true;
  svg::Series train{"train", {}, {}, false};
  svg::Series test{"test", {}, {}, false};
  svg::Series olst{"OLS test", {}, {}, true};
  for (const auto& [n, a] : acc) {
    train.x.push_back(n);
    train.y.push_back(a[0] / a[3]);
    test.x.push_back(n);
    test.y.push_back(a[1] / a[3]);
    olst.x.push_back(n);
    olst.y.push_back(a[2] / a[3]);
  }
  chart.series = {train, test, olst};
  if (std::isfinite(sigma2) && sigma2 > 0.0) chart.hlines.push_back({"noise level", sigma2});
  return svg::render(chart);
}

std::string plot_histogram(const CsvTable& t, const std::filesystem::path& path) {
  svg::Histogram h;
  h.title = "Cosine similarity of neurons with the OLS estimator";
  h.x_label = "|cos|";
  const auto lo = t.column("bin_lo");
  const auto hi = t.column("bin_hi");
  const auto cnt = t.column("count");
  for (const auto& row : t.rows) {
    if (h.edges.empty()) h.edges.push_back(to_double(row[lo], path));
    h.edges.push_back(to_double(row[hi], path));
    h.counts.push_back(to_double(row[cnt], path));
  }
  return svg::render(h);
}

std::string plot_trajectory(const CsvTable& t, const std::filesystem::path& path) {
  svg::LineChart chart;
  chart.title = "Training loss";
  chart.x_label = "step";
  chart.y_label = "train loss";
  chart.log_y = true;
  svg::Series s{"train loss", {}, {}, false};
  const auto cs = t.column("step");
  const auto cl = t.column("train_loss");
  for (const auto& row : t.rows) {
    s.x.push_back(to_double(row[cs], path));
    s.y.push_back(to_double(row[cl], path));
  }
  chart.series = {s};
  return svg::render(chart);
}

std::string plot_concentration(const CsvTable& t, const std::filesystem::path& path) {
  std::map<double, std::vector<double>> by_n;
  const auto cn = t.column("n");
  const auto cv = t.column("sup_dev");
  for (const auto& row : t.rows) by_n[to_double(row[cn], path)].push_back(to_double(row[cv], path));
  svg::LineChart chart;
  chart.title = "Largest deviation of D_n from its population value";
  chart.x_label = "n";
  chart.y_label = "median sup deviation";
  chart.log_x = true;
  chart.log_y = true;
  svg::Series s{"median", {}, {}, false};
  for (auto& [n, v] : by_n) {
    s.x.push_back(n);
    s.y.push_back(median(v));
  }
  chart.series = {s};
  return svg::render(chart);
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& csvs,
                                              const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  for (const auto& path : csvs) {
    const CsvTable t = read_csv(path);
    std::string svg;
    if (t.has("test_mse") && t.has("n")) {
      svg = plot_sweep(t, path);
    } else if (t.has("bin_lo") && t.has("count")) {
      svg = plot_histogram(t, path);
    } else if (t.has("sup_dev")) {
      svg = plot_concentration(t, path);
    } else if (t.has("step") && t.has("train_loss")) {
      svg = plot_trajectory(t, path);
    } else {
      throw FormatError(path.string() + ": unrecognised csv layout");
    }
    ensure_dir(out_dir);
    const auto target = out_dir / (path.stem().string() + ".svg");
    open_out(target) << svg;
    written.push_back(target);
  }
  return written;
}

}  // namespace alignlab
