#include "alignlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <openssl/evp.h>

namespace alignlab {

// ---------------------------------------------------------------------------
// Specs

double OptimizerSpec::base_lr() const {
  return std::visit([](const auto& m) { return m.lr; }, method);
}

void OptimizerSpec::set_base_lr(double lr) {
  std::visit([lr](auto& m) { m.lr = lr; }, method);
}

std::size_t OptimizerSpec::batch_size(std::size_t n) const {
  if (const auto* s = std::get_if<SGD>(&method)) return std::min(s->batch_size, n);
  if (const auto* a = std::get_if<Adam>(&method))
    return a->batch_size == 0 ? n : std::min(a->batch_size, n);
  return n;
}

double OptimizerSpec::lr_at(std::size_t steps_since_origin) const {
  const double lr0 = base_lr();
  if (const auto* g = std::get_if<GeometricSchedule>(&schedule)) {
    const auto k = static_cast<double>(steps_since_origin / g->every_steps);
    return lr0 * std::pow(g->factor, k);
  }
  return lr0;
}

void OptimizerSpec::validate() const {
  if (!(base_lr() > 0.0) || !std::isfinite(base_lr())) throw ConfigError("optimizer: lr must be > 0");
  if (const auto* s = std::get_if<SGD>(&method))
    if (s->batch_size < 1) throw ConfigError("optimizer: batch_size must be >= 1");
  if (const auto* a = std::get_if<Adam>(&method)) {
    if (!(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0))
      throw ConfigError("optimizer: Adam betas must lie in [0, 1)");
    if (!(a->eps > 0.0)) throw ConfigError("optimizer: Adam eps must be > 0");
  }
  if (const auto* g = std::get_if<GeometricSchedule>(&schedule)) {
    if (!(g->factor > 0.0 && g->factor <= 1.0)) throw ConfigError("schedule: factor must lie in (0, 1]");
    if (g->every_steps < 1) throw ConfigError("schedule: every_steps must be >= 1");
  }
}

void StopSpec::validate() const {
  if (max_steps < 1) throw ConfigError("stop: max_steps must be >= 1");
  if (!(loss_tol >= 0.0) || !(param_rel_change_tol >= 0.0)) throw ConfigError("stop: tolerances must be >= 0");
  if (window_steps < 1) throw ConfigError("stop: window_steps must be >= 1");
}

nlohmann::json to_json(const OptimizerSpec& spec) {
  nlohmann::json j;
  if (const auto* g = std::get_if<GD>(&spec.method)) {
    j["kind"] = "gd";
    j["lr"] = g->lr;
  } else if (const auto* s = std::get_if<SGD>(&spec.method)) {
    j["kind"] = "sgd";
    j["lr"] = s->lr;
    j["batch_size"] = s->batch_size;
  } else {
    const auto& a = std::get<Adam>(spec.method);
    j["kind"] = "adam";
    j["lr"] = a.lr;
    j["beta1"] = a.beta1;
    j["beta2"] = a.beta2;
    j["eps"] = a.eps;
    j["batch_size"] = a.batch_size;
  }
  if (const auto* g = std::get_if<GeometricSchedule>(&spec.schedule))
    j["schedule"] = {{"kind", "geometric"}, {"factor", g->factor}, {"every_steps", g->every_steps}};
  else
    j["schedule"] = {{"kind", "constant"}};
  return j;
}

OptimizerSpec optimizer_from_json(const nlohmann::json& j) {
  try {
    OptimizerSpec spec;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "gd") {
      spec.method = GD{j.value("lr", 1e-2)};
    } else if (kind == "sgd") {
      spec.method = SGD{j.value("lr", 1e-2), j.value("batch_size", std::size_t{32})};
    } else if (kind == "adam") {
      Adam a;
      a.lr = j.value("lr", a.lr);
      a.beta1 = j.value("beta1", a.beta1);
      a.beta2 = j.value("beta2", a.beta2);
      a.eps = j.value("eps", a.eps);
      a.batch_size = j.value("batch_size", a.batch_size);
      spec.method = a;
    } else {
      throw ConfigError("optimizer: unknown kind '" + kind + "'");
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      const auto sk = s.at("kind").get<std::string>();
      if (sk == "geometric")
        spec.schedule = GeometricSchedule{s.at("factor").get<double>(), s.at("every_steps").get<std::size_t>()};
      else if (sk != "constant")
        throw ConfigError("schedule: unknown kind '" + sk + "'");
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
}

nlohmann::json to_json(const StopSpec& spec) {
  return {{"max_steps", spec.max_steps},
          {"loss_tol", spec.loss_tol},
          {"param_rel_change_tol", spec.param_rel_change_tol},
          {"window_steps", spec.window_steps}};
}

StopSpec stop_from_json(const nlohmann::json& j) {
  try {
    StopSpec s;
    s.max_steps = j.value("max_steps", s.max_steps);
    s.loss_tol = j.value("loss_tol", s.loss_tol);
    s.param_rel_change_tol = j.value("param_rel_change_tol", s.param_rel_change_tol);
    s.window_steps = j.value("window_steps", s.window_steps);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stop: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Update rules

void sgd_update(double lr, std::span<double> params, std::span<const double> grad) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

void adam_update(const Adam& hyper, double lr, std::size_t t, AdamMoments& moments,
                 std::span<double> params, std::span<const double> grad) {
  moments.first.resize(params.size(), 0.0);
  moments.second.resize(params.size(), 0.0);
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    double& m1 = moments.first[i];
    double& m2 = moments.second[i];
    m1 = hyper.beta1 * m1 + (1.0 - hyper.beta1) * g;
    m2 = hyper.beta2 * m2 + (1.0 - hyper.beta2) * g * g;
    params[i] -= lr * (m1 / bc1) / (std::sqrt(m2 / bc2) + hyper.eps);
  }
}

void apply_step(const OptimizerSpec& spec, double lr, NetParams& params, OptState& state,
                const Vec& grad_a, const NeuronMat& grad_W) {
  if (!grad_a.allFinite() || !grad_W.allFinite())
    throw RunError("non-finite gradient at step " + std::to_string(state.t + 1));
  std::span<double> pa(params.a.data(), static_cast<std::size_t>(params.a.size()));
  std::span<double> pW(params.W.data(), static_cast<std::size_t>(params.W.size()));
  std::span<const double> ga(grad_a.data(), pa.size());
  std::span<const double> gW(grad_W.data(), pW.size());
  ++state.t;
  if (const auto* adam = std::get_if<Adam>(&spec.method)) {
    adam_update(*adam, lr, state.t, state.moments_a, pa, ga);
    adam_update(*adam, lr, state.t, state.moments_W, pW, gW);
  } else {
    sgd_update(lr, pa, ga);
    sgd_update(lr, pW, gW);
  }
}

double step(const OptimizerSpec& spec, double lr, NetParams& params, OptState& state,
            const Dataset& data, std::span<const std::size_t> batch) {
  const Gradient g = grad(params, data, batch);
  apply_step(spec, lr, params, state, g.grad_a, g.grad_W);
  return g.batch_loss;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(NetParams init, const Dataset& data, OptimizerSpec opt, std::uint64_t seed)
    : params_(std::move(init)), initial_(params_), data_(&data), opt_(std::move(opt)),
      rng_(Rng::stream(seed, "minibatch")) {
  opt_.validate();
  params_.validate();
  if (data.n() == 0) throw ConfigError("trainer: empty dataset");
  if (data.d() != params_.d()) throw DimensionError("trainer: dataset and network dimensions differ");
  perm_.resize(data.n());
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  if (opt_.batch_size(data.n()) < data.n()) rng_.shuffle(std::span<std::size_t>(perm_));
}

double Trainer::current_lr() const { return opt_.lr_at(step_ - schedule_origin_); }

void Trainer::next_batch(std::vector<std::size_t>& out) {
  const std::size_t n = data_->n();
  const std::size_t B = opt_.batch_size(n);
  out.resize(B);
  if (B >= n) {
    std::iota(out.begin(), out.end(), std::size_t{0});
    return;
  }
  // Epoch-wise shuffling without replacement; a batch straddling two epochs
  // continues into the next permutation.
  for (std::size_t b = 0; b < B; ++b) {
    if (cursor_ == n) {
      rng_.shuffle(std::span<std::size_t>(perm_));
      cursor_ = 0;
    }
    out[b] = perm_[cursor_++];
  }
}

double Trainer::step() {
  next_batch(batch_);
  const double lr = current_lr();
  const double loss = kernels::batch_gradient(params_, data_->X, data_->y, batch_, ws_, grad_a_, grad_W_);
  apply_step(opt_, lr, params_, state_, grad_a_, grad_W_);
  ++step_;
  return loss;
}

double Trainer::full_loss() { return kernels::loss(params_, data_->X, data_->y, ws_); }

void Trainer::restart_with(OptimizerSpec opt) {
  opt.validate();
  if (!(opt.is_adam() && opt_.is_adam())) state_ = OptState{};
  const bool was_full = opt_.batch_size(data_->n()) >= data_->n();
  opt_ = std::move(opt);
  if (was_full && opt_.batch_size(data_->n()) < data_->n()) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(perm_));
    cursor_ = 0;
  }
  schedule_origin_ = step_;
}

Checkpoint Trainer::checkpoint(std::string fingerprint) const {
  Checkpoint ck{params_, initial_, opt_, state_, rng_, perm_, cursor_, step_, schedule_origin_,
                std::move(fingerprint), data_->n()};
  return ck;
}

Trainer Trainer::resume(const Checkpoint& ck, const Dataset& data) {
  if (data.d() != ck.params.d()) throw DimensionError("resume: dataset dimension differs from checkpoint");
  if (data.n() != ck.data_n || ck.perm.size() != data.n())
    throw DimensionError("resume: dataset size differs from checkpoint");
  Trainer t(ck.params, data, ck.optimizer, 0);
  t.initial_ = ck.initial;
  t.state_ = ck.opt_state;
  t.rng_ = ck.rng;
  t.perm_ = ck.perm;
  t.cursor_ = ck.cursor;
  t.step_ = ck.step;
  t.schedule_origin_ = ck.schedule_origin;
  return t;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

double param_norm(const NetParams& p) { return std::sqrt(p.a.squaredNorm() + p.W.squaredNorm()); }

double param_distance(const NetParams& p, const NetParams& q) {
  return std::sqrt((p.a - q.a).squaredNorm() + (p.W - q.W).squaredNorm());
}

}  // namespace

TrainResult train(Trainer& trainer, const StopSpec& stop, const ProbeSpec& probes) {
  stop.validate();
  TrainResult res;
  res.initial = trainer.initial_params();
  const std::size_t start = trainer.steps_done();
  res.initial_loss = trainer.full_loss();
  const double diverge_at = 1e6 * std::max(res.initial_loss, 1e-300);

  auto record = [&](double loss) {
    TrajectoryRow row{trainer.steps_done(), trainer.current_lr(), loss,
                      sign_flips(trainer.params(), trainer.initial_params()),
                      balancedness_gap(trainer.params(), trainer.initial_params())};
    res.max_sign_flips = std::max(res.max_sign_flips, row.sign_flips);
    res.trajectory.push_back(row);
    if (probes.on_probe)
      probes.on_probe(TrainSnapshot{row.step, trainer.params(), trainer.initial_params(), row.lr});
  };
  record(res.initial_loss);

  auto snapshots = probes.snapshot_steps;
  std::sort(snapshots.begin(), snapshots.end());
  auto next_snapshot = std::lower_bound(snapshots.begin(), snapshots.end(), start + 1);

  NetParams window_params = trainer.params();
  double window_loss = res.initial_loss;
  res.stop_reason = "max_steps";
  double last_loss = res.initial_loss;
  bool last_recorded = true;

  while (trainer.steps_done() - start < stop.max_steps) {
    trainer.step();
    const std::size_t done = trainer.steps_done();
    const std::size_t rel = done - start;
    last_recorded = false;

    const bool probe_row = probes.every > 0 && rel % probes.every == 0;
    const bool window_end = rel % stop.window_steps == 0;
    if (probe_row || window_end) {
      last_loss = trainer.full_loss();
      if (!std::isfinite(last_loss) || last_loss > diverge_at)
        throw RunError("training diverged at step " + std::to_string(done) + ": loss " +
                       std::to_string(last_loss) + " vs initial " + std::to_string(res.initial_loss));
    }
    if (probe_row) {
      record(last_loss);
      last_recorded = true;
    } else if (next_snapshot != snapshots.end() && *next_snapshot == done && probes.on_probe) {
      probes.on_probe(TrainSnapshot{done, trainer.params(), trainer.initial_params(), trainer.current_lr()});
    }
    while (next_snapshot != snapshots.end() && *next_snapshot <= done) ++next_snapshot;

    if (window_end) {
      const double loss_change = std::abs(last_loss - window_loss) / std::max(window_loss, 1e-300);
      const double param_change =
          param_distance(trainer.params(), window_params) / std::max(param_norm(window_params), 1e-300);
      if (loss_change < stop.loss_tol && param_change < stop.param_rel_change_tol) {
        res.converged = true;
        res.stop_reason = "converged";
        break;
      }
      window_loss = last_loss;
      window_params = trainer.params();
    }
  }

  if (!last_recorded) {
    last_loss = trainer.full_loss();
    record(last_loss);
  }
  res.params = trainer.params();
  res.steps = trainer.steps_done();
  res.final_loss = last_loss;
  return res;
}

TrainResult train(NetParams params, const Dataset& data, const OptimizerSpec& opt,
                  const StopSpec& stop, const ProbeSpec& probes, std::uint64_t seed) {
  Trainer trainer(std::move(params), data, opt, seed);
  return train(trainer, stop, probes);
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "step,lr,train_loss,sign_flips,balancedness_gap\n" << std::setprecision(17);
  for (const auto& r : rows)
    out << r.step << ',' << r.lr << ',' << r.train_loss << ',' << r.sign_flips << ',' << r.balancedness_gap << '\n';
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

namespace {

nlohmann::json moments_json(const AdamMoments& m) { return {{"first", m.first}, {"second", m.second}}; }

AdamMoments moments_from(const nlohmann::json& j) {
  return {j.at("first").get<std::vector<double>>(), j.at("second").get<std::vector<double>>()};
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json payload;
  payload["params"] = params_to_json(ck.params);
  payload["initial"] = params_to_json(ck.initial);
  payload["optimizer"] = to_json(ck.optimizer);
  payload["opt_state"] = {{"t", ck.opt_state.t},
                          {"moments_a", moments_json(ck.opt_state.moments_a)},
                          {"moments_W", moments_json(ck.opt_state.moments_W)}};
  payload["rng"] = {{"key", ck.rng.key()}, {"counter", ck.rng.counter()}};
  payload["perm"] = ck.perm;
  payload["cursor"] = ck.cursor;
  payload["step"] = ck.step;
  payload["schedule_origin"] = ck.schedule_origin;
  payload["fingerprint"] = ck.fingerprint;
  payload["data_n"] = ck.data_n;
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["sha256"] = sha256_hex(payload.dump());
  j["payload"] = std::move(payload);
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j, std::size_t expected_d) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw FormatError("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    const auto& payload = j.at("payload");
    if (sha256_hex(payload.dump()) != j.at("sha256").get<std::string>())
      throw FormatError("checkpoint: checksum mismatch (corrupted file)");
    Checkpoint ck;
    ck.params = params_from_json(payload.at("params"), expected_d);
    ck.initial = params_from_json(payload.at("initial"), expected_d);
    ck.optimizer = optimizer_from_json(payload.at("optimizer"));
    const auto& st = payload.at("opt_state");
    ck.opt_state.t = st.at("t").get<std::size_t>();
    ck.opt_state.moments_a = moments_from(st.at("moments_a"));
    ck.opt_state.moments_W = moments_from(st.at("moments_W"));
    ck.rng = Rng(payload.at("rng").at("key").get<std::uint64_t>(), payload.at("rng").at("counter").get<std::uint64_t>());
    ck.perm = payload.at("perm").get<std::vector<std::size_t>>();
    ck.cursor = payload.at("cursor").get<std::size_t>();
    ck.step = payload.at("step").get<std::size_t>();
    ck.schedule_origin = payload.at("schedule_origin").get<std::size_t>();
    ck.fingerprint = payload.at("fingerprint").get<std::string>();
    ck.data_n = payload.at("data_n").get<std::size_t>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(ck).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_d) {
  std::ifstream in(path);
  if (!in) throw FormatError("checkpoint not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j, expected_d);
}

}  // namespace alignlab
