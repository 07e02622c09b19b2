#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "alignlab/kernels.hpp"
#include "alignlab/network.hpp"
#include "alignlab/rng.hpp"

namespace alignlab {

// ---------------------------------------------------------------------------
// Specs

struct GD {
  double lr = 1e-2;
};

struct SGD {
  double lr = 1e-2;
  std::size_t batch_size = 32;
};

/// Defaults are the usual library defaults. batch_size 0 means full batch.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
};

struct ConstantSchedule {};

/// lr = lr0 * factor^floor(steps_since_origin / every_steps)
struct GeometricSchedule {
  double factor = 0.85;
  std::size_t every_steps = 50000;
};

struct OptimizerSpec {
  std::variant<GD, SGD, Adam> method;
  std::variant<ConstantSchedule, GeometricSchedule> schedule;

  [[nodiscard]] double base_lr() const;
  void set_base_lr(double lr);
  /// Batch size for a dataset of n points (GD and batch_size 0 give n).
  [[nodiscard]] std::size_t batch_size(std::size_t n) const;
  [[nodiscard]] double lr_at(std::size_t steps_since_origin) const;
  [[nodiscard]] bool is_adam() const { return std::holds_alternative<Adam>(method); }
  void validate() const;
};

/// Stops at max_steps, or when over one window both the relative train-loss
/// change and the relative parameter change fall below their tolerances.
struct StopSpec {
  std::size_t max_steps = 800000;
  double loss_tol = 1e-8;
  double param_rel_change_tol = 1e-7;
  std::size_t window_steps = 10000;

  void validate() const;
};

nlohmann::json to_json(const OptimizerSpec& spec);
OptimizerSpec optimizer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StopSpec& spec);
StopSpec stop_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Update rules on flat arrays

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

void sgd_update(double lr, std::span<double> params, std::span<const double> grad);
/// Bias-corrected Adam update; `t` is the 1-based step count.
void adam_update(const Adam& hyper, double lr, std::size_t t, AdamMoments& moments,
                 std::span<double> params, std::span<const double> grad);

struct OptState {
  AdamMoments moments_a;
  AdamMoments moments_W;
  std::size_t t = 0;
};

/// One update theta' = theta - lr * grad (or the Adam equivalent).
/// Throws RunError if the gradient is non-finite.
void apply_step(const OptimizerSpec& spec, double lr, NetParams& params, OptState& state,
                const Vec& grad_a, const NeuronMat& grad_W);

/// One optimizer step on an explicit batch, returning the batch loss.
double step(const OptimizerSpec& spec, double lr, NetParams& params, OptState& state,
            const Dataset& data, std::span<const std::size_t> batch);

// ---------------------------------------------------------------------------
// Training

struct TrajectoryRow {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::size_t sign_flips = 0;
  double balancedness_gap = 0.0;
};

struct TrainSnapshot {
  std::size_t step;
  const NetParams& params;
  const NetParams& initial;
  double lr;
};

struct ProbeSpec {
  /// Trajectory row every `every` steps (0 disables periodic rows).
  std::size_t every = 1000;
  /// Called with a read-only snapshot at each probe row and at snapshot_steps.
  std::function<void(const TrainSnapshot&)> on_probe;
  std::vector<std::size_t> snapshot_steps;
};

struct Checkpoint;

/// Owns one training run's mutable state. A run is single-threaded at this
/// level; the kernels may parallelise inside a step.
class Trainer {
 public:
  Trainer(NetParams init, const Dataset& data, OptimizerSpec opt, std::uint64_t seed);

  /// One step on the next minibatch; returns the batch loss.
  double step();
  [[nodiscard]] double full_loss();
  [[nodiscard]] double current_lr() const;

  [[nodiscard]] const NetParams& params() const { return params_; }
  [[nodiscard]] const NetParams& initial_params() const { return initial_; }
  [[nodiscard]] const OptState& opt_state() const { return state_; }
  [[nodiscard]] const OptimizerSpec& optimizer() const { return opt_; }
  [[nodiscard]] std::size_t steps_done() const { return step_; }
  [[nodiscard]] const Dataset& data() const { return *data_; }

  /// Swap the optimizer (e.g. a decaying schedule for a warm restart). The
  /// schedule restarts counting from the current step. Adam state is kept
  /// only if both old and new optimizers are Adam.
  void restart_with(OptimizerSpec opt);

  [[nodiscard]] Checkpoint checkpoint(std::string fingerprint = {}) const;
  static Trainer resume(const Checkpoint& ck, const Dataset& data);

 private:
  void next_batch(std::vector<std::size_t>& out);

  NetParams params_;
  NetParams initial_;
  const Dataset* data_;
  OptimizerSpec opt_;
  OptState state_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
  std::size_t schedule_origin_ = 0;
  std::vector<std::size_t> batch_;
  Vec grad_a_;
  NeuronMat grad_W_;
  kernels::Workspace ws_;
};

struct TrainResult {
  NetParams params;
  NetParams initial;
  std::vector<TrajectoryRow> trajectory;
  std::size_t steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool converged = false;
  std::string stop_reason;
  std::size_t max_sign_flips = 0;
};

/// Runs `trainer` until the stop criteria hold. Divergence (loss above 1e6
/// times the initial loss) raises RunError.
TrainResult train(Trainer& trainer, const StopSpec& stop, const ProbeSpec& probes);
TrainResult train(NetParams params, const Dataset& data, const OptimizerSpec& opt,
                  const StopSpec& stop, const ProbeSpec& probes, std::uint64_t seed);

/// step,lr,train_loss,sign_flips,balancedness_gap
void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  NetParams params;
  NetParams initial;
  OptimizerSpec optimizer;
  OptState opt_state;
  Rng rng;
  std::vector<std::size_t> perm;
  std::size_t cursor = 0;
  std::size_t step = 0;
  std::size_t schedule_origin = 0;
  std::string fingerprint;
  std::size_t data_n = 0;
};

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_to_json(const Checkpoint& ck);
/// Throws FormatError on version or checksum mismatch; DimensionError when
/// expected_d is nonzero and differs from the stored network.
Checkpoint checkpoint_from_json(const nlohmann::json& j, std::size_t expected_d = 0);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_d = 0);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace alignlab
