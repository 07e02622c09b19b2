#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "alignlab/data_model.hpp"
#include "alignlab/types.hpp"

namespace alignlab {

enum class Activation { ReLU, GeLU };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& s);

/// Two-layer network without biases: h(x) = sum_i a_i sigma(w_i . x).
/// W is column-major m x d, so row i is neuron w_i.
struct NetParams {
  Vec a;
  NeuronMat W;
  Activation activation = Activation::ReLU;

  [[nodiscard]] std::size_t m() const { return static_cast<std::size_t>(a.size()); }
  [[nodiscard]] std::size_t d() const { return static_cast<std::size_t>(W.cols()); }
  [[nodiscard]] Vec neuron(std::size_t i) const { return W.row(static_cast<Eigen::Index>(i)).transpose(); }
  void validate() const;

  static NetParams zeros(std::size_t m, std::size_t d, Activation act = Activation::ReLU);
};

// ---------------------------------------------------------------------------
// Initialization

struct Dominated {
  double lambda = 1e-3;
};

/// Base law for (a~, w~) in the generic dominated scheme.
enum class BaseLaw {
  SignUnitBall,       // a~ = +-1, w~ ~ U(B(0,1))
  UniformScaledBall,  // |a~| ~ U(0,1], w~ ~ |a~| U(B(0,1))
};

struct GenericDominated {
  double lambda = 1e-3;
  BaseLaw base_law = BaseLaw::SignUnitBall;
};

enum class VarianceRule { OverM, OverSqrtM };

struct GaussianIID {
  VarianceRule variance_rule = VarianceRule::OverM;
  double base_variance = 1e-5;
};

struct InitSpec {
  std::variant<Dominated, GenericDominated, GaussianIID> scheme;
  std::size_t m = 1;
  std::size_t d = 1;
  Activation activation = Activation::ReLU;

  void validate() const;
  /// Per-entry variance for GaussianIID; throws otherwise.
  [[nodiscard]] double gaussian_variance() const;
};

NetParams init_params(const InitSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation

double activate(Activation act, double z);
double activate_derivative(Activation act, double z);
/// Standard normal CDF.
double normal_cdf(double z);

double forward(const NetParams& params, const Eigen::Ref<const Vec>& x);
/// (1/2n) sum_k (h(x_k) - y_k)^2
double train_loss(const NetParams& params, const Dataset& data);

struct Gradient {
  Vec grad_a;
  NeuronMat grad_W;
  double batch_loss = 0.0;
};

/// Exact gradient of the batch loss (1/2|B|) sum_{k in B} (h(x_k) - y_k)^2.
/// The ReLU derivative at 0 is taken as 0.
Gradient grad(const NetParams& params, const Dataset& data, std::span<const std::size_t> batch);
Gradient full_grad(const NetParams& params, const Dataset& data);

// ---------------------------------------------------------------------------
// Activation patterns

struct ActivationPattern {
  std::vector<std::int8_t> signs;

  [[nodiscard]] std::size_t size() const { return signs.size(); }
  [[nodiscard]] bool strict() const;
  [[nodiscard]] ActivationPattern operator-() const;
  bool operator==(const ActivationPattern&) const = default;
  auto operator<=>(const ActivationPattern&) const = default;
  [[nodiscard]] std::string str() const;
};

inline constexpr double kDefaultZeroBand = 1e-12;

/// sign(w . x_k), with |w . x_k| <= zeta |w| |x_k| reported as 0.
ActivationPattern activation_pattern(const Vec& w, const RowMat& X, double zeta = kDefaultZeroBand);
ActivationPattern activation_pattern(const Vec& w, const Dataset& data, double zeta = kDefaultZeroBand);

/// max_i |(a_i(t)^2 - |w_i(t)|^2) - (a_i(0)^2 - |w_i(0)|^2)|
double balancedness_gap(const NetParams& now, const NetParams& start);
/// Number of neurons whose output weight sign differs between the two states.
std::size_t sign_flips(const NetParams& now, const NetParams& start);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const InitSpec& spec);
InitSpec init_spec_from_json(const nlohmann::json& j);

/// {version, activation, m, d, a[], W[][], init_spec, seed}
nlohmann::json params_to_json(const NetParams& params, const InitSpec* init = nullptr,
                              std::uint64_t seed = 0);
/// Throws FormatError on version mismatch; DimensionError if expected_d is given and differs.
NetParams params_from_json(const nlohmann::json& j, std::size_t expected_d = 0);

}  // namespace alignlab
