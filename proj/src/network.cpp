#include "alignlab/network.hpp"

#include <cmath>
#include <numeric>

#include "alignlab/kernels.hpp"

namespace alignlab {

namespace {
constexpr int kParamsRecordVersion = 1;
}

std::string to_string(Activation act) { return act == Activation::ReLU ? "relu" : "gelu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu" || s == "ReLU") return Activation::ReLU;
  if (s == "gelu" || s == "GeLU") return Activation::GeLU;
  throw ConfigError("unknown activation '" + s + "'");
}

void NetParams::validate() const {
  if (a.size() < 1) throw ConfigError("network needs m >= 1");
  if (W.rows() != a.size()) throw DimensionError("W rows differ from m");
  if (!a.allFinite() || !W.allFinite()) throw RunError("non-finite network parameters");
}

NetParams NetParams::zeros(std::size_t m, std::size_t d, Activation act) {
  return {Vec::Zero(static_cast<Eigen::Index>(m)),
          NeuronMat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d)), act};
}

// ---------------------------------------------------------------------------
// Initialization

void InitSpec::validate() const {
  if (m < 1 || d < 1) throw ConfigError("init: m and d must be >= 1");
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, GaussianIID>) {
          if (!(s.base_variance > 0.0)) throw ConfigError("init: base_variance must be > 0");
        } else {
          if (!(s.lambda > 0.0)) throw ConfigError("init: lambda must be > 0");
        }
      },
      scheme);
}

double InitSpec::gaussian_variance() const {
  const auto* g = std::get_if<GaussianIID>(&scheme);
  if (g == nullptr) throw ConfigError("init: not a Gaussian scheme");
  const double mm = static_cast<double>(m);
  return g->variance_rule == VarianceRule::OverM ? g->base_variance / mm
                                                 : g->base_variance / std::sqrt(mm);
}

namespace {

/// Uniform point in the unit ball of R^d.
Vec uniform_ball(Rng& rng, std::size_t d) {
  const auto dir = rng.unit_vector(d);
  const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  Vec v(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) v[static_cast<Eigen::Index>(j)] = radius * dir[j];
  return v;
}

}  // namespace

NetParams init_params(const InitSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetParams p = NetParams::zeros(spec.m, spec.d, spec.activation);
  Rng rng = Rng::stream(seed, "init");
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.m));
  const auto m = static_cast<Eigen::Index>(spec.m);

  if (const auto* dom = std::get_if<Dominated>(&spec.scheme)) {
    for (Eigen::Index i = 0; i < m; ++i) {
      p.W.row(i) = 0.5 * dom->lambda * scale * uniform_ball(rng, spec.d).transpose();
      p.a[i] = (rng.coin() ? 1.0 : -1.0) * dom->lambda * scale;
    }
  } else if (const auto* gen = std::get_if<GenericDominated>(&spec.scheme)) {
    Vec at(m);
    NeuronMat wt(m, static_cast<Eigen::Index>(spec.d));
    for (Eigen::Index i = 0; i < m; ++i) {
      const double sign = rng.coin() ? 1.0 : -1.0;
      if (gen->base_law == BaseLaw::SignUnitBall) {
        at[i] = sign;
        wt.row(i) = uniform_ball(rng, spec.d).transpose();
      } else {
        const double mag = 1.0 - rng.uniform();  // (0, 1]
        at[i] = sign * mag;
        wt.row(i) = mag * uniform_ball(rng, spec.d).transpose();
      }
    }
    // Domination property, checked on the drawn sample.
    for (Eigen::Index i = 0; i < m; ++i)
      if (std::abs(at[i]) < wt.row(i).norm()) throw RunError("generic dominated init: |a~| < |w~|");
    if (at.squaredNorm() / static_cast<double>(m) > 1.0)
      throw RunError("generic dominated init: mean a~^2 > 1");
    p.a = gen->lambda * scale * at;
    p.W = gen->lambda * scale * wt;
  } else {
    const double sd = std::sqrt(spec.gaussian_variance());
    for (Eigen::Index i = 0; i < m; ++i) {
      p.a[i] = sd * rng.normal();
      for (Eigen::Index j = 0; j < p.W.cols(); ++j) p.W(i, j) = sd * rng.normal();
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Evaluation

double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440); }

double activate(Activation act, double z) {
  if (act == Activation::ReLU) return z > 0.0 ? z : 0.0;
  return z * normal_cdf(z);
}

double activate_derivative(Activation act, double z) {
  if (act == Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
  return normal_cdf(z) + z * std::exp(-0.5 * z * z) * 0.39894228040143267794;
}

double forward(const NetParams& params, const Eigen::Ref<const Vec>& x) {
  if (static_cast<std::size_t>(x.size()) != params.d())
    throw DimensionError("forward: input has dimension " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(params.d()));
  double h = 0.0;
  for (Eigen::Index i = 0; i < params.a.size(); ++i)
    h += params.a[i] * activate(params.activation, params.W.row(i).dot(x));
  return h;
}

double train_loss(const NetParams& params, const Dataset& data) {
  if (data.n() == 0) throw ConfigError("train_loss: empty dataset");
  if (data.d() != params.d()) throw DimensionError("train_loss: dimension mismatch");
  kernels::Workspace ws;
  return kernels::loss(params, data.X, data.y, ws);
}

Gradient grad(const NetParams& params, const Dataset& data, std::span<const std::size_t> batch) {
  if (batch.empty()) throw ConfigError("grad: empty batch");
  if (data.d() != params.d()) throw DimensionError("grad: dimension mismatch");
  for (auto k : batch)
    if (k >= data.n()) throw DimensionError("grad: batch index out of range");
  Gradient g;
  kernels::Workspace ws;
  g.batch_loss = kernels::batch_gradient(params, data.X, data.y, batch, ws, g.grad_a, g.grad_W);
  return g;
}

Gradient full_grad(const NetParams& params, const Dataset& data) {
  std::vector<std::size_t> all(data.n());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return grad(params, data, all);
}

// ---------------------------------------------------------------------------
// Activation patterns

bool ActivationPattern::strict() const {
  return std::none_of(signs.begin(), signs.end(), [](std::int8_t s) { return s == 0; });
}

ActivationPattern ActivationPattern::operator-() const {
  ActivationPattern out{signs};
  for (auto& s : out.signs) s = static_cast<std::int8_t>(-s);
  return out;
}

std::string ActivationPattern::str() const {
  std::string s;
  s.reserve(signs.size());
  for (auto v : signs) s.push_back(v > 0 ? '+' : (v < 0 ? '-' : '0'));
  return s;
}

ActivationPattern activation_pattern(const Vec& w, const RowMat& X, double zeta) {
  if (w.size() != X.cols()) throw DimensionError("activation_pattern: dimension mismatch");
  ActivationPattern p;
  p.signs.resize(static_cast<std::size_t>(X.rows()));
  const double wn = w.norm();
  for (Eigen::Index k = 0; k < X.rows(); ++k) {
    const double z = X.row(k).dot(w);
    const double band = zeta * wn * X.row(k).norm();
    p.signs[static_cast<std::size_t>(k)] = std::abs(z) <= band ? 0 : (z > 0.0 ? 1 : -1);
  }
  return p;
}

ActivationPattern activation_pattern(const Vec& w, const Dataset& data, double zeta) {
  return activation_pattern(w, data.X, zeta);
}

double balancedness_gap(const NetParams& now, const NetParams& start) {
  if (now.m() != start.m() || now.d() != start.d())
    throw DimensionError("balancedness_gap: shape mismatch");
  const Vec b_now = now.a.array().square() - now.W.rowwise().squaredNorm().array();
  const Vec b_start = start.a.array().square() - start.W.rowwise().squaredNorm().array();
  return (b_now - b_start).cwiseAbs().maxCoeff();
}

std::size_t sign_flips(const NetParams& now, const NetParams& start) {
  if (now.m() != start.m()) throw DimensionError("sign_flips: shape mismatch");
  std::size_t flips = 0;
  for (Eigen::Index i = 0; i < now.a.size(); ++i)
    if ((now.a[i] > 0.0) != (start.a[i] > 0.0) || (now.a[i] < 0.0) != (start.a[i] < 0.0)) ++flips;
  return flips;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const InitSpec& spec) {
  nlohmann::json j;
  j["m"] = spec.m;
  j["d"] = spec.d;
  j["activation"] = to_string(spec.activation);
  if (const auto* dom = std::get_if<Dominated>(&spec.scheme)) {
    j["kind"] = "dominated";
    j["lambda"] = dom->lambda;
  } else if (const auto* gen = std::get_if<GenericDominated>(&spec.scheme)) {
    j["kind"] = "generic_dominated";
    j["lambda"] = gen->lambda;
    j["base_law"] = gen->base_law == BaseLaw::SignUnitBall ? "sign_unit_ball" : "uniform_scaled_ball";
  } else {
    const auto& g = std::get<GaussianIID>(spec.scheme);
    j["kind"] = "gaussian";
    j["variance_rule"] = g.variance_rule == VarianceRule::OverM ? "over_m" : "over_sqrt_m";
    j["base_variance"] = g.base_variance;
  }
  return j;
}

InitSpec init_spec_from_json(const nlohmann::json& j) {
  try {
    InitSpec spec;
    spec.m = j.at("m").get<std::size_t>();
    spec.d = j.at("d").get<std::size_t>();
    spec.activation = activation_from_string(j.value("activation", std::string("relu")));
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "dominated") {
      spec.scheme = Dominated{j.at("lambda").get<double>()};
    } else if (kind == "generic_dominated") {
      const auto law = j.value("base_law", std::string("sign_unit_ball"));
      if (law != "sign_unit_ball" && law != "uniform_scaled_ball")
        throw ConfigError("init: unknown base_law '" + law + "'");
      spec.scheme = GenericDominated{j.at("lambda").get<double>(),
                                     law == "sign_unit_ball" ? BaseLaw::SignUnitBall : BaseLaw::UniformScaledBall};
    } else if (kind == "gaussian") {
      const auto rule = j.value("variance_rule", std::string("over_m"));
      if (rule != "over_m" && rule != "over_sqrt_m") throw ConfigError("init: unknown variance_rule '" + rule + "'");
      spec.scheme = GaussianIID{rule == "over_m" ? VarianceRule::OverM : VarianceRule::OverSqrtM,
                                j.value("base_variance", 1e-5)};
    } else {
      throw ConfigError("init: unknown kind '" + kind + "'");
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("init spec: ") + e.what());
  }
}

nlohmann::json params_to_json(const NetParams& params, const InitSpec* init, std::uint64_t seed) {
  nlohmann::json j;
  j["version"] = kParamsRecordVersion;
  j["activation"] = to_string(params.activation);
  j["m"] = params.m();
  j["d"] = params.d();
  j["a"] = std::vector<double>(params.a.data(), params.a.data() + params.a.size());
  auto& W = j["W"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < params.W.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(params.W.cols()));
    for (Eigen::Index c = 0; c < params.W.cols(); ++c) row[static_cast<std::size_t>(c)] = params.W(i, c);
    W.push_back(std::move(row));
  }
  j["init_spec"] = init != nullptr ? to_json(*init) : nlohmann::json(nullptr);
  j["seed"] = seed;
  return j;
}

NetParams params_from_json(const nlohmann::json& j, std::size_t expected_d) {
  try {
    if (j.at("version").get<int>() != kParamsRecordVersion)
      throw FormatError("params record: unsupported version " + j.at("version").dump());
    const auto m = j.at("m").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    if (expected_d != 0 && d != expected_d)
      throw DimensionError("params record has d=" + std::to_string(d) + ", expected " + std::to_string(expected_d));
    NetParams p = NetParams::zeros(m, d, activation_from_string(j.at("activation").get<std::string>()));
    const auto a = j.at("a").get<std::vector<double>>();
    if (a.size() != m) throw FormatError("params record: a has wrong length");
    for (std::size_t i = 0; i < m; ++i) p.a[static_cast<Eigen::Index>(i)] = a[i];
    const auto& W = j.at("W");
    if (W.size() != m) throw FormatError("params record: W has wrong row count");
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = W[i].get<std::vector<double>>();
      if (row.size() != d) throw FormatError("params record: ragged W");
      for (std::size_t c = 0; c < d; ++c)
        p.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("params record: ") + e.what());
  }
}

}  // namespace alignlab
