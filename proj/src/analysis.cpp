#include "alignlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alignlab/kernels.hpp"
#include "alignlab/rng.hpp"

namespace alignlab {

OlsResult ols(const RowMat& X, const Vec& y) {
  if (X.rows() == 0 || X.cols() == 0) throw DimensionError("ols: empty design");
  if (X.rows() != y.size()) throw DimensionError("ols: X and y lengths differ");
  const Eigen::MatrixXd Xc = X;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Xc);
  OlsResult r;
  r.n = static_cast<std::size_t>(X.rows());
  r.beta = cod.solve(y);
  r.rank_deficient = cod.rank() < X.cols();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Xc.transpose() * Xc, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  r.gram_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  r.residual_mse = (y - Xc * r.beta).squaredNorm() / static_cast<double>(r.n);
  return r;
}

OlsResult ols(const Dataset& data) { return ols(data.X, data.y); }

SplitOls ols_split(const Dataset& data, const Vec& beta_ref) {
  const SignSplit s = split_signs(data, beta_ref);
  if (s.pos.empty() || s.neg.empty()) {
    throw UnsupportedError("ols_split: one half of the sign split is empty");
  }
  return {ols(select_rows(data.X, s.pos), select_entries(data.y, s.pos)),
          ols(select_rows(data.X, s.neg), select_entries(data.y, s.neg))};
}

double limit_predict(const LimitPredictor& lp, const Eigen::Ref<const Vec>& x) {
  if (x.size() != lp.beta_plus.size() || x.size() != lp.beta_minus.size()) {
    throw DimensionError("limit_predict: dimension mismatch");
  }
  return std::max(0.0, lp.beta_plus.dot(x)) - std::max(0.0, -lp.beta_minus.dot(x));
}

LimitPredictor limit_predictor(const Dataset& data, const Vec& beta_ref) {
  SplitOls s = ols_split(data, beta_ref);
  return {std::move(s.plus.beta), std::move(s.minus.beta)};
}

Vec predict_all(const Predictor& p, const RowMat& X) {
  const Eigen::Index n = X.rows();
  Vec out(n);
  if (const auto* net = std::get_if<NetParams>(&p)) {
    kernels::Workspace ws;
    kernels::predict(*net, X, ws, out);
  } else if (const auto* lp = std::get_if<LimitPredictor>(&p)) {
    for (Eigen::Index k = 0; k < n; ++k) out[k] = limit_predict(*lp, X.row(k).transpose());
  } else if (const auto* lin = std::get_if<LinearPredictor>(&p)) {
    if (lin->beta.size() != X.cols()) throw DimensionError("predict_all: coefficient dimension mismatch");
    out = X * lin->beta;
  } else {
    const auto& t = std::get<TeacherPredictor>(p).teacher;
    for (Eigen::Index k = 0; k < n; ++k) out[k] = t.mean(X.row(k).transpose());
  }
  return out;
}

Dataset make_test_set(const InputSpec& input_spec, const TeacherSpec& teacher, std::size_t n_test,
                      std::uint64_t seed) {
  if (n_test == 0) throw ConfigError("n_test must be positive");
  return gen_dataset(input_spec, teacher, n_test, Rng::stream(seed, "test").next_u64());
}

TestMetrics test_metrics(const Predictor& p, const Dataset& test_set) {
  const Vec r = predict_all(p, test_set.X) - test_set.y;
  const Eigen::ArrayXd sq = r.array().square();
  const double n = static_cast<double>(test_set.n());
  TestMetrics m;
  m.test_mse = kernels::pairwise_sum({sq.data(), static_cast<std::size_t>(sq.size())}) / n;
  m.test_loss_half = 0.5 * m.test_mse;
  m.excess_risk = m.test_mse - test_set.teacher.noise_variance();
  if (n > 1) {
    const double var = (sq - m.test_mse).square().sum() / (n - 1.0);
    m.mse_std_error = std::sqrt(var / n);
  }
  return m;
}

TestMetrics test_metrics(const Predictor& p, const InputSpec& input_spec, const TeacherSpec& teacher,
                         std::size_t n_test, std::uint64_t seed) {
  return test_metrics(p, make_test_set(input_spec, teacher, n_test, seed));
}

double l2_relative_gap(const Predictor& f, const Predictor& g, const RowMat& X) {
  const Vec fv = predict_all(f, X);
  const Vec gv = predict_all(g, X);
  const double denom = gv.squaredNorm();
  if (denom == 0.0) return (fv - gv).squaredNorm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt((fv - gv).squaredNorm() / denom);
}

// ---------------------------------------------------------------------------

double CosineHistogram::fraction_above(double t) const {
  if (abs_cosines.empty()) return 0.0;
  const auto c = std::count_if(abs_cosines.begin(), abs_cosines.end(), [t](double v) { return v > t; });
  return static_cast<double>(c) / static_cast<double>(abs_cosines.size());
}

std::size_t CosineHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

CosineHistogram cosine_histogram(const NetParams& params, const Vec& reference, std::size_t bins) {
  if (bins == 0) throw ConfigError("cosine_histogram: bins must be positive");
  if (static_cast<std::size_t>(reference.size()) != params.d()) {
    throw DimensionError("cosine_histogram: reference dimension mismatch");
  }
  const double rn = reference.norm();
  if (rn == 0.0) throw ConfigError("cosine_histogram: zero reference");
  CosineHistogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i < params.m(); ++i) {
    const Vec w = params.neuron(i);
    const double wn = w.norm();
    if (wn == 0.0) {
      ++h.zero_norm;
      continue;
    }
    const double c = std::min(1.0, std::abs(w.dot(reference)) / (wn * rn));
    h.abs_cosines.push_back(c);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    ++h.counts[b];
  }
  return h;
}

std::size_t effective_width(const NetParams& params, double cos_threshold) {
  if (!(cos_threshold > 0.0 && cos_threshold < 1.0)) {
    throw ConfigError("effective_width: threshold must lie in (0, 1)");
  }
  const std::size_t m = params.m();
  std::vector<double> weight(m);
  double heaviest = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    weight[i] = std::abs(params.a[static_cast<Eigen::Index>(i)]) * params.neuron(i).norm();
    heaviest = std::max(heaviest, weight[i]);
  }
  if (heaviest == 0.0) return 0;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return weight[i] > weight[j]; });
  std::vector<Vec> leaders;
  for (std::size_t i : order) {
    if (weight[i] < kDormantRatio * heaviest) break;
    const Vec u = params.neuron(i).normalized();
    const bool joined = std::any_of(leaders.begin(), leaders.end(),
                                    [&](const Vec& l) { return l.dot(u) >= cos_threshold; });
    if (!joined) leaders.push_back(u);
  }
  return leaders.size();
}

InterpolationCheck interpolation_check(const NetParams& params, const Dataset& data, double tol) {
  InterpolationCheck c;
  c.train_mse = 2.0 * train_loss(params, data);
  const double s2 = data.teacher.noise_variance();
  c.threshold = s2 > 0.0 ? tol * s2 : kNoiselessInterpolationMse;
  c.interpolated = c.train_mse <= c.threshold;
  return c;
}

}  // namespace alignlab
