#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "alignlab/data_model.hpp"
#include "alignlab/network.hpp"

namespace alignlab {

// ---------------------------------------------------------------------------
// Least squares

struct OlsResult {
  Vec beta;
  double gram_condition = 0.0;  // cond(X^T X)
  double residual_mse = 0.0;    // (1/n) |y - X beta|^2
  std::size_t n = 0;
  bool rank_deficient = false;  // beta is then the minimum-norm solution
};

/// Least squares through a complete orthogonal decomposition.
OlsResult ols(const RowMat& X, const Vec& y);
OlsResult ols(const Dataset& data);

struct SplitOls {
  OlsResult plus;
  OlsResult minus;
};

/// OLS on the points with x.beta_ref >= 0 and on the rest. Throws
/// UnsupportedError if either half is empty.
SplitOls ols_split(const Dataset& data, const Vec& beta_ref);

// ---------------------------------------------------------------------------
// Predictors

/// h(x) = (beta_plus . x)_+ - (-beta_minus . x)_+
struct LimitPredictor {
  Vec beta_plus;
  Vec beta_minus;
};

double limit_predict(const LimitPredictor& lp, const Eigen::Ref<const Vec>& x);
LimitPredictor limit_predictor(const Dataset& data, const Vec& beta_ref);

struct LinearPredictor {
  Vec beta;
};

/// The noiseless teacher.
struct TeacherPredictor {
  TeacherSpec teacher;
};

using Predictor = std::variant<NetParams, LimitPredictor, LinearPredictor, TeacherPredictor>;

/// Predictions for every row of X.
Vec predict_all(const Predictor& p, const RowMat& X);

// ---------------------------------------------------------------------------
// Test metrics

struct TestMetrics {
  double test_loss_half = 0.0;  // mean (1/2)(f(x) - y)^2
  double test_mse = 0.0;        // mean (f(x) - y)^2
  double excess_risk = 0.0;     // test_mse - sigma^2
  double mse_std_error = 0.0;   // Monte-Carlo standard error of test_mse
};

/// A fresh sample from the seed stream (seed, "test"); share one across
/// predictors so that comparisons are paired.
Dataset make_test_set(const InputSpec& input_spec, const TeacherSpec& teacher, std::size_t n_test,
                      std::uint64_t seed);

TestMetrics test_metrics(const Predictor& p, const Dataset& test_set);
TestMetrics test_metrics(const Predictor& p, const InputSpec& input_spec, const TeacherSpec& teacher,
                         std::size_t n_test, std::uint64_t seed);

/// sqrt(E (f - g)^2 / E g^2) over the rows of X.
double l2_relative_gap(const Predictor& f, const Predictor& g, const RowMat& X);

// ---------------------------------------------------------------------------
// Neuron directions

struct CosineHistogram {
  std::vector<double> edges;         // bins + 1 edges on [0, 1]
  std::vector<std::size_t> counts;   // per bin
  std::vector<double> abs_cosines;   // one per non-zero neuron
  std::size_t zero_norm = 0;         // excluded neurons

  [[nodiscard]] double fraction_above(double t) const;
  [[nodiscard]] std::size_t total() const;
};

/// |cos(w_i, reference)| over neurons with w_i != 0.
CosineHistogram cosine_histogram(const NetParams& params, const Vec& reference, std::size_t bins = 20);

inline constexpr double kDormantRatio = 1e-3;

/// Greedy leader clustering of w_i/|w_i|, heaviest neurons (|a_i| |w_i|) first;
/// neurons lighter than kDormantRatio times the heaviest are ignored.
std::size_t effective_width(const NetParams& params, double cos_threshold = 0.95);

// ---------------------------------------------------------------------------
// Interpolation

struct InterpolationCheck {
  bool interpolated = false;
  double train_mse = 0.0;
  double threshold = 0.0;
};

inline constexpr double kInterpolationTol = 1.0 / 3.0;
inline constexpr double kNoiselessInterpolationMse = 1e-4;

/// Plain train MSE <= tol * sigma^2, or <= 1e-4 for a noiseless teacher.
InterpolationCheck interpolation_check(const NetParams& params, const Dataset& data,
                                       double tol = kInterpolationTol);

}  // namespace alignlab
