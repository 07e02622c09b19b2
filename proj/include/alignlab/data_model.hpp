#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "json.hpp"

#include "alignlab/rng.hpp"
#include "alignlab/types.hpp"

namespace alignlab {

// ---------------------------------------------------------------------------
// Teachers
// ---------------------------------------------------------------------------

struct LinearTeacher {
  Vec beta_star;
};

/// f(x) = scale * sum_i (beta_i . x)_+
struct KReluTeacher {
  std::vector<Vec> betas;
  double scale = 1.0;
};

struct TeacherSpec {
  std::variant<LinearTeacher, KReluTeacher> model;
  double noise_std = 0.0;

  static TeacherSpec linear(Vec beta_star, double noise_std);
  static TeacherSpec k_relu(std::vector<Vec> betas, double scale, double noise_std);
  /// The 5-neuron teacher: betas i.i.d. standard Gaussian drawn from `seed`, scale 1/5.
  static TeacherSpec random_k_relu(std::size_t k, std::size_t d, std::uint64_t seed,
                                   double noise_std);

  [[nodiscard]] std::size_t dim() const;
  [[nodiscard]] bool is_linear() const { return std::holds_alternative<LinearTeacher>(model); }
  [[nodiscard]] const Vec& beta_star() const;  // throws UnsupportedError for KRelu
  [[nodiscard]] double noise_variance() const { return noise_std * noise_std; }
  /// Noiseless teacher output f*(x).
  [[nodiscard]] double mean(const Eigen::Ref<const Vec>& x) const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Input distributions
// ---------------------------------------------------------------------------

struct StandardGaussian {
  std::size_t d = 1;
};

/// x = s * beta/|beta| + sqrt(d-1) * v, v uniform on the unit sphere of beta's
/// orthogonal complement, s uniform on [-1-eps,-1+eps] U [1-eps,1+eps].
struct Assumption1 {
  std::size_t d = 2;
  Vec beta_star;
  double epsilon = 0.1;
};

/// x_k = e_k for k < n; the labels are the noiseless targets.
struct OrthogonalBasis {
  std::size_t d = 1;
  Vec labels;
};

struct InputSpec {
  std::variant<StandardGaussian, Assumption1, OrthogonalBasis> dist;

  static InputSpec gaussian(std::size_t d) { return {StandardGaussian{d}}; }
  static InputSpec assumption1(Vec beta_star, double epsilon);
  static InputSpec orthogonal(std::size_t d, Vec labels);

  [[nodiscard]] std::size_t dim() const;
  /// Symmetric and continuous (population D has a closed form).
  [[nodiscard]] bool symmetric_continuous() const;
  /// E[x x^T] in closed form; throws UnsupportedError for OrthogonalBasis.
  [[nodiscard]] Eigen::MatrixXd covariance() const;
  void validate() const;
  /// Draws one input row.
  void sample(Rng& rng, Eigen::Ref<Vec> out) const;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  RowMat X;
  Vec y;
  TeacherSpec teacher;
  InputSpec input_spec;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  [[nodiscard]] std::size_t d() const { return static_cast<std::size_t>(X.cols()); }
  /// Dataset built from explicit arrays (teacher/spec are informational only).
  static Dataset from_arrays(RowMat X, Vec y);
};

struct SignSplit {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
};

Dataset gen_dataset(const InputSpec& input_spec, const TeacherSpec& teacher, std::size_t n,
                    std::uint64_t seed);

/// Ties (x.beta == 0) go to `pos`.
SignSplit split_signs(const Dataset& data, const Vec& beta);

/// D(w) = E[1{w.x > 0} y x] = Sigma beta* / 2 for symmetric continuous inputs.
Vec population_D(const InputSpec& input_spec, const TeacherSpec& teacher, const Vec& w);

/// Rows of `data` selected by `idx`.
RowMat select_rows(const RowMat& X, const std::vector<std::size_t>& idx);
Vec select_entries(const Vec& y, const std::vector<std::size_t>& idx);

// CSV with header x1,...,xd,y
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

// Versioned JSON record with spec, teacher and seed.
nlohmann::json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TeacherSpec& t);
TeacherSpec teacher_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InputSpec& s);
InputSpec input_spec_from_json(const nlohmann::json& j);

}  // namespace alignlab
