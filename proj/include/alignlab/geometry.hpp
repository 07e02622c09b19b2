#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "alignlab/data_model.hpp"
#include "alignlab/network.hpp"

namespace alignlab {

// ---------------------------------------------------------------------------
// Gradient field at a direction

/// (1/n) sum_k 1{x_k . w > 0} (y_k - h(x_k)) x_k with h the given network.
Vec D_n(const Vec& w, const NetParams& params, const Dataset& data);
/// Same with h = 0.
Vec D_n(const Vec& w, const Dataset& data);
/// w . D_n(w, 0)
double G_n(const Vec& w, const Dataset& data);

// ---------------------------------------------------------------------------
// Cells of the hyperplane arrangement {w : x_k . w = 0}

struct PatternCell {
  ActivationPattern pattern;  // strict
  Vec representative;         // unit, inside the cell
};

enum class CellMode { Exact, Sampled };

struct CellEnumeration {
  std::vector<PatternCell> cells;  // sorted by pattern
  CellMode mode_used = CellMode::Exact;
  /// Non-empty when Exact fell back to Sampled on degenerate inputs.
  std::string warning;
};

inline constexpr std::size_t kExactMaxDim = 4;
inline constexpr std::size_t kExactMaxPoints = 64;

/// Exact mode requires d <= 4 and n <= 64 (UnsupportedError otherwise).
/// Degenerate inputs in Exact mode fall back to sampling `budget` directions.
CellEnumeration enumerate_cells(const Dataset& data, CellMode mode, std::size_t budget = 20000,
                                std::uint64_t seed = 0);

/// 2 sum_{k<d} C(n-1, k)
double max_cell_count(std::size_t n, std::size_t d);

// ---------------------------------------------------------------------------
// Extremal vectors

enum class Verdict { Extremal, NotExtremal, BoundaryAmbiguous };
std::string to_string(Verdict v);

struct ExtremalCandidate {
  Vec w;
  Vec D;
  /// Activation coefficients used for D: 1 on strictly active points, the
  /// chosen subgradient value on boundary points, 0 otherwise.
  Vec eta;
  Verdict verdict = Verdict::NotExtremal;
  double residual = 0.0;
  std::size_t iterations = 0;
};

inline constexpr double kCertifyTol = 1e-9;
inline constexpr std::size_t kMaxBoundaryPoints = 12;

/// Checks whether some vertex D of the subdifferential set at w is zero or
/// has pattern +-A_n(w). Pattern entries of D within `tol` (relative) match
/// either sign. `residual` is the largest relative sign violation of the best vertex.
ExtremalCandidate certify_extremal(const Dataset& data, const Vec& w, double tol = kCertifyTol);

/// Pattern fixpoint iteration w <- +-D_n(w,0)/|D_n(w,0)| from w0, then certification.
ExtremalCandidate find_extremal(const Dataset& data, const Vec& w0, std::size_t max_iter = 100,
                                double tol = kCertifyTol);

/// find_extremal from every cell representative; certified vectors only,
/// deduplicated (entries equal to `dedup_tol`) and sorted lexicographically by D.
std::vector<ExtremalCandidate> extremal_set(const Dataset& data, const CellEnumeration& cells,
                                            std::size_t max_iter = 100, double tol = kCertifyTol,
                                            double dedup_tol = 1e-9);

nlohmann::json to_json(const ExtremalCandidate& c, const Dataset& data);

// ---------------------------------------------------------------------------
// Concentration of D_n around the population field

struct DeviationResult {
  double value = 0.0;
  CellMode mode_used = CellMode::Exact;
  std::size_t cells = 0;
};

/// max over cells of |D_cell - Sigma beta*/2|. Exact when d <= 4 and n <= 64,
/// otherwise a sampled lower bound over `budget` random directions.
DeviationResult sup_deviation(const Dataset& data, const InputSpec& input_spec,
                              const TeacherSpec& teacher, std::size_t budget = 20000,
                              std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Early alignment

struct NeuronAlignment {
  double cos_to_plus = 0.0;   // cos(w_i, Sigma beta*)
  double cos_to_minus = 0.0;  // cos(w_i, -Sigma beta*)
  double norm = 0.0;
  int a_sign = 0;
  bool zero_norm = false;

  /// Cosine to the target of the neuron's output sign.
  [[nodiscard]] double cos_to_target() const { return a_sign >= 0 ? cos_to_plus : cos_to_minus; }
};

struct AlignmentReport {
  std::vector<NeuronAlignment> neurons;
  Vec target;  // Sigma beta*
  double min_cos_to_target = 1.0;
};

AlignmentReport alignment_probe(const NetParams& params, const InputSpec& input_spec,
                                const TeacherSpec& teacher);

/// epsilon ln(1/lambda) / |Sigma beta*|
double alignment_time(double epsilon, double lambda, const InputSpec& input_spec,
                      const TeacherSpec& teacher);

}  // namespace alignlab
