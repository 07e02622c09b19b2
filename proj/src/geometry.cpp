#include "alignlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "alignlab/kernels.hpp"
#include "alignlab/rng.hpp"

namespace alignlab {

namespace {

void check_dims(const Vec& w, const Dataset& data) {
  if (static_cast<std::size_t>(w.size()) != data.d()) {
    throw DimensionError("direction has dimension " + std::to_string(w.size()) + ", data has " +
                         std::to_string(data.d()));
  }
}

Vec field(const Vec& w, const Dataset& data, const Vec& resid) {
  Vec D = Vec::Zero(static_cast<Eigen::Index>(data.d()));
  for (Eigen::Index k = 0; k < data.X.rows(); ++k) {
    if (data.X.row(k).dot(w) > 0.0) D += resid[k] * data.X.row(k).transpose();
  }
  if (data.n() > 0) D /= static_cast<double>(data.n());
  return D;
}

Vec unit_from(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Strict patterns of random directions, first direction per pattern kept.
std::vector<PatternCell> sampled_cells(const Dataset& data, std::size_t budget, std::uint64_t seed) {
  const Rng base = Rng::stream(seed, "cells");
  const std::size_t d = data.d();
  std::map<ActivationPattern, Vec> found;
  constexpr std::size_t kBlock = 1024;
  std::vector<ActivationPattern> pats;
  std::vector<Vec> dirs;
  for (std::size_t start = 0; start < budget; start += kBlock) {
    const std::size_t len = std::min(kBlock, budget - start);
    pats.assign(len, {});
    dirs.assign(len, Vec());
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < len; ++j) {
      Rng r = base.split(static_cast<std::uint64_t>(start + j));
      dirs[j] = unit_from(r.unit_vector(d));
      pats[j] = activation_pattern(dirs[j], data.X);
    }
    for (std::size_t j = 0; j < len; ++j) {
      if (pats[j].strict()) found.try_emplace(std::move(pats[j]), std::move(dirs[j]));
    }
  }
  std::vector<PatternCell> out;
  out.reserve(found.size());
  for (auto& [p, w] : found) out.push_back({p, w});
  return out;
}

struct Degenerate {
  std::string reason;
};

// Throws Degenerate when the data are not in general position.
std::vector<PatternCell> exact_cells(const Dataset& data) {
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  const RowMat& X = data.X;
  std::map<ActivationPattern, Vec> acc;  // pattern -> sum of unit points in the cell

  auto add = [&](const Vec& v) {
    Vec u = v.normalized();
    ActivationPattern p = activation_pattern(u, X);
    if (!p.strict()) throw Degenerate{"perturbed ray landed on a hyperplane"};
    auto [it, fresh] = acc.try_emplace(std::move(p), u);
    if (!fresh) it->second += u;
  };

  for (std::size_t k = 0; k < n; ++k) {
    if (X.row(static_cast<Eigen::Index>(k)).norm() == 0.0) throw Degenerate{"zero data point"};
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  const auto rank = static_cast<std::size_t>(qr.rank());

  if (d == 1) {
    add(Vec::Constant(1, 1.0));
    add(Vec::Constant(1, -1.0));
  } else if (n <= d) {
    if (rank < n) throw Degenerate{"data points are linearly dependent"};
    // Every sign vector is realizable: solve X p = s.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    Vec s(static_cast<Eigen::Index>(n));
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      for (std::size_t k = 0; k < n; ++k) s[static_cast<Eigen::Index>(k)] = (mask >> k) & 1 ? 1.0 : -1.0;
      add(cod.solve(s));
    }
  } else {
    if (rank < d) throw Degenerate{"data do not span the input space"};
    // Every cell is a pointed cone whose extreme rays lie on d-1 hyperplanes.
    std::vector<std::size_t> sub(d - 1);
    std::iota(sub.begin(), sub.end(), 0);
    Eigen::MatrixXd M(static_cast<Eigen::Index>(d - 1), static_cast<Eigen::Index>(d));
    Vec s(static_cast<Eigen::Index>(d - 1));
    while (true) {
      for (std::size_t r = 0; r < d - 1; ++r) {
        M.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(sub[r]));
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      if (sv[static_cast<Eigen::Index>(d - 2)] <= 1e-10 * sv[0]) {
        throw Degenerate{"d-1 data points are linearly dependent"};
      }
      Vec u = svd.matrixV().col(static_cast<Eigen::Index>(d - 1));
      double margin = 1.0;
      for (std::size_t k = 0, r = 0; k < n; ++k) {
        if (r < d - 1 && sub[r] == k) {
          ++r;
          continue;
        }
        const auto xk = X.row(static_cast<Eigen::Index>(k));
        margin = std::min(margin, std::abs(xk.dot(u)) / xk.norm());
      }
      if (margin <= 1e-9) throw Degenerate{"more than d-1 hyperplanes share a ray"};
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
      for (std::size_t mask = 0; mask < (std::size_t{1} << (d - 1)); ++mask) {
        for (std::size_t r = 0; r < d - 1; ++r) {
          s[static_cast<Eigen::Index>(r)] = (mask >> r) & 1 ? 1.0 : -1.0;
        }
        Vec p = cod.solve(s);
        const Vec step = std::min(1e-7, 0.5 * margin) / p.norm() * p;
        add(u + step);
        add(-u + step);
      }
      // next (d-1)-subset in lexicographic order
      std::size_t i = d - 1;
      while (i > 0 && sub[i - 1] == n - (d - 1) + (i - 1)) --i;
      if (i == 0) break;
      ++sub[i - 1];
      for (std::size_t j = i; j < d - 1; ++j) sub[j] = sub[j - 1] + 1;
    }
  }

  std::vector<PatternCell> out;
  out.reserve(acc.size());
  for (auto& [p, sum] : acc) {
    Vec rep = sum.normalized();
    // The cell is convex, so the mean of its points stays inside.
    if (activation_pattern(rep, X) != p) throw Degenerate{"cell representative left its cell"};
    out.push_back({p, rep});
  }
  return out;
}

double relative_dot(const Eigen::Ref<const Vec>& x, const Vec& D, double dnorm) {
  const double xn = x.norm();
  if (xn == 0.0 || dnorm == 0.0) return 0.0;
  return x.dot(D) / (xn * dnorm);
}

// Largest relative violation of "pattern of D equals P", with the band rule.
double pattern_violation(const Dataset& data, const Vec& D, const std::vector<int>& P) {
  const double dn = D.norm();
  double worst = 0.0;
  for (std::size_t k = 0; k < data.n(); ++k) {
    const double s = relative_dot(data.X.row(static_cast<Eigen::Index>(k)).transpose(), D, dn);
    const double v = P[k] == 0 ? std::abs(s) : std::max(0.0, -P[k] * s);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------

Vec D_n(const Vec& w, const NetParams& params, const Dataset& data) {
  check_dims(w, data);
  if (params.d() != data.d()) throw DimensionError("network and data dimensions differ");
  kernels::Workspace ws;
  Vec h;
  kernels::predict(params, data.X, ws, h);
  return field(w, data, data.y - h);
}

Vec D_n(const Vec& w, const Dataset& data) {
  check_dims(w, data);
  return field(w, data, data.y);
}

double G_n(const Vec& w, const Dataset& data) { return w.dot(D_n(w, data)); }

double max_cell_count(std::size_t n, std::size_t d) {
  double total = 0.0;
  double binom = 1.0;  // C(n-1, k)
  for (std::size_t k = 0; k < d && k + 1 <= n; ++k) {
    total += binom;
    binom = binom * static_cast<double>(n - 1 - k) / static_cast<double>(k + 1);
  }
  return 2.0 * total;
}

CellEnumeration enumerate_cells(const Dataset& data, CellMode mode, std::size_t budget,
                                std::uint64_t seed) {
  CellEnumeration out;
  out.mode_used = mode;
  if (mode == CellMode::Sampled) {
    out.cells = sampled_cells(data, budget, seed);
    return out;
  }
  if (data.d() > kExactMaxDim || data.n() > kExactMaxPoints) {
    throw UnsupportedError("exact cell enumeration needs d <= " + std::to_string(kExactMaxDim) +
                           " and n <= " + std::to_string(kExactMaxPoints) + " (got d=" +
                           std::to_string(data.d()) + ", n=" + std::to_string(data.n()) + ")");
  }
  try {
    out.cells = exact_cells(data);
  } catch (const Degenerate& e) {
    out.warning = "exact enumeration fell back to sampling: " + e.reason;
    out.mode_used = CellMode::Sampled;
    out.cells = sampled_cells(data, budget, seed);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Extremal: return "extremal";
    case Verdict::NotExtremal: return "not_extremal";
    case Verdict::BoundaryAmbiguous: return "boundary_ambiguous";
  }
  return "?";
}

ExtremalCandidate certify_extremal(const Dataset& data, const Vec& w_in, double tol) {
  check_dims(w_in, data);
  const std::size_t n = data.n();
  ExtremalCandidate c;
  c.w = w_in.normalized();

  std::vector<int> P(n);
  std::vector<std::size_t> boundary;
  Vec D0 = Vec::Zero(w_in.size());
  Vec eta0 = Vec::Zero(static_cast<Eigen::Index>(n));
  double scale = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const auto x = data.X.row(kk);
    const double xn = x.norm();
    const double t = x.dot(c.w);
    scale += std::abs(data.y[kk]) * xn;
    if (t > tol * xn) {
      P[k] = 1;
      D0 += data.y[kk] * x.transpose();
      eta0[kk] = 1.0;
    } else if (t < -tol * xn) {
      P[k] = -1;
    } else {
      P[k] = 0;
      if (xn > 0.0) boundary.push_back(k);
    }
  }
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  D0 *= inv_n;
  scale *= inv_n;

  std::vector<int> negP(P.size());
  std::transform(P.begin(), P.end(), negP.begin(), [](int v) { return -v; });

  auto residual_of = [&](const Vec& D) {
    const double zero = scale > 0.0 ? D.norm() / scale : 0.0;
    return std::min({zero, pattern_violation(data, D, P), pattern_violation(data, D, negP)});
  };

  if (boundary.size() > kMaxBoundaryPoints) {
    c.D = D0;
    c.eta = eta0;
    c.residual = residual_of(D0);
    c.verdict = Verdict::BoundaryAmbiguous;
    return c;
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < (std::size_t{1} << boundary.size()); ++mask) {
    Vec D = D0;
    Vec eta = eta0;
    for (std::size_t b = 0; b < boundary.size(); ++b) {
      if ((mask >> b) & 1) {
        const auto kk = static_cast<Eigen::Index>(boundary[b]);
        D += inv_n * data.y[kk] * data.X.row(kk).transpose();
        eta[kk] = 1.0;
      }
    }
    const double r = residual_of(D);
    if (r < best) {
      best = r;
      c.D = std::move(D);
      c.eta = std::move(eta);
    }
  }
  c.residual = best;
  c.verdict = best <= tol ? Verdict::Extremal : Verdict::NotExtremal;
  return c;
}

ExtremalCandidate find_extremal(const Dataset& data, const Vec& w0, std::size_t max_iter,
                                double tol) {
  check_dims(w0, data);
  Vec w = w0.normalized();
  const double sgn = G_n(w, data) < 0.0 ? -1.0 : 1.0;
  std::vector<ActivationPattern> visited;
  bool cycled = false;
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    ActivationPattern P = activation_pattern(w, data.X, tol);
    Vec D = D_n(w, data);
    const double dn = D.norm();
    if (dn == 0.0) break;
    Vec next = sgn * D / dn;
    ActivationPattern Pn = activation_pattern(next, data.X, tol);
    if (Pn == P) {
      w = std::move(next);
      break;
    }
    if (std::find(visited.begin(), visited.end(), Pn) != visited.end()) {
      cycled = true;
      break;
    }
    visited.push_back(std::move(P));
    w = std::move(next);
  }
  ExtremalCandidate c = certify_extremal(data, w, tol);
  c.iterations = it;
  if (cycled) c.verdict = Verdict::BoundaryAmbiguous;
  return c;
}

std::vector<ExtremalCandidate> extremal_set(const Dataset& data, const CellEnumeration& cells,
                                            std::size_t max_iter, double tol, double dedup_tol) {
  const std::size_t count = cells.cells.size();
  std::vector<ExtremalCandidate> found(count);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < count; ++i) {
    found[i] = find_extremal(data, cells.cells[i].representative, max_iter, tol);
  }
  std::vector<ExtremalCandidate> kept;
  for (auto& c : found) {
    if (c.verdict != Verdict::Extremal) continue;
    const double scale = std::max(1.0, c.D.norm());
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const ExtremalCandidate& k) {
      return (k.D - c.D).cwiseAbs().maxCoeff() <= dedup_tol * scale;
    });
    if (!dup) kept.push_back(std::move(c));
  }
  std::sort(kept.begin(), kept.end(), [](const ExtremalCandidate& a, const ExtremalCandidate& b) {
    return std::lexicographical_compare(a.D.data(), a.D.data() + a.D.size(), b.D.data(),
                                        b.D.data() + b.D.size());
  });
  return kept;
}

nlohmann::json to_json(const ExtremalCandidate& c, const Dataset& data) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"w", vec(c.w)},
          {"D", vec(c.D)},
          {"pattern", activation_pattern(c.w, data.X, kCertifyTol).str()},
          {"eta", vec(c.eta)},
          {"verdict", to_string(c.verdict)},
          {"residual", c.residual}};
}

// ---------------------------------------------------------------------------

DeviationResult sup_deviation(const Dataset& data, const InputSpec& input_spec,
                              const TeacherSpec& teacher, std::size_t budget, std::uint64_t seed) {
  const std::size_t d = data.d();
  const Vec target = population_D(input_spec, teacher, Vec::Ones(static_cast<Eigen::Index>(d)));
  DeviationResult out;
  if (d <= kExactMaxDim && data.n() <= kExactMaxPoints) {
    CellEnumeration cells = enumerate_cells(data, CellMode::Exact, budget, seed);
    if (cells.mode_used == CellMode::Exact) {
      for (const auto& c : cells.cells) {
        out.value = std::max(out.value, (D_n(c.representative, data) - target).norm());
      }
      out.cells = cells.cells.size();
      out.mode_used = CellMode::Exact;
      return out;
    }
  }
  // Sampled: D for a block of directions is X^T (1{X w > 0} * y) / n.
  out.mode_used = CellMode::Sampled;
  out.cells = budget;
  const Rng base = Rng::stream(seed, "sup-deviation");
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (budget + kBlock - 1) / kBlock;
  const Eigen::MatrixXd Xc = data.X;
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(data.n(), 1));
  double best = 0.0;
#pragma omp parallel for schedule(dynamic) reduction(max : best)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t len = std::min(kBlock, budget - b * kBlock);
    Eigen::MatrixXd dirs(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(len));
    for (std::size_t j = 0; j < len; ++j) {
      Rng r = base.split(static_cast<std::uint64_t>(b * kBlock + j));
      dirs.col(static_cast<Eigen::Index>(j)) = unit_from(r.unit_vector(d));
    }
    Eigen::MatrixXd act = (Xc * dirs).unaryExpr([](double z) { return z > 0.0 ? 1.0 : 0.0; });
    act.array().colwise() *= data.y.array();
    Eigen::MatrixXd D = (Xc.transpose() * act) * inv_n;
    D.colwise() -= target;
    best = std::max(best, D.colwise().norm().maxCoeff());
  }
  out.value = best;
  return out;
}

// ---------------------------------------------------------------------------

AlignmentReport alignment_probe(const NetParams& params, const InputSpec& input_spec,
                                const TeacherSpec& teacher) {
  if (!teacher.is_linear()) throw UnsupportedError("alignment probe needs a linear teacher");
  if (params.d() != teacher.dim()) throw DimensionError("network and teacher dimensions differ");
  AlignmentReport rep;
  rep.target = input_spec.covariance() * teacher.beta_star();
  const double tn = rep.target.norm();
  rep.neurons.resize(params.m());
  for (std::size_t i = 0; i < params.m(); ++i) {
    NeuronAlignment& na = rep.neurons[i];
    const Vec w = params.neuron(i);
    const double a = params.a[static_cast<Eigen::Index>(i)];
    na.norm = w.norm();
    na.a_sign = a > 0.0 ? 1 : (a < 0.0 ? -1 : 0);
    if (na.norm == 0.0 || tn == 0.0) {
      na.zero_norm = true;
      continue;
    }
    na.cos_to_plus = w.dot(rep.target) / (na.norm * tn);
    na.cos_to_minus = -na.cos_to_plus;
    rep.min_cos_to_target = std::min(rep.min_cos_to_target, na.cos_to_target());
  }
  return rep;
}

double alignment_time(double epsilon, double lambda, const InputSpec& input_spec,
                      const TeacherSpec& teacher) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0, 1)");
  const double norm = (input_spec.covariance() * teacher.beta_star()).norm();
  if (norm == 0.0) throw UnsupportedError("Sigma beta* is zero");
  return epsilon * std::log(1.0 / lambda) / norm;
}

}  // namespace alignlab
