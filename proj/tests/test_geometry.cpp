#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"

#include "alignlab/geometry.hpp"
#include "alignlab/rng.hpp"
#include "test_util.hpp"

using namespace alignlab;
using alignlab::test::dataset;
using alignlab::test::vec;

namespace {

Dataset orthogonal_ones(std::size_t n) {
  return gen_dataset(InputSpec::orthogonal(n, Vec::Ones(static_cast<Eigen::Index>(n))),
                     TeacherSpec::linear(Vec::Ones(static_cast<Eigen::Index>(n)), 0.0), n, 0);
}

Dataset gaussian_data(std::size_t n, std::size_t d, double sigma, std::uint64_t seed) {
  Vec beta = Vec::Zero(static_cast<Eigen::Index>(d));
  beta[0] = 1.0;
  return gen_dataset(InputSpec::gaussian(d), TeacherSpec::linear(beta, sigma), n, seed);
}

Vec random_unit(Rng& rng, std::size_t d) {
  const auto v = rng.unit_vector(d);
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(d));
}

// Distinct strict patterns seen by `samples` random directions.
std::set<std::vector<int>> sampled_patterns(const Dataset& data, std::size_t samples, std::uint64_t seed) {
  Rng rng(seed);
  std::set<std::vector<int>> out;
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec w = random_unit(rng, data.d());
    std::vector<int> p;
    bool strict = true;
    for (Eigen::Index k = 0; k < data.X.rows(); ++k) {
      const double t = data.X.row(k).dot(w);
      strict = strict && t != 0.0;
      p.push_back(t > 0.0 ? 1 : -1);
    }
    if (strict) out.insert(p);
  }
  return out;
}

// Every D reachable from a face sign pattern P and a 0/1 choice on its zero
// coordinates, kept when D = 0 or sign(x_k . D) agrees with +P or -P
// (a zero entry of D agrees with either sign). For X = I every nonzero P is a face.
std::vector<Vec> brute_force_extremal_identity(const Vec& y) {
  const auto n = static_cast<std::size_t>(y.size());
  std::vector<Vec> out;
  std::vector<int> P(n);
  std::size_t faces = 1;
  for (std::size_t k = 0; k < n; ++k) faces *= 3;
  for (std::size_t code = 0; code < faces; ++code) {
    std::size_t c = code;
    std::vector<std::size_t> zeros;
    for (std::size_t k = 0; k < n; ++k) {
      P[k] = static_cast<int>(c % 3) - 1;
      c /= 3;
      if (P[k] == 0) zeros.push_back(k);
    }
    if (zeros.size() == n) continue;  // w = 0 is not a direction
    for (std::size_t mask = 0; mask < (std::size_t{1} << zeros.size()); ++mask) {
      Vec D = Vec::Zero(static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k) {
        if (P[k] == 1) D[static_cast<Eigen::Index>(k)] = y[static_cast<Eigen::Index>(k)] / static_cast<double>(n);
      }
      for (std::size_t z = 0; z < zeros.size(); ++z) {
        if ((mask >> z) & 1) {
          D[static_cast<Eigen::Index>(zeros[z])] = y[static_cast<Eigen::Index>(zeros[z])] / static_cast<double>(n);
        }
      }
      bool ok = D.isZero(0.0);
      for (int sgn : {1, -1}) {
        bool match = true;
        for (std::size_t k = 0; k < n; ++k) {
          const double v = D[static_cast<Eigen::Index>(k)];
          const int target = sgn * P[k];
          if (target == 0) match = match && v == 0.0;
          if (target == 1) match = match && v >= 0.0;
          if (target == -1) match = match && v <= 0.0;
        }
        ok = ok || match;
      }
      if (!ok) continue;
      const bool seen = std::any_of(out.begin(), out.end(), [&](const Vec& e) { return (e - D).norm() < 1e-12; });
      if (!seen) out.push_back(D);
    }
  }
  return out;
}

bool contains(const std::vector<ExtremalCandidate>& set, const Vec& D) {
  return std::any_of(set.begin(), set.end(), [&](const ExtremalCandidate& c) { return (c.D - D).norm() < 1e-9; });
}

}  // namespace

TEST_CASE("D_n on a single point") {
  const Dataset data = dataset({{1.0, 0.0}}, {1.0});
  CHECK(D_n(vec({1.0, 0.0}), data).isApprox(vec({1.0, 0.0})));
  CHECK(D_n(vec({-1.0, 0.0}), data).isZero(0.0));
  CHECK(G_n(vec({1.0, 0.0}), data) == doctest::Approx(1.0));
}

TEST_CASE("D_n with a network uses the residual") {
  const Dataset data = dataset({{1.0, 0.0}}, {1.0});
  NetParams p = NetParams::zeros(1, 2);
  p.a[0] = 0.5;
  p.W(0, 0) = 1.0;  // h(x) = 0.5
  CHECK(D_n(vec({1.0, 0.0}), p, data).isApprox(vec({0.5, 0.0})));
  CHECK(D_n(vec({1.0, 0.0}), NetParams::zeros(3, 2), data).isApprox(D_n(vec({1.0, 0.0}), data)));
}

TEST_CASE("D_n is constant inside a cell") {
  const Dataset data = gaussian_data(12, 3, 0.3, 5);
  Rng rng(17);
  for (int cell = 0; cell < 5; ++cell) {
    const Vec w = random_unit(rng, 3);
    const ActivationPattern p = activation_pattern(w, data);
    const Vec D = D_n(w, data);
    int checked = 0;
    while (checked < 10) {
      const Vec v = (w + 0.05 * random_unit(rng, 3)).normalized();
      if (activation_pattern(v, data) != p) continue;
      CHECK((D_n(v, data) - D).norm() <= 1e-14 * std::max(1.0, D.norm()));
      ++checked;
    }
  }
}

TEST_CASE("G_n is positively 1-homogeneous") {
  const Dataset data = gaussian_data(20, 3, 0.3, 1);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const Vec w = random_unit(rng, 3);
    for (double c : {0.5, 2.0, 7.0}) CHECK(G_n(c * w, data) == doctest::Approx(c * G_n(w, data)));
  }
}

TEST_CASE("G_n maximiser on orthogonal data by exhaustive sampling") {
  const Dataset data = orthogonal_ones(2);
  Rng rng(11);
  double best = -1.0;
  Vec arg;
  for (int s = 0; s < 100000; ++s) {
    const Vec w = random_unit(rng, 2);
    const double g = G_n(w, data);
    if (g > best) {
      best = g;
      arg = w;
    }
  }
  const Vec diag = Vec::Ones(2) / std::sqrt(2.0);
  CHECK(arg.dot(diag) > 0.9999);
  // G((1,1)/sqrt 2) = (1/sqrt 2) (1/2 + 1/2)
  CHECK(best == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-4));
  CHECK(G_n(diag, data) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("max_cell_count") {
  CHECK(max_cell_count(1, 2) == 2.0);
  CHECK(max_cell_count(3, 2) == 6.0);
  CHECK(max_cell_count(3, 3) == 8.0);
  CHECK(max_cell_count(10, 3) == 2.0 * (1 + 9 + 36));
}

TEST_CASE("exact cells in the plane match a dense angular sweep") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Dataset data = gaussian_data(3, 2, 0.3, seed);
    const CellEnumeration e = enumerate_cells(data, CellMode::Exact);
    CHECK(e.mode_used == CellMode::Exact);
    CHECK(e.cells.size() == 6);
    std::set<ActivationPattern> swept;
    for (int k = 0; k < 100000; ++k) {
      const double t = 2.0 * std::numbers::pi * k / 100000.0;
      const ActivationPattern p = activation_pattern(vec({std::cos(t), std::sin(t)}), data);
      if (p.strict()) swept.insert(p);
    }
    CHECK(swept.size() == 6);
    for (const auto& c : e.cells) {
      CHECK(swept.contains(c.pattern));
      CHECK(activation_pattern(c.representative, data) == c.pattern);
      CHECK(c.representative.norm() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("exact cells: small cases") {
  CHECK(enumerate_cells(dataset({{1.0, 0.0}}, {1.0}), CellMode::Exact).cells.size() == 2);
  const CellEnumeration orth = enumerate_cells(orthogonal_ones(3), CellMode::Exact);
  CHECK(orth.cells.size() == 8);
  CHECK(sampled_patterns(orthogonal_ones(3), 20000, 4).size() == 8);
}

TEST_CASE("exact cells in d = 3: general position count, sampled patterns are a subset") {
  for (std::uint64_t seed : {1, 2}) {
    const Dataset data = gaussian_data(9, 3, 0.3, seed);
    const CellEnumeration e = enumerate_cells(data, CellMode::Exact);
    REQUIRE(e.mode_used == CellMode::Exact);
    // Gaussian points are in general position almost surely, where the bound is attained.
    CHECK(static_cast<double>(e.cells.size()) == max_cell_count(9, 3));
    CHECK(std::is_sorted(e.cells.begin(), e.cells.end(),
                         [](const PatternCell& a, const PatternCell& b) { return a.pattern < b.pattern; }));
    std::set<std::vector<int>> exact;
    for (const auto& c : e.cells) {
      CHECK(activation_pattern(c.representative, data) == c.pattern);
      exact.insert(std::vector<int>(c.pattern.signs.begin(), c.pattern.signs.end()));
    }
    const auto sampled = sampled_patterns(data, 400000, seed + 100);
    CHECK(sampled.size() >= e.cells.size() - 8);
    for (const auto& p : sampled) CHECK(exact.contains(p));
    const CellEnumeration s = enumerate_cells(data, CellMode::Sampled, 400000, 9);
    CHECK(s.cells.size() <= e.cells.size());
    for (const auto& c : s.cells) {
      CHECK(exact.contains(std::vector<int>(c.pattern.signs.begin(), c.pattern.signs.end())));
    }
  }
}

TEST_CASE("exact enumeration guards and fallbacks") {
  CHECK_THROWS_AS(enumerate_cells(gaussian_data(65, 3, 0.3, 1), CellMode::Exact), UnsupportedError);
  CHECK_THROWS_AS(enumerate_cells(gaussian_data(10, 5, 0.3, 1), CellMode::Exact), UnsupportedError);
  // Three points on one line through the origin are not in general position.
  const Dataset degenerate = dataset({{1.0, 1.0}, {2.0, 2.0}, {0.0, 1.0}}, {1.0, 1.0, 1.0});
  const CellEnumeration e = enumerate_cells(degenerate, CellMode::Exact, 5000);
  CHECK(e.mode_used == CellMode::Sampled);
  CHECK_FALSE(e.warning.empty());
  CHECK(e.cells.size() == 4);
}

TEST_CASE("certified extremal set on orthogonal data matches brute force") {
  for (std::size_t n : {2, 3, 4}) {
    const Dataset data = orthogonal_ones(n);
    const auto found = extremal_set(data, enumerate_cells(data, CellMode::Exact));
    const auto oracle = brute_force_extremal_identity(data.y);
    CHECK(found.size() == oracle.size());
    CHECK(found.size() == (std::size_t{1} << n));
    for (const Vec& D : oracle) CHECK(contains(found, D));
  }
  const Dataset data = orthogonal_ones(2);
  const auto found = extremal_set(data, enumerate_cells(data, CellMode::Exact));
  CHECK(contains(found, vec({0.5, 0.5})));
  CHECK(contains(found, vec({0.5, 0.0})));
  CHECK(contains(found, vec({0.0, 0.5})));
  CHECK(contains(found, vec({0.0, 0.0})));
  CHECK_FALSE(contains(found, vec({0.5, -0.5})));
}

TEST_CASE("certify_extremal in the mixed cell returns the boundary vector") {
  const Dataset data = orthogonal_ones(2);
  const ExtremalCandidate c = certify_extremal(data, vec({1.0, -1.0}).normalized());
  CHECK(c.verdict == Verdict::Extremal);
  CHECK(c.D.isApprox(vec({0.5, 0.0})));
  // on the face w = e1 the second point is a boundary coordinate
  const ExtremalCandidate f = certify_extremal(data, vec({1.0, 0.0}));
  CHECK(f.verdict == Verdict::Extremal);
  CHECK(f.D.isApprox(vec({0.5, 0.0})));
  CHECK(f.eta[1] == 0.0);
}

TEST_CASE("find_extremal small cases") {
  SUBCASE("single point converges in one step") {
    const Dataset data = dataset({{2.0, 1.0}}, {1.0});
    const ExtremalCandidate c = find_extremal(data, vec({1.0, 0.0}));
    CHECK(c.verdict == Verdict::Extremal);
    CHECK(c.D.isApprox(vec({2.0, 1.0})));
    CHECK(c.iterations <= 1);
  }
  SUBCASE("dead cone gives the zero vector") {
    const Dataset data = dataset({{1.0, 0.0}, {0.0, 1.0}}, {1.0, 1.0});
    const ExtremalCandidate c = find_extremal(data, vec({-1.0, -1.0}).normalized());
    CHECK(c.verdict == Verdict::Extremal);
    CHECK(c.D.isZero(0.0));
  }
  SUBCASE("zero labels") {
    const Dataset data = dataset({{1.0, 0.0}, {0.0, 1.0}}, {0.0, 0.0});
    CHECK(certify_extremal(data, vec({0.6, 0.8})).verdict == Verdict::Extremal);
  }
}

TEST_CASE("find_extremal on Gaussian linear data lands near the population field") {
  const Dataset data = gaussian_data(4096, 3, 0.3, 8);
  const Vec target = population_D(data.input_spec, data.teacher, Vec::Ones(3));
  Rng rng(2);
  int tried = 0;
  while (tried < 5) {
    const Vec w0 = random_unit(rng, 3);
    if (w0[0] <= 0.0) continue;
    ++tried;
    const ExtremalCandidate c = find_extremal(data, w0);
    CHECK(c.verdict == Verdict::Extremal);
    CHECK((c.D - target).norm() <= 0.15);
  }
}

TEST_CASE("re-certifying an extremal candidate is stable") {
  const Dataset data = gaussian_data(10, 3, 0.3, 4);
  const auto set = extremal_set(data, enumerate_cells(data, CellMode::Exact));
  REQUIRE_FALSE(set.empty());
  for (const auto& c : set) {
    const ExtremalCandidate again = certify_extremal(data, c.w);
    CHECK(again.verdict == Verdict::Extremal);
    CHECK((again.D - c.D).norm() <= 1e-12);
  }
}

TEST_CASE("mirrored data give a symmetric extremal set") {
  const Dataset base = gaussian_data(6, 3, 0.3, 12);
  RowMat X(12, 3);
  Vec y(12);
  X.topRows(6) = base.X;
  X.bottomRows(6) = -base.X;
  y.head(6) = base.y;
  y.tail(6) = base.y;
  const Dataset data = Dataset::from_arrays(X, y);
  const auto set = extremal_set(data, enumerate_cells(data, CellMode::Exact));
  REQUIRE_FALSE(set.empty());
  for (const auto& c : set) CHECK(contains(set, -c.D));
}

TEST_CASE("more than twelve boundary points is ambiguous") {
  RowMat X = RowMat::Zero(13, 2);
  X.col(1).setOnes();
  const Dataset data = Dataset::from_arrays(X, Vec::Ones(13));
  CHECK(certify_extremal(data, vec({1.0, 0.0})).verdict == Verdict::BoundaryAmbiguous);
}

TEST_CASE("sup_deviation hand cases") {
  const TeacherSpec t = TeacherSpec::linear(vec({1.0, 0.0}), 0.3);
  const Dataset one = dataset({{1.0, 0.0}}, {1.0});
  const DeviationResult r = sup_deviation(one, InputSpec::gaussian(2), t);
  CHECK(r.mode_used == CellMode::Exact);
  CHECK(r.value == doctest::Approx(0.5));

  const TeacherSpec zero = TeacherSpec::linear(Vec::Zero(3), 0.0);
  const Dataset z = gen_dataset(InputSpec::gaussian(3), zero, 20, 1);
  CHECK(sup_deviation(z, InputSpec::gaussian(3), zero).value == 0.0);
  const Dataset zl = gen_dataset(InputSpec::gaussian(3), zero, 500, 1);
  CHECK(sup_deviation(zl, InputSpec::gaussian(3), zero, 500).value == 0.0);
}

TEST_CASE("sup_deviation: sampled mode is a lower bound of the exact maximum") {
  const Dataset data = gaussian_data(40, 3, 0.3, 3);
  const double exact = sup_deviation(data, data.input_spec, data.teacher).value;
  // brute force over many directions
  Rng rng(1);
  const Vec target = population_D(data.input_spec, data.teacher, Vec::Ones(3));
  double best = 0.0;
  for (int s = 0; s < 200000; ++s) best = std::max(best, (D_n(random_unit(rng, 3), data) - target).norm());
  CHECK(best <= exact + 1e-12);
  CHECK(best >= 0.98 * exact);
}

TEST_CASE("sup_deviation rejects k-ReLU teachers") {
  const TeacherSpec t = TeacherSpec::random_k_relu(5, 3, 1, 0.3);
  const Dataset data = gen_dataset(InputSpec::gaussian(3), t, 10, 1);
  CHECK_THROWS_AS(sup_deviation(data, InputSpec::gaussian(3), t), UnsupportedError);
}

TEST_CASE("alignment_probe") {
  const InputSpec in = InputSpec::assumption1(vec({1.0, 0.0, 0.0}), 0.2);
  const TeacherSpec t = TeacherSpec::linear(vec({1.0, 0.0, 0.0}), 0.3);
  const Vec target = in.covariance() * t.beta_star();
  NetParams p = NetParams::zeros(3, 3);
  p.W.row(0) = target.transpose();
  p.a[0] = 1.0;
  p.W.row(1) = -2.0 * target.transpose();
  p.a[1] = -1.0;
  p.a[2] = 1.0;  // zero neuron
  const AlignmentReport r = alignment_probe(p, in, t);
  CHECK(r.neurons[0].cos_to_plus == doctest::Approx(1.0));
  CHECK(r.neurons[1].cos_to_minus == doctest::Approx(1.0));
  CHECK(r.neurons[1].cos_to_target() == doctest::Approx(1.0));
  CHECK(r.neurons[2].zero_norm);
  CHECK(r.neurons[2].cos_to_plus == 0.0);
  CHECK(r.min_cos_to_target == doctest::Approx(1.0));

  const double tau = alignment_time(0.2, 1e-3, in, t);
  CHECK(tau == doctest::Approx(0.2 * std::log(1000.0) / target.norm()));
  CHECK(alignment_time(0.2, 1e-4, in, t) > tau);
}

TEST_CASE("extremal JSON record") {
  const Dataset data = orthogonal_ones(2);
  const auto j = to_json(certify_extremal(data, vec({1.0, 1.0}).normalized()), data);
  CHECK(j.at("verdict") == "extremal");
  CHECK(j.at("pattern") == "++");
  CHECK(j.at("D").size() == 2);
}
