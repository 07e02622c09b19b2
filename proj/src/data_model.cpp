#include "alignlab/data_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace alignlab {

namespace {

constexpr int kDatasetRecordVersion = 1;

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), v.size()); }

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// TeacherSpec

TeacherSpec TeacherSpec::linear(Vec beta_star, double noise_std) {
  TeacherSpec t{LinearTeacher{std::move(beta_star)}, noise_std};
  t.validate();
  return t;
}

TeacherSpec TeacherSpec::k_relu(std::vector<Vec> betas, double scale, double noise_std) {
  TeacherSpec t{KReluTeacher{std::move(betas), scale}, noise_std};
  t.validate();
  return t;
}

TeacherSpec TeacherSpec::random_k_relu(std::size_t k, std::size_t d, std::uint64_t seed,
                                       double noise_std) {
  Rng rng = Rng::stream(seed, "teacher-betas");
  std::vector<Vec> betas(k, Vec(d));
  for (auto& b : betas)
    for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = rng.normal();
  return k_relu(std::move(betas), 1.0 / static_cast<double>(k), noise_std);
}

std::size_t TeacherSpec::dim() const {
  if (const auto* lin = std::get_if<LinearTeacher>(&model))
    return static_cast<std::size_t>(lin->beta_star.size());
  const auto& kr = std::get<KReluTeacher>(model);
  return kr.betas.empty() ? 0 : static_cast<std::size_t>(kr.betas.front().size());
}

const Vec& TeacherSpec::beta_star() const {
  if (const auto* lin = std::get_if<LinearTeacher>(&model)) return lin->beta_star;
  throw UnsupportedError("teacher is not linear: no beta*");
}

double TeacherSpec::mean(const Eigen::Ref<const Vec>& x) const {
  if (const auto* lin = std::get_if<LinearTeacher>(&model)) return lin->beta_star.dot(x);
  const auto& kr = std::get<KReluTeacher>(model);
  double s = 0.0;
  for (const auto& b : kr.betas) s += std::max(0.0, b.dot(x));
  return kr.scale * s;
}

void TeacherSpec::validate() const {
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
    throw ConfigError("teacher noise_std must be finite and >= 0");
  if (const auto* lin = std::get_if<LinearTeacher>(&model)) {
    if (lin->beta_star.size() == 0) throw ConfigError("linear teacher: empty beta*");
    if (!all_finite(lin->beta_star)) throw ConfigError("linear teacher: non-finite beta*");
    return;
  }
  const auto& kr = std::get<KReluTeacher>(model);
  if (kr.betas.empty()) throw ConfigError("k-ReLU teacher: empty neuron list");
  if (!(kr.scale > 0.0) || !std::isfinite(kr.scale))
    throw ConfigError("k-ReLU teacher: scale must be positive");
  for (const auto& b : kr.betas) {
    if (b.size() != kr.betas.front().size() || b.size() == 0)
      throw ConfigError("k-ReLU teacher: inconsistent neuron dimensions");
    if (!all_finite(b)) throw ConfigError("k-ReLU teacher: non-finite neuron");
  }
}

// ---------------------------------------------------------------------------
// InputSpec

InputSpec InputSpec::assumption1(Vec beta_star, double epsilon) {
  const auto d = static_cast<std::size_t>(beta_star.size());
  InputSpec s{Assumption1{d, std::move(beta_star), epsilon}};
  s.validate();
  return s;
}

InputSpec InputSpec::orthogonal(std::size_t d, Vec labels) {
  InputSpec s{OrthogonalBasis{d, std::move(labels)}};
  s.validate();
  return s;
}

std::size_t InputSpec::dim() const {
  return std::visit([](const auto& s) { return s.d; }, dist);
}

bool InputSpec::symmetric_continuous() const {
  return !std::holds_alternative<OrthogonalBasis>(dist);
}

Eigen::MatrixXd InputSpec::covariance() const {
  const auto d = static_cast<Eigen::Index>(dim());
  if (std::holds_alternative<StandardGaussian>(dist)) return Eigen::MatrixXd::Identity(d, d);
  if (const auto* a = std::get_if<Assumption1>(&dist)) {
    // E[s^2] = 1 + eps^2/3 along beta; (d-1) E[v v^T] is the projector on the complement.
    const Vec u = a->beta_star.normalized();
    return Eigen::MatrixXd::Identity(d, d) + (a->epsilon * a->epsilon / 3.0) * u * u.transpose();
  }
  throw UnsupportedError("orthogonal-basis inputs have no population covariance");
}

void InputSpec::validate() const {
  if (dim() < 1) throw ConfigError("input dimension must be >= 1");
  if (const auto* a = std::get_if<Assumption1>(&dist)) {
    if (a->d < 2) throw ConfigError("assumption1 inputs need d >= 2");
    if (static_cast<std::size_t>(a->beta_star.size()) != a->d)
      throw DimensionError("assumption1: beta* length differs from d");
    if (!all_finite(a->beta_star) || a->beta_star.norm() == 0.0)
      throw ConfigError("assumption1: beta* must be finite and nonzero");
    if (!(a->epsilon > 0.0 && a->epsilon < 1.0))
      throw ConfigError("assumption1: epsilon must lie in (0, 1)");
  }
  if (const auto* o = std::get_if<OrthogonalBasis>(&dist)) {
    if (static_cast<std::size_t>(o->labels.size()) > o->d)
      throw ConfigError("orthogonal basis: n must be <= d");
    if (!all_finite(o->labels)) throw ConfigError("orthogonal basis: non-finite labels");
  }
}

void InputSpec::sample(Rng& rng, Eigen::Ref<Vec> out) const {
  if (std::holds_alternative<StandardGaussian>(dist)) {
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = rng.normal();
    return;
  }
  if (const auto* a = std::get_if<Assumption1>(&dist)) {
    const Vec u = a->beta_star.normalized();
    Vec v(static_cast<Eigen::Index>(a->d));
    double nv = 0.0;
    do {
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
      v -= v.dot(u) * u;
      nv = v.norm();
    } while (nv < 1e-12);
    v /= nv;
    const double mag = rng.uniform(1.0 - a->epsilon, 1.0 + a->epsilon);
    const double s = rng.coin() ? mag : -mag;
    out = s * u + std::sqrt(static_cast<double>(a->d) - 1.0) * v;
    return;
  }
  throw UnsupportedError("orthogonal-basis inputs are not sampled i.i.d.");
}

// ---------------------------------------------------------------------------
// Dataset generation

Dataset Dataset::from_arrays(RowMat X, Vec y) {
  if (X.rows() != y.size()) throw DimensionError("X rows differ from y length");
  const auto d = static_cast<std::size_t>(X.cols());
  Dataset ds;
  ds.teacher = TeacherSpec{LinearTeacher{Vec::Zero(static_cast<Eigen::Index>(d))}, 0.0};
  ds.input_spec = InputSpec::gaussian(d);
  ds.X = std::move(X);
  ds.y = std::move(y);
  return ds;
}

Dataset gen_dataset(const InputSpec& input_spec, const TeacherSpec& teacher, std::size_t n,
                    std::uint64_t seed) {
  input_spec.validate();
  teacher.validate();
  if (n < 1) throw ConfigError("dataset needs n >= 1");
  const std::size_t d = input_spec.dim();
  const auto* ortho = std::get_if<OrthogonalBasis>(&input_spec.dist);
  if (ortho == nullptr && teacher.dim() != d)
    throw DimensionError("teacher dimension " + std::to_string(teacher.dim()) +
                         " differs from input dimension " + std::to_string(d));
  if (ortho != nullptr && n != static_cast<std::size_t>(ortho->labels.size()))
    throw ConfigError("orthogonal basis: n must equal the number of labels");

  Dataset ds;
  ds.teacher = teacher;
  ds.input_spec = input_spec;
  ds.seed = seed;
  ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.y.resize(static_cast<Eigen::Index>(n));

  Rng x_rng = Rng::stream(seed, "dataset-x");
  Rng noise_rng = Rng::stream(seed, "dataset-noise");
  Vec row(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    double target = 0.0;
    if (ortho != nullptr) {
      row.setZero();
      row[kk] = 1.0;
      target = ortho->labels[kk];
    } else {
      input_spec.sample(x_rng, row);
      target = teacher.mean(row);
    }
    ds.X.row(kk) = row.transpose();
    const double eta = teacher.noise_std > 0.0 ? teacher.noise_std * noise_rng.normal() : 0.0;
    ds.y[kk] = target + eta;
  }
  return ds;
}

SignSplit split_signs(const Dataset& data, const Vec& beta) {
  if (static_cast<std::size_t>(beta.size()) != data.d())
    throw DimensionError("split_signs: beta dimension mismatch");
  if (beta.norm() == 0.0) throw ConfigError("split_signs: zero reference vector");
  SignSplit split;
  for (std::size_t k = 0; k < data.n(); ++k) {
    if (data.X.row(static_cast<Eigen::Index>(k)).dot(beta) >= 0.0)
      split.pos.push_back(k);
    else
      split.neg.push_back(k);
  }
  return split;
}

Vec population_D(const InputSpec& input_spec, const TeacherSpec& teacher, const Vec& w) {
  if (!teacher.is_linear()) throw UnsupportedError("population D: no closed form for k-ReLU teachers");
  if (!input_spec.symmetric_continuous())
    throw UnsupportedError("population D: no closed form for orthogonal-basis inputs");
  if (static_cast<std::size_t>(w.size()) != input_spec.dim() || teacher.dim() != input_spec.dim())
    throw DimensionError("population D: dimension mismatch");
  return 0.5 * input_spec.covariance() * teacher.beta_star();
}

RowMat select_rows(const RowMat& X, const std::vector<std::size_t>& idx) {
  RowMat out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

Vec select_entries(const Vec& y, const std::vector<std::size_t>& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r)
    out[static_cast<Eigen::Index>(r)] = y[static_cast<Eigen::Index>(idx[r])];
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (std::size_t j = 0; j < data.d(); ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (Eigen::Index k = 0; k < data.X.rows(); ++k) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) out << data.X(k, j) << ',';
    out << data.y[k] << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  std::size_t cols = 1;
  for (char c : line) cols += (c == ',');
  if (cols < 2 || line.substr(line.rfind(',') + 1) != "y")
    throw FormatError(path.string() + ": header must be x1,...,xd,y");
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad number '" + cell + "'");
      }
      ++c;
    }
    if (c != cols) throw FormatError(path.string() + ": ragged row " + std::to_string(rows + 2));
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": no data rows");
  const auto d = static_cast<Eigen::Index>(cols - 1);
  RowMat X(static_cast<Eigen::Index>(rows), d);
  Vec y(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    for (Eigen::Index j = 0; j < d; ++j)
      X(static_cast<Eigen::Index>(r), j) = values[r * cols + static_cast<std::size_t>(j)];
    y[static_cast<Eigen::Index>(r)] = values[r * cols + cols - 1];
  }
  return Dataset::from_arrays(std::move(X), std::move(y));
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const TeacherSpec& t) {
  nlohmann::json j;
  j["noise_std"] = t.noise_std;
  if (const auto* lin = std::get_if<LinearTeacher>(&t.model)) {
    j["kind"] = "linear";
    j["beta_star"] = to_std(lin->beta_star);
  } else {
    const auto& kr = std::get<KReluTeacher>(t.model);
    j["kind"] = "k_relu";
    j["scale"] = kr.scale;
    auto& arr = j["betas"] = nlohmann::json::array();
    for (const auto& b : kr.betas) arr.push_back(to_std(b));
  }
  return j;
}

TeacherSpec teacher_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    const double noise = j.value("noise_std", 0.0);
    if (kind == "linear") return TeacherSpec::linear(to_vec(j.at("beta_star").get<std::vector<double>>()), noise);
    if (kind == "k_relu") {
      if (j.contains("random_k")) {
        return TeacherSpec::random_k_relu(j.at("random_k").get<std::size_t>(), j.at("d").get<std::size_t>(),
                                          j.at("teacher_seed").get<std::uint64_t>(), noise);
      }
      std::vector<Vec> betas;
      for (const auto& b : j.at("betas")) betas.push_back(to_vec(b.get<std::vector<double>>()));
      return TeacherSpec::k_relu(std::move(betas), j.value("scale", 1.0), noise);
    }
    throw ConfigError("unknown teacher kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("teacher: ") + e.what());
  }
}

nlohmann::json to_json(const InputSpec& s) {
  nlohmann::json j;
  if (const auto* g = std::get_if<StandardGaussian>(&s.dist)) {
    j["kind"] = "gaussian";
    j["d"] = g->d;
  } else if (const auto* a = std::get_if<Assumption1>(&s.dist)) {
    j["kind"] = "assumption1";
    j["d"] = a->d;
    j["beta_star"] = to_std(a->beta_star);
    j["epsilon"] = a->epsilon;
  } else {
    const auto& o = std::get<OrthogonalBasis>(s.dist);
    j["kind"] = "orthogonal";
    j["d"] = o.d;
    j["labels"] = to_std(o.labels);
  }
  return j;
}

InputSpec input_spec_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "gaussian") {
      InputSpec s = InputSpec::gaussian(j.at("d").get<std::size_t>());
      s.validate();
      return s;
    }
    if (kind == "assumption1")
      return InputSpec::assumption1(to_vec(j.at("beta_star").get<std::vector<double>>()),
                                    j.at("epsilon").get<double>());
    if (kind == "orthogonal")
      return InputSpec::orthogonal(j.at("d").get<std::size_t>(),
                                   to_vec(j.at("labels").get<std::vector<double>>()));
    throw ConfigError("unknown input spec kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("input spec: ") + e.what());
  }
}

nlohmann::json dataset_to_json(const Dataset& data) {
  nlohmann::json j;
  j["version"] = kDatasetRecordVersion;
  j["seed"] = data.seed;
  j["n"] = data.n();
  j["d"] = data.d();
  j["teacher"] = to_json(data.teacher);
  j["input_spec"] = to_json(data.input_spec);
  auto& X = j["X"] = nlohmann::json::array();
  for (Eigen::Index k = 0; k < data.X.rows(); ++k)
    X.push_back(std::vector<double>(data.X.row(k).data(), data.X.row(k).data() + data.X.cols()));
  j["y"] = to_std(data.y);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kDatasetRecordVersion)
      throw FormatError("dataset record: unsupported version " + j.at("version").dump());
    Dataset ds;
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.teacher = teacher_from_json(j.at("teacher"));
    ds.input_spec = input_spec_from_json(j.at("input_spec"));
    const auto n = j.at("n").get<Eigen::Index>();
    const auto d = j.at("d").get<Eigen::Index>();
    ds.X.resize(n, d);
    const auto& X = j.at("X");
    if (static_cast<Eigen::Index>(X.size()) != n) throw FormatError("dataset record: X row count");
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto row = X[static_cast<std::size_t>(k)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != d) throw FormatError("dataset record: ragged X");
      for (Eigen::Index c = 0; c < d; ++c) ds.X(k, c) = row[static_cast<std::size_t>(c)];
    }
    ds.y = to_vec(j.at("y").get<std::vector<double>>());
    if (ds.y.size() != n) throw FormatError("dataset record: y length");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset record: ") + e.what());
  }
}

}  // namespace alignlab
