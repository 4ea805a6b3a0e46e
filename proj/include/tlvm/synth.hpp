#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tlvm/corpus.hpp"
#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/moments.hpp"
#include "tlvm/multiview.hpp"
#include "tlvm/sym_tensor.hpp"

namespace tlvm {

enum class ModelKind { kTopic, kGmmCommon, kGmmVarying, kLda, kIca, kHmm, kRawTensor };

inline std::string model_name(ModelKind m) {
  switch (m) {
    case ModelKind::kTopic: return "topic";
    case ModelKind::kGmmCommon: return "gmm_common";
    case ModelKind::kGmmVarying: return "gmm_varying";
    case ModelKind::kLda: return "lda";
    case ModelKind::kIca: return "ica";
    case ModelKind::kHmm: return "hmm";
    case ModelKind::kRawTensor: return "raw_tensor";
  }
  return "?";
}

inline ModelKind parse_model(const std::string& s) {
  for (ModelKind m : {ModelKind::kTopic, ModelKind::kGmmCommon, ModelKind::kGmmVarying,
                      ModelKind::kLda, ModelKind::kIca, ModelKind::kHmm, ModelKind::kRawTensor})
    if (model_name(m) == s) return m;
  fail(ErrorKind::kUsage, "unknown model '" + s + "'");
}

struct SynthSpec {
  ModelKind model = ModelKind::kTopic;
  Index d = 10;
  Index k = 3;
  Index n = 1000;           // documents or samples
  Index doc_length = 10;    // words per document (topic, lda)
  double epsilon = 0.0;     // raw_tensor: target operator norm of the noise
  double alpha0 = 1.0;      // lda
  std::optional<double> sigma;  // gmm: noise scale (default 1); ica: noise (default 0.1)
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1 || k < 1 || n < 1) fail(ErrorKind::kInfeasibleSpec, "dimensions must be positive");
    if (epsilon < 0) fail(ErrorKind::kInfeasibleSpec, "epsilon must be >= 0");
    if (sigma && *sigma < 0) fail(ErrorKind::kInfeasibleSpec, "sigma must be >= 0");
    const bool needs_d_ge_k = model != ModelKind::kRawTensor;
    if (needs_d_ge_k && d < k)
      fail(ErrorKind::kInfeasibleSpec,
           model_name(model) + " needs d >= k (d=" + std::to_string(d) + ", k=" + std::to_string(k) + ")");
    if ((model == ModelKind::kTopic || model == ModelKind::kLda) && doc_length < 3)
      fail(ErrorKind::kInfeasibleSpec, "third-order word moments need documents of length >= 3");
    if (model == ModelKind::kLda && !(alpha0 > 0))
      fail(ErrorKind::kInfeasibleSpec, "alpha0 must be > 0");
    if (model == ModelKind::kHmm && d != k)
      fail(ErrorKind::kInfeasibleSpec, "hmm observations must have d == k");
  }
};

/// Ground truth of one synthetic instance. Only the members for spec.model are set.
struct SynthModel {
  SynthSpec spec;
  std::optional<TopicParams> topic;
  std::optional<GmmParams> gmm;
  std::optional<LdaParams> lda;
  std::optional<IcaParams> ica;
  std::optional<HmmParams> hmm;
  std::optional<OrthoDecomposition> tensor;
};

namespace detail {

inline constexpr int kMaxRedraws = 100;

inline Vector dirichlet(const Vector& alpha, Rng& rng) {
  Vector out(alpha.size());
  for (Index i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> g(alpha(i), 1.0);
    out(i) = g(rng);
  }
  const double s = out.sum();
  if (!(s > 0)) {
    out.setZero();
    out(0) = 1.0;
    return out;
  }
  return out / s;
}

/// Weights bounded away from zero: w_i proportional to 1 + U(0,1).
inline Vector positive_weights(Index k, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector w(k);
  for (Index i = 0; i < k; ++i) w(i) = 1.0 + u(rng);
  return w / w.sum();
}

/// k columns in the d-simplex with full column rank.
inline Matrix simplex_columns(Index d, Index k, Rng& rng) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Matrix mu(d, k);
    for (Index i = 0; i < k; ++i) mu.col(i) = dirichlet(Vector::Ones(d), rng);
    if (numeric_rank(mu, 1e-6) == k) return mu;
  }
  fail(ErrorKind::kInfeasibleSpec, "could not draw linearly independent topics");
}

inline Matrix independent_gaussian_columns(Index d, Index k, double scale, Rng& rng) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Matrix m = scale * gaussian_matrix(d, k, rng);
    if (numeric_rank(m, 1e-6) == k) return m;
  }
  fail(ErrorKind::kInfeasibleSpec, "could not draw linearly independent means");
}

inline Index categorical(const Eigen::Ref<const Vector>& p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (x < acc) return i;
  }
  return p.size() - 1;
}

/// Unit-variance Laplace draw (scale 1/sqrt 2); E[h^4] = 6.
inline double unit_laplace(Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  return (e(rng) - e(rng)) / std::sqrt(2.0);
}

}  // namespace detail

/// Random orthonormal columns (Haar, sign-fixed) of size d x k.
inline Matrix haar_basis(Index d, Index k, Rng& rng) {
  Matrix q = haar_orthogonal(d, rng).leftCols(k);
  fix_column_signs(q);
  return q;
}

/// Parameters for spec.model, deterministic per spec.seed.
inline SynthModel gen_params(const SynthSpec& spec) {
  spec.validate();
  SynthModel out;
  out.spec = spec;
  Rng rng = make_stream(spec.seed, 0x706172616dULL);
  const Index d = spec.d, k = spec.k;
  switch (spec.model) {
    case ModelKind::kTopic: {
      const Vector w = detail::positive_weights(k, rng);
      out.topic = TopicParams{w, detail::simplex_columns(d, k, rng)};
      break;
    }
    case ModelKind::kGmmCommon:
    case ModelKind::kGmmVarying: {
      const double s = spec.sigma.value_or(1.0);
      GmmParams p{detail::positive_weights(k, rng), detail::independent_gaussian_columns(d, k, 3.0, rng),
                  Vector::Constant(1, s * s)};
      if (spec.model == ModelKind::kGmmVarying) {
        std::uniform_real_distribution<double> u(0.5, 1.5);
        p.sigma2.resize(k);
        for (Index i = 0; i < k; ++i) p.sigma2(i) = s * s * u(rng);
      }
      out.gmm = p;
      break;
    }
    case ModelKind::kLda: {
      const Vector w = detail::positive_weights(k, rng);
      out.lda = LdaParams{spec.alpha0 * w, detail::simplex_columns(d, k, rng)};
      break;
    }
    case ModelKind::kIca: {
      Matrix a = detail::independent_gaussian_columns(d, k, 1.0, rng);
      for (Index i = 0; i < k; ++i) a.col(i).normalize();
      out.ica = IcaParams{a, Vector::Constant(k, 6.0), spec.sigma.value_or(0.1)};
      break;
    }
    case ModelKind::kHmm: {
      HmmParams p;
      p.pi = detail::positive_weights(k, rng);
      p.T = Matrix(k, k);
      p.O = Matrix(d, k);
      for (Index j = 0; j < k; ++j) {
        p.T.col(j) = 0.4 * detail::dirichlet(Vector::Ones(k), rng) + 0.6 * Vector::Unit(k, j);
        p.O.col(j) = 0.5 * detail::dirichlet(Vector::Ones(d), rng) + 0.5 * Vector::Unit(d, j);
      }
      out.hmm = p;
      break;
    }
    case ModelKind::kRawTensor: {
      std::uniform_real_distribution<double> u(1.0, 2.0);
      OrthoDecomposition truth{d, {}};
      const Matrix v = haar_basis(d, k, rng);
      for (Index i = 0; i < k; ++i) truth.terms.push_back({u(rng), v.col(i)});
      out.tensor = truth;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Samples.

/// Either a corpus (topic, lda) or sample rows (gmm, ica: n x d; hmm: n x 3d
/// one-hot rows holding x1, x2, x3 side by side).
struct SynthSamples {
  std::optional<SparseCorpus> corpus;
  std::optional<Matrix> rows;
};

namespace detail {

inline SparseDoc draw_document(const Eigen::Ref<const Vector>& word_dist, Index length, Rng& rng) {
  std::discrete_distribution<Index> words(word_dist.data(), word_dist.data() + word_dist.size());
  std::vector<std::pair<Index, std::int64_t>> entries;
  entries.reserve(static_cast<std::size_t>(length));
  for (Index t = 0; t < length; ++t) entries.emplace_back(words(rng), 1);
  return make_doc(entries);
}

}  // namespace detail

inline SynthSamples gen_samples(const SynthModel& m, Index n, std::uint64_t seed) {
  if (n < 1) fail(ErrorKind::kInvalidArgument, "sample count must be >= 1");
  const SynthSpec& spec = m.spec;
  Rng rng = make_stream(seed, 0x73616d706cULL);
  SynthSamples out;
  switch (spec.model) {
    case ModelKind::kTopic: {
      const TopicParams& p = *m.topic;
      SparseCorpus corpus(p.mu.rows());
      for (Index doc = 0; doc < n; ++doc) {
        const Index h = detail::categorical(p.w, rng);
        corpus.add(detail::draw_document(p.mu.col(h), spec.doc_length, rng));
      }
      out.corpus = std::move(corpus);
      break;
    }
    case ModelKind::kLda: {
      const LdaParams& p = *m.lda;
      SparseCorpus corpus(p.mu.rows());
      for (Index doc = 0; doc < n; ++doc) {
        const Vector h = detail::dirichlet(p.alpha, rng);
        const Vector dist = p.mu * h;
        corpus.add(detail::draw_document(dist, spec.doc_length, rng));
      }
      out.corpus = std::move(corpus);
      break;
    }
    case ModelKind::kGmmCommon:
    case ModelKind::kGmmVarying: {
      const GmmParams& p = *m.gmm;
      Matrix x(n, p.mu.rows());
      for (Index s = 0; s < n; ++s) {
        const Index h = detail::categorical(p.w, rng);
        x.row(s) = (p.mu.col(h) + std::sqrt(p.variance(h)) * gaussian_vector(p.mu.rows(), rng)).transpose();
      }
      out.rows = std::move(x);
      break;
    }
    case ModelKind::kIca: {
      const IcaParams& p = *m.ica;
      Matrix x(n, p.A.rows());
      for (Index s = 0; s < n; ++s) {
        Vector h(p.A.cols());
        for (Index i = 0; i < h.size(); ++i) h(i) = detail::unit_laplace(rng);
        x.row(s) = (p.A * h + p.noise_sigma * gaussian_vector(p.A.rows(), rng)).transpose();
      }
      out.rows = std::move(x);
      break;
    }
    case ModelKind::kHmm: {
      const HmmParams& p = *m.hmm;
      const Index d = p.O.rows();
      Matrix x = Matrix::Zero(n, 3 * d);
      for (Index s = 0; s < n; ++s) {
        Index y = detail::categorical(p.pi, rng);
        for (Index t = 0; t < 3; ++t) {
          if (t > 0) y = detail::categorical(p.T.col(y), rng);
          x(s, t * d + detail::categorical(p.O.col(y), rng)) = 1.0;
        }
      }
      out.rows = std::move(x);
      break;
    }
    case ModelKind::kRawTensor:
      fail(ErrorKind::kInvalidArgument, "raw_tensor instances have no samples");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orthogonally decomposable tensors plus calibrated noise.

struct OrthoTensorInstance {
  SymTensor3 tensor;
  OrthoDecomposition truth;
  double achieved_epsilon = 0.0;
  SymTensor3 noise;
};

inline constexpr int kCalibrationRestarts = 50;
inline constexpr int kCalibrationIters = 50;

/// T = sum lambda_i v_i^{(x)3} over a Haar basis plus a symmetrized Gaussian
/// tensor E rescaled so that op_norm_estimate(E) = eps_target. The achieved
/// value is op_norm_estimate of the E actually added.
inline OrthoTensorInstance gen_orthotensor(Index k, const Vector& lambda, double eps_target,
                                           std::uint64_t seed, std::optional<Index> dim = std::nullopt) {
  const Index d = dim.value_or(k);
  require_dims(lambda.size() == k && d >= k, "gen_orthotensor: lambda size must be k <= dim");
  if (!(lambda.array() > 0).all()) fail(ErrorKind::kInvalidArgument, "eigenvalues must be positive");
  if (!(eps_target >= 0)) fail(ErrorKind::kInvalidArgument, "epsilon must be >= 0");
  Rng rng = make_stream(seed, 0x6f7274686fULL);
  const Matrix v = haar_basis(d, k, rng);
  OrthoDecomposition truth{d, {}};
  for (Index i = 0; i < k; ++i) truth.terms.push_back({lambda(i), v.col(i)});
  const SymTensor3 clean = from_rank_one_sum(truth);
  if (eps_target == 0.0) return {clean, truth, 0.0, SymTensor3(d)};

  Rng noise_rng = make_stream(seed, 0x6e6f697365ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> cube(static_cast<std::size_t>(d * d * d));
  for (double& c : cube) c = normal(noise_rng);
  SymTensor3 e = SymTensor3::from_cube(d, std::move(cube));
  const std::uint64_t cal_seed = seed ^ 0x63616c6962ULL;
  const double raw = op_norm_estimate(e, kCalibrationRestarts, kCalibrationIters, cal_seed);
  e = (eps_target / raw) * e;
  const double achieved = op_norm_estimate(e, kCalibrationRestarts, kCalibrationIters, cal_seed);
  return {clean + e, truth, achieved, e};
}

// ---------------------------------------------------------------------------
// Truth records and sample files.

namespace detail {

inline nlohmann::json to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

/// Matrices are stored as a list of columns.
inline nlohmann::json columns_to_json(const Matrix& m) {
  nlohmann::json cols = nlohmann::json::array();
  for (Index j = 0; j < m.cols(); ++j) cols.push_back(to_json(m.col(j)));
  return cols;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline Matrix columns_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) fail(ErrorKind::kParse, "expected a non-empty list of columns");
  const Index cols = static_cast<Index>(j.size());
  const Index rows = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    const Vector col = vector_from_json(j[static_cast<std::size_t>(c)]);
    require_dims(col.size() == rows, "ragged column list");
    m.col(c) = col;
  }
  return m;
}

}  // namespace detail

/// "weights" and "means" are always present (for raw_tensor: eigenvalues
/// and eigenvectors; for hmm: w = T pi and the view-3 means O T).
inline nlohmann::json truth_json(const SynthModel& m) {
  using detail::columns_to_json;
  using detail::to_json;
  nlohmann::json j;
  j["schema"] = 1;
  j["model"] = model_name(m.spec.model);
  j["d"] = m.spec.d;
  j["k"] = m.spec.k;
  j["seed"] = m.spec.seed;
  switch (m.spec.model) {
    case ModelKind::kTopic:
      j["weights"] = to_json(m.topic->w);
      j["means"] = columns_to_json(m.topic->mu);
      break;
    case ModelKind::kGmmCommon:
    case ModelKind::kGmmVarying:
      j["weights"] = to_json(m.gmm->w);
      j["means"] = columns_to_json(m.gmm->mu);
      j["sigma2"] = to_json(m.gmm->sigma2);
      break;
    case ModelKind::kLda:
      j["alpha"] = to_json(m.lda->alpha);
      j["alpha0"] = m.lda->alpha0();
      j["weights"] = to_json(m.lda->alpha / m.lda->alpha0());
      j["means"] = columns_to_json(m.lda->mu);
      break;
    case ModelKind::kIca:
      j["weights"] = to_json(m.ica->kurtosis());
      j["means"] = columns_to_json(m.ica->A);
      j["source_m4"] = to_json(m.ica->source_m4);
      j["noise_sigma"] = m.ica->noise_sigma;
      break;
    case ModelKind::kHmm:
      j["pi"] = to_json(m.hmm->pi);
      j["T"] = columns_to_json(m.hmm->T);
      j["O"] = columns_to_json(m.hmm->O);
      j["weights"] = to_json(m.hmm->T * m.hmm->pi);
      j["means"] = columns_to_json(m.hmm->O * m.hmm->T);
      break;
    case ModelKind::kRawTensor:
      j["weights"] = to_json(m.tensor->weights());
      j["means"] = columns_to_json(m.tensor->vectors());
      break;
  }
  return j;
}

/// Rebuilds the parameters from a truth record.
inline SynthModel model_from_truth(const nlohmann::json& j) {
  try {
    SynthModel m;
    m.spec.model = parse_model(j.at("model").get<std::string>());
    m.spec.d = j.at("d").get<Index>();
    m.spec.k = j.at("k").get<Index>();
    using detail::columns_from_json;
    using detail::vector_from_json;
    const Vector w = vector_from_json(j.at("weights"));
    const Matrix mu = columns_from_json(j.at("means"));
    switch (m.spec.model) {
      case ModelKind::kTopic: m.topic = TopicParams{w, mu}; break;
      case ModelKind::kGmmCommon:
      case ModelKind::kGmmVarying: m.gmm = GmmParams{w, mu, vector_from_json(j.at("sigma2"))}; break;
      case ModelKind::kLda: m.lda = LdaParams{vector_from_json(j.at("alpha")), mu}; break;
      case ModelKind::kIca:
        m.ica = IcaParams{mu, vector_from_json(j.at("source_m4")), j.at("noise_sigma").get<double>()};
        break;
      case ModelKind::kHmm:
        m.hmm = HmmParams{vector_from_json(j.at("pi")), columns_from_json(j.at("T")),
                          columns_from_json(j.at("O"))};
        break;
      case ModelKind::kRawTensor: {
        OrthoDecomposition t{mu.rows(), {}};
        for (Index i = 0; i < w.size(); ++i) t.terms.push_back({w(i), mu.col(i)});
        m.tensor = t;
        break;
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("truth file: ") + e.what());
  }
}

inline SynthModel load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  try {
    return model_from_truth(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, path + ": " + e.what());
  }
}

/// Sample rows as CSV, full round-trip precision. '#' lines are comments.
inline void write_rows(std::ostream& os, const Matrix& x) {
  os << "# rows " << x.rows() << " cols " << x.cols() << '\n';
  os << std::setprecision(17);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) os << (c ? "," : "") << x(r, c);
    os << '\n';
  }
}

inline Matrix read_rows(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        fail(ErrorKind::kParse, "line " + std::to_string(line_no) + ": bad number '" + cell + "'", line_no);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::kParse, "line " + std::to_string(line_no) + ": ragged row", line_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::kParse, "no sample rows");
  Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return x;
}

inline void save_rows(const std::string& path, const Matrix& x) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  write_rows(out, x);
}

inline Matrix load_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  return read_rows(in);
}

}  // namespace tlvm
