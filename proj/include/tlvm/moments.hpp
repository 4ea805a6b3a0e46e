#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tlvm/corpus.hpp"
#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/sym_tensor.hpp"
#include "tlvm/tensor_io.hpp"

namespace tlvm {

enum class Provenance { kPopulation, kEmpirical };

struct MomentSet {
  std::optional<Vector> M1;
  Matrix M2;
  SymTensor3 M3;
  Provenance provenance = Provenance::kPopulation;
  Index sample_count = 0;
  // Smallest-eigenvalue bookkeeping of the covariance (spherical GMMs only).
  Index smallest_eig_multiplicity = 0;
  bool ambiguous_eigenvector = false;
  std::optional<double> noise_variance = std::nullopt;  // smallest covariance eigenvalue (GMMs)
};

inline void save_moments(const std::string& path, const MomentSet& m) {
  io::Bundle b;
  if (m.M1) b.put_vector("M1", *m.M1);
  b.put_matrix("M2", m.M2);
  b.put_tensor("M3", m.M3);
  b.save(path);
}

inline MomentSet load_moments(const std::string& path) {
  const io::Bundle b = io::Bundle::load(path);
  MomentSet m{std::nullopt, b.get_matrix("M2"), b.get_tensor("M3")};
  if (b.has("M1")) m.M1 = b.get_vector("M1");
  return m;
}

// ---------------------------------------------------------------------------
// Fourth-order symmetric tensor (ICA cumulants).

class SymTensor4 {
 public:
  explicit SymTensor4(Index dim) : dim_(dim), entries_(static_cast<std::size_t>(dim * dim * dim * dim), 0.0) {
    if (dim < 1) fail(ErrorKind::kInvalidArgument, "SymTensor4: dim must be >= 1");
  }

  /// Fills every permutation of each sorted index quadruple with
  /// unique_entry(i <= j <= l <= m).
  template <class F>
  static SymTensor4 build(Index dim, F&& unique_entry) {
    SymTensor4 t(dim);
    for (Index i = 0; i < dim; ++i)
      for (Index j = i; j < dim; ++j)
        for (Index l = j; l < dim; ++l)
          for (Index m = l; m < dim; ++m) {
            const double v = unique_entry(i, j, l, m);
            std::array<Index, 4> idx{i, j, l, m};
            do {
              t.entries_[t.offset(idx[0], idx[1], idx[2], idx[3])] = v;
            } while (std::next_permutation(idx.begin(), idx.end()));
          }
    return t;
  }

  Index dim() const { return dim_; }
  double operator()(Index i, Index j, Index l, Index m) const {
    return entries_[offset(i, j, l, m)];
  }
  std::span<const double> entries() const { return entries_; }

 private:
  std::size_t offset(Index i, Index j, Index l, Index m) const {
    return static_cast<std::size_t>(((i * dim_ + j) * dim_ + l) * dim_ + m);
  }

  Index dim_;
  std::vector<double> entries_;
};

/// The pair (M4(I,I,u,v), M4(I,I,I,v)), which take the roles of M2 and M3.
inline std::pair<Matrix, SymTensor3> ica_reduce(const SymTensor4& m4, const Vector& u,
                                                const Vector& v) {
  const Index d = m4.dim();
  require_dims(u.size() == d && v.size() == d, "ica_reduce: vector length != dim");
  Matrix m2 = Matrix::Zero(d, d);
  std::vector<double> cube(static_cast<std::size_t>(d * d * d), 0.0);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      for (Index l = 0; l < d; ++l) {
        double along_v = 0.0;
        for (Index m = 0; m < d; ++m) along_v += m4(i, j, l, m) * v(m);
        cube[static_cast<std::size_t>((i * d + j) * d + l)] = along_v;
        m2(i, j) += along_v * u(l);
      }
  return {0.5 * (m2 + m2.transpose()), SymTensor3::from_cube(d, std::move(cube))};
}

// ---------------------------------------------------------------------------
// Model parameter containers.

struct TopicParams {
  Vector w;    // k, simplex
  Matrix mu;   // d x k, columns in the simplex
};

struct GmmParams {
  Vector w;       // k, simplex
  Matrix mu;      // d x k
  Vector sigma2;  // size 1 (common variance) or k (per component)

  double variance(Index i) const { return sigma2.size() == 1 ? sigma2(0) : sigma2(i); }
};

struct LdaParams {
  Vector alpha;  // k, positive
  Matrix mu;     // d x k, columns in the simplex

  double alpha0() const { return alpha.sum(); }
};

struct IcaParams {
  Matrix A;            // d x k mixing matrix
  Vector source_m4;    // E[h_i^4] of unit-variance, zero-mean sources
  double noise_sigma = 0.0;

  Vector kurtosis() const { return source_m4.array() - 3.0; }
};

struct HmmParams {
  Vector pi;  // k, simplex
  Matrix T;   // k x k, column-stochastic: T(i,j) = P[y' = i | y = j]
  Matrix O;   // d x k, column j = E[x | y = j]
};

namespace detail {

constexpr double kParamTol = 1e-12;

inline void check_simplex(const Vector& p, const std::string& what) {
  if ((p.array() < -kParamTol).any() || std::abs(p.sum() - 1.0) > 1e-10)
    fail(ErrorKind::kInvalidArgument, what + " must lie in the probability simplex");
}

inline void check_positive(const Vector& p, const std::string& what) {
  if (!(p.array() > 0).all()) fail(ErrorKind::kInvalidArgument, what + " must be strictly positive");
}

}  // namespace detail

inline void validate(const TopicParams& p) {
  require_dims(p.mu.cols() == p.w.size(), "topic: w and mu disagree on k");
  detail::check_simplex(p.w, "topic weights");
  detail::check_positive(p.w, "topic weights");
  for (Index i = 0; i < p.mu.cols(); ++i) detail::check_simplex(p.mu.col(i), "topic distribution");
}

inline void validate(const GmmParams& p) {
  require_dims(p.mu.cols() == p.w.size(), "gmm: w and mu disagree on k");
  require_dims(p.sigma2.size() == 1 || p.sigma2.size() == p.w.size(), "gmm: sigma2 size");
  detail::check_simplex(p.w, "mixing weights");
  detail::check_positive(p.w, "mixing weights");
  if ((p.sigma2.array() < 0).any()) fail(ErrorKind::kInvalidArgument, "variances must be >= 0");
}

inline void validate(const LdaParams& p) {
  require_dims(p.mu.cols() == p.alpha.size(), "lda: alpha and mu disagree on k");
  detail::check_positive(p.alpha, "Dirichlet parameters");
  for (Index i = 0; i < p.mu.cols(); ++i) detail::check_simplex(p.mu.col(i), "topic distribution");
}

inline void validate(const IcaParams& p) {
  require_dims(p.source_m4.size() == p.A.cols(), "ica: source_m4 size != k");
  if (p.noise_sigma < 0) fail(ErrorKind::kInvalidArgument, "noise sigma must be >= 0");
}

inline void validate(const HmmParams& p) {
  const Index k = p.pi.size();
  require_dims(p.T.rows() == k && p.T.cols() == k && p.O.cols() == k, "hmm: shape mismatch");
  detail::check_simplex(p.pi, "initial distribution");
  for (Index j = 0; j < k; ++j) detail::check_simplex(p.T.col(j), "transition column");
}

// ---------------------------------------------------------------------------
// Raw moments and their dense empirical estimates.

struct RawMoments {
  Vector m1;       // E[x]
  Matrix m2;       // E[x x^T]
  SymTensor3 m3;   // E[x (x) x (x) x]
  Index samples = 0;
};

/// E[x], E[x x^T], E[x^{(x)3}] over the rows of X (n x d).
inline RawMoments empirical_raw_moments(const Matrix& x) {
  const Index n = x.rows(), d = x.cols();
  if (n < 1) fail(ErrorKind::kInvalidArgument, "no samples");
  const double inv = 1.0 / static_cast<double>(n);
  Vector m1 = x.colwise().sum().transpose() * inv;
  Matrix m2 = (x.transpose() * x) * inv;
  SymTensor3 m3 = detail::build_symmetric(d, [&](Index i, Index j, Index l) {
    return (x.col(i).cwiseProduct(x.col(j))).dot(x.col(l)) * inv;
  });
  return {std::move(m1), std::move(m2), std::move(m3), n};
}

namespace detail {

/// a_{i} delta_{jl} + a_{j} delta_{il} + a_{l} delta_{ij}, summed over e_i.
inline SymTensor3 diagonal_correction(const Vector& a) {
  return build_symmetric(a.size(), [&](Index i, Index j, Index l) {
    double v = 0.0;
    if (j == l) v += a(i);
    if (i == l) v += a(j);
    if (i == j) v += a(l);
    return v;
  });
}

struct SmallestEig {
  double value;
  Vector vector;
  Index multiplicity;
};

inline SmallestEig smallest_eig(const Matrix& cov) {
  const SymEig e = sym_eig_desc(cov);
  const Index d = cov.rows();
  const double smallest = e.values(d - 1);
  const double tol = 1e-9 * std::max(std::abs(e.values(0)), 1e-300);
  Index mult = 0;
  for (Index i = 0; i < d; ++i)
    if (std::abs(e.values(i) - smallest) <= tol) ++mult;
  return {smallest, e.vectors.col(d - 1), mult};
}

inline void check_d_ge_k(Index d, Index k) {
  if (d < k)
    fail(ErrorKind::kDimensionTooSmall,
         "spherical GMM moments need d >= k (d=" + std::to_string(d) + ", k=" + std::to_string(k) + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single topic model.

/// M2 = sum w mu mu^T, M3 = sum w mu^{(x)3}; M1 = sum w mu.
inline MomentSet topic_population_moments(const TopicParams& p) {
  validate(p);
  const Index d = p.mu.rows();
  std::vector<RankOneTerm> terms;
  for (Index i = 0; i < p.w.size(); ++i) terms.push_back({p.w(i), p.mu.col(i)});
  return {Vector(p.mu * p.w), p.mu * p.w.asDiagonal() * p.mu.transpose(),
          from_rank_one_sum(terms, d), Provenance::kPopulation, 0};
}

/// Averages over all ordered word pairs/triples of each document.
inline MomentSet topic_empirical_moments(const SparseCorpus& corpus) {
  return {corpus_mean(corpus), corpus_dense_m2(corpus), corpus_dense_m3(corpus),
          Provenance::kEmpirical, static_cast<Index>(corpus.docs().size())};
}

// ---------------------------------------------------------------------------
// Spherical Gaussian mixtures.

/// Closed-form E[x], E[x x^T], E[x^{(x)3}] of a spherical Gaussian mixture.
inline RawMoments gmm_population_raw(const GmmParams& p) {
  validate(p);
  const Index d = p.mu.rows(), k = p.w.size();
  Vector m1 = p.mu * p.w;
  Matrix m2 = Matrix::Zero(d, d);
  for (Index i = 0; i < k; ++i)
    m2 += p.w(i) * (p.mu.col(i) * p.mu.col(i).transpose() +
                    p.variance(i) * Matrix::Identity(d, d));
  SymTensor3 m3 = detail::build_symmetric(d, [&](Index a, Index b, Index c) {
    double v = 0.0;
    for (Index i = 0; i < k; ++i) {
      const auto mu = p.mu.col(i);
      double corr = 0.0;
      if (b == c) corr += mu(a);
      if (a == c) corr += mu(b);
      if (a == b) corr += mu(c);
      v += p.w(i) * (mu(a) * mu(b) * mu(c) + p.variance(i) * corr);
    }
    return v;
  });
  return {std::move(m1), std::move(m2), std::move(m3), 0};
}

namespace detail {

inline MomentSet gmm_common_from_raw(const RawMoments& raw, Index k, Provenance prov) {
  const Index d = raw.m1.size();
  check_d_ge_k(d, k);
  const Matrix cov = raw.m2 - raw.m1 * raw.m1.transpose();
  const SmallestEig se = smallest_eig(0.5 * (cov + cov.transpose()));
  MomentSet out{raw.m1, raw.m2 - se.value * Matrix::Identity(d, d),
                raw.m3 - se.value * diagonal_correction(raw.m1), prov, raw.samples};
  out.smallest_eig_multiplicity = se.multiplicity;
  out.ambiguous_eigenvector = se.multiplicity > d - k + 1;
  out.noise_variance = se.value;
  return out;
}

template <class FirstMoment>
MomentSet gmm_varying_from_raw(const RawMoments& raw, Index k, Provenance prov,
                               FirstMoment&& m1_for_direction) {
  const Index d = raw.m1.size();
  check_d_ge_k(d, k);
  const Matrix cov = raw.m2 - raw.m1 * raw.m1.transpose();
  const SmallestEig se = smallest_eig(0.5 * (cov + cov.transpose()));
  const Vector first = m1_for_direction(se.vector);
  MomentSet out{first, raw.m2 - se.value * Matrix::Identity(d, d),
                raw.m3 - diagonal_correction(first), prov, raw.samples};
  out.smallest_eig_multiplicity = se.multiplicity;
  out.ambiguous_eigenvector = se.multiplicity > d - k + 1;
  out.noise_variance = se.value;
  return out;
}

}  // namespace detail

/// Common spherical covariance: sigma^2 is the smallest covariance eigenvalue;
/// M2 = E[xx^T] - sigma^2 I, M3 = E[x^3] - sigma^2 sum_i (E[x] e_i e_i + ...).
inline MomentSet gmm_common_moments(const GmmParams& p) {
  return detail::gmm_common_from_raw(gmm_population_raw(p), p.w.size(), Provenance::kPopulation);
}

/// Empirical version over the rows of X (n x d); mean and covariance use the
/// plug-in sample mean.
inline MomentSet gmm_common_moments(const Matrix& samples, Index k) {
  detail::check_d_ge_k(samples.cols(), k);
  return detail::gmm_common_from_raw(empirical_raw_moments(samples), k, Provenance::kEmpirical);
}

/// Per-component spherical variances. v is the (sign-fixed) eigenvector of
/// the smallest covariance eigenvalue; M1 = E[x (v^T (x - E[x]))^2] enters
/// the third-moment correction in place of sigma^2 E[x].
inline MomentSet gmm_varying_moments(const GmmParams& p) {
  const RawMoments raw = gmm_population_raw(p);
  const Index k = p.w.size();
  return detail::gmm_varying_from_raw(raw, k, Provenance::kPopulation, [&](const Vector& v) {
    Vector out = Vector::Zero(p.mu.rows());
    for (Index i = 0; i < k; ++i) {
      const double proj = v.dot(p.mu.col(i) - raw.m1);
      out += p.w(i) * (p.mu.col(i) * (proj * proj + p.variance(i)) + 2.0 * p.variance(i) * proj * v);
    }
    return out;
  });
}

inline MomentSet gmm_varying_moments(const Matrix& samples, Index k) {
  detail::check_d_ge_k(samples.cols(), k);
  const RawMoments raw = empirical_raw_moments(samples);
  return detail::gmm_varying_from_raw(raw, k, Provenance::kEmpirical, [&](const Vector& v) {
    const Vector proj = (samples.rowwise() - raw.m1.transpose()) * v;
    return Vector(samples.transpose() * proj.cwiseAbs2() / static_cast<double>(samples.rows()));
  });
}

// ---------------------------------------------------------------------------
// Latent Dirichlet allocation.

/// Raw moments E[x1], E[x1 x2^T], E[x1 x2 x3] of an LDA model from the
/// Dirichlet moment formulas E[prod h] = prod rising(alpha_i) / rising(alpha0).
inline RawMoments lda_population_raw(const LdaParams& p) {
  validate(p);
  const Index k = p.alpha.size();
  const double a0 = p.alpha0();
  auto rising = [](double a, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= a + i;
    return r;
  };
  Matrix h2(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      h2(i, j) = (i == j ? rising(p.alpha(i), 2) : p.alpha(i) * p.alpha(j)) / rising(a0, 2);
  const SymTensor3 h3 = detail::build_symmetric(k, [&](Index i, Index j, Index l) {
    double num;
    if (i == j && j == l) num = rising(p.alpha(i), 3);
    else if (i == j) num = rising(p.alpha(i), 2) * p.alpha(l);
    else if (j == l) num = rising(p.alpha(j), 2) * p.alpha(i);
    else if (i == l) num = rising(p.alpha(i), 2) * p.alpha(j);
    else num = p.alpha(i) * p.alpha(j) * p.alpha(l);
    return num / rising(a0, 3);
  });
  return {p.mu * (p.alpha / a0), p.mu * h2 * p.mu.transpose(),
          contract_matrix(h3, p.mu.transpose()), 0};
}

namespace detail {

inline MomentSet lda_from_raw(const RawMoments& raw, double alpha0, Provenance prov) {
  if (!(alpha0 > 0)) fail(ErrorKind::kNonpositiveAlpha0, "alpha0 must be > 0");
  const Index d = raw.m1.size();
  const Vector& m1 = raw.m1;
  Matrix m2 = raw.m2 - (alpha0 / (alpha0 + 1.0)) * m1 * m1.transpose();
  const double c_pair = alpha0 / (alpha0 + 2.0);
  const double c_cube = 2.0 * alpha0 * alpha0 / ((alpha0 + 2.0) * (alpha0 + 1.0));
  const Matrix& p = raw.m2;
  SymTensor3 m3 = build_symmetric(d, [&](Index a, Index b, Index c) {
    return raw.m3(a, b, c) - c_pair * (p(a, b) * m1(c) + p(a, c) * m1(b) + m1(a) * p(b, c)) +
           c_cube * m1(a) * m1(b) * m1(c);
  });
  return {m1, 0.5 * (m2 + m2.transpose()), std::move(m3), prov, raw.samples};
}

}  // namespace detail

/// Population: M2 = sum alpha_i/((a0+1)a0) mu mu^T,
/// M3 = sum 2 alpha_i/((a0+2)(a0+1)a0) mu^{(x)3}.
inline MomentSet lda_moments(const LdaParams& p, double alpha0) {
  if (!(alpha0 > 0)) fail(ErrorKind::kNonpositiveAlpha0, "alpha0 must be > 0");
  return detail::lda_from_raw(lda_population_raw(p), alpha0, Provenance::kPopulation);
}

inline MomentSet lda_moments(const SparseCorpus& corpus, double alpha0) {
  if (!(alpha0 > 0)) fail(ErrorKind::kNonpositiveAlpha0, "alpha0 must be > 0");
  RawMoments raw{corpus_mean(corpus), corpus_dense_m2(corpus), corpus_dense_m3(corpus),
                 static_cast<Index>(corpus.docs().size())};
  return detail::lda_from_raw(raw, alpha0, Provenance::kEmpirical);
}

// ---------------------------------------------------------------------------
// Independent component analysis.

namespace detail {

inline SymTensor4 subtract_pairings(const SymTensor4& raw, const Matrix& c) {
  return SymTensor4::build(raw.dim(), [&](Index i, Index j, Index l, Index m) {
    return raw(i, j, l, m) - (c(i, j) * c(l, m) + c(i, l) * c(j, m) + c(i, m) * c(j, l));
  });
}

}  // namespace detail

/// Population fourth cumulant. Raw E[x^{(x)4}] is expanded over the
/// independent unit-variance coordinates g = (h, z / sigma) of x = G g with
/// G = [A | sigma I]; the pairing term of E[x x^T] is then removed.
inline SymTensor4 ica_moments(const IcaParams& p) {
  validate(p);
  const Index d = p.A.rows(), k = p.A.cols();
  Matrix g(d, k + d);
  g << p.A, p.noise_sigma * Matrix::Identity(d, d);
  Vector m4(k + d);
  m4 << p.source_m4, Vector::Constant(d, 3.0);
  const Index n = g.cols();
  const SymTensor4 raw = SymTensor4::build(d, [&](Index a, Index b, Index c, Index e) {
    double v = 0.0;
    for (Index i = 0; i < n; ++i) {
      v += m4(i) * g(a, i) * g(b, i) * g(c, i) * g(e, i);
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        v += g(a, i) * g(b, i) * g(c, j) * g(e, j) + g(a, i) * g(c, i) * g(b, j) * g(e, j) +
             g(a, i) * g(e, i) * g(b, j) * g(c, j);
      }
    }
    return v;
  });
  return detail::subtract_pairings(raw, g * g.transpose());
}

/// Empirical fourth cumulant over the rows of X (zero-mean model).
inline SymTensor4 ica_moments(const Matrix& samples) {
  const Index n = samples.rows(), d = samples.cols();
  if (n < 1) fail(ErrorKind::kInvalidArgument, "no samples");
  const double inv = 1.0 / static_cast<double>(n);
  const SymTensor4 raw = SymTensor4::build(d, [&](Index a, Index b, Index c, Index e) {
    return (samples.col(a).cwiseProduct(samples.col(b)))
               .dot(samples.col(c).cwiseProduct(samples.col(e))) * inv;
  });
  const Matrix second = samples.transpose() * samples * inv;
  return detail::subtract_pairings(raw, second);
}

}  // namespace tlvm
