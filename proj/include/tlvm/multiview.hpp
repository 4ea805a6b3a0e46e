#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/moments.hpp"
#include "tlvm/sym_tensor.hpp"
#include "tlvm/whitening.hpp"

namespace tlvm {

/// Dense, not necessarily symmetric d1 x d2 x d3 array (row-major).
class Tensor3 {
 public:
  Tensor3(Index d1, Index d2, Index d3)
      : dims_{d1, d2, d3}, entries_(static_cast<std::size_t>(d1 * d2 * d3), 0.0) {}

  Index dim(int mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  double& operator()(Index i, Index j, Index l) { return entries_[offset(i, j, l)]; }
  double operator()(Index i, Index j, Index l) const { return entries_[offset(i, j, l)]; }

  /// T(A, B, C) with A: d1 x p, B: d2 x q, C: d3 x r.
  Tensor3 multilinear(const Matrix& a, const Matrix& b, const Matrix& c) const {
    require_dims(a.rows() == dims_[0] && b.rows() == dims_[1] && c.rows() == dims_[2],
                 "Tensor3::multilinear: dimension mismatch");
    Tensor3 step1(a.cols(), dims_[1], dims_[2]);
    for (Index i = 0; i < dims_[0]; ++i)
      for (Index p = 0; p < a.cols(); ++p) {
        const double s = a(i, p);
        if (s == 0.0) continue;
        for (Index j = 0; j < dims_[1]; ++j)
          for (Index l = 0; l < dims_[2]; ++l) step1(p, j, l) += s * (*this)(i, j, l);
      }
    Tensor3 step2(a.cols(), b.cols(), dims_[2]);
    for (Index p = 0; p < a.cols(); ++p)
      for (Index j = 0; j < dims_[1]; ++j)
        for (Index q = 0; q < b.cols(); ++q) {
          const double s = b(j, q);
          if (s == 0.0) continue;
          for (Index l = 0; l < dims_[2]; ++l) step2(p, q, l) += s * step1(p, j, l);
        }
    Tensor3 out(a.cols(), b.cols(), c.cols());
    for (Index p = 0; p < a.cols(); ++p)
      for (Index q = 0; q < b.cols(); ++q)
        for (Index l = 0; l < dims_[2]; ++l)
          for (Index r = 0; r < c.cols(); ++r) out(p, q, r) += step2(p, q, l) * c(l, r);
    return out;
  }

  /// Average over the six orderings of the indices (cubical tensors only).
  SymTensor3 symmetrized() const {
    require_dims(dims_[0] == dims_[1] && dims_[1] == dims_[2], "symmetrized: tensor is not cubical");
    return SymTensor3::from_cube(dims_[0], entries_);
  }

 private:
  std::size_t offset(Index i, Index j, Index l) const {
    return static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + l);
  }

  std::array<Index, 3> dims_;
  std::vector<double> entries_;
};

/// Conditional means of three views given the latent variable.
struct MultiviewParams {
  Vector w;                     // k, simplex
  std::array<Matrix, 3> means;  // view v: d_v x k
};

/// Pairwise and triple cross moments: pair[a][b] = E[x_a x_b^T].
struct CrossMoments {
  std::array<std::array<Matrix, 3>, 3> pair;
  Tensor3 triple{1, 1, 1};  // E[x1 (x) x2 (x) x3]
  Index samples = 0;
};

inline CrossMoments population_cross_moments(const MultiviewParams& p) {
  const Index k = p.w.size();
  for (const auto& m : p.means) require_dims(m.cols() == k, "multiview: means must have k columns");
  CrossMoments out;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) out.pair[a][b] = p.means[a] * p.w.asDiagonal() * p.means[b].transpose();
  const Matrix& m1 = p.means[0];
  const Matrix& m2 = p.means[1];
  const Matrix& m3 = p.means[2];
  out.triple = Tensor3(m1.rows(), m2.rows(), m3.rows());
  for (Index i = 0; i < m1.rows(); ++i)
    for (Index j = 0; j < m2.rows(); ++j)
      for (Index l = 0; l < m3.rows(); ++l) {
        double v = 0.0;
        for (Index c = 0; c < k; ++c) v += p.w(c) * m1(i, c) * m2(j, c) * m3(l, c);
        out.triple(i, j, l) = v;
      }
  return out;
}

/// Empirical cross moments from the three views of n samples (one row per sample).
inline CrossMoments empirical_cross_moments(const Matrix& x1, const Matrix& x2, const Matrix& x3) {
  const Index n = x1.rows();
  require_dims(x2.rows() == n && x3.rows() == n, "cross moments: views have different sample counts");
  if (n < 1) fail(ErrorKind::kInvalidArgument, "no samples");
  const double inv = 1.0 / static_cast<double>(n);
  const std::array<const Matrix*, 3> views{&x1, &x2, &x3};
  CrossMoments out;
  out.samples = n;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) out.pair[a][b] = views[a]->transpose() * *views[b] * inv;
  out.triple = Tensor3(x1.cols(), x2.cols(), x3.cols());
  for (Index s = 0; s < n; ++s)
    for (Index i = 0; i < x1.cols(); ++i) {
      const double a = x1(s, i);
      if (a == 0.0) continue;
      for (Index j = 0; j < x2.cols(); ++j) {
        const double ab = a * x2(s, j);
        if (ab == 0.0) continue;
        for (Index l = 0; l < x3.cols(); ++l) out.triple(i, j, l) += ab * x3(s, l) * inv;
      }
    }
  return out;
}

namespace detail {

/// Tikhonov-regularized inverse V diag(s / (s^2 + reg^2)) U^T with
/// reg = rel_reg * s_max. Fails when s_min < reg.
inline Matrix regularized_inverse(const Matrix& m, double rel_reg, const std::string& what) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double reg = rel_reg * s(0);
  if (!(s(0) > 0) || s(s.size() - 1) < reg)
    fail(ErrorKind::kSingularPairMoment, what + " is singular at the regularization level");
  const Vector inv = s.cwiseQuotient((s.array().square() + reg * reg).matrix());
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace detail

/// Maps the views so that both x~1 = E[x3 x2^T] E[x1 x2^T]^{-1} x1 and
/// x~2 = E[x3 x1^T] E[x2 x1^T]^{-1} x2 share the conditional means of view 3.
/// Returns M2 = sym E[x~1 x~2^T] and M3 = sym E[x~1 (x) x~2 (x) x3].
inline MomentSet multiview_symmetrize(const CrossMoments& cm, double rel_reg = 1e-10) {
  const Index k = cm.triple.dim(2);
  require_dims(cm.triple.dim(0) == k && cm.triple.dim(1) == k,
               "multiview_symmetrize: all views must have dimension k");
  const Matrix a1 = cm.pair[2][1] * detail::regularized_inverse(cm.pair[0][1], rel_reg, "E[x1 x2^T]");
  const Matrix a2 = cm.pair[2][0] * detail::regularized_inverse(cm.pair[1][0], rel_reg, "E[x2 x1^T]");
  const Matrix m2 = a1 * cm.pair[0][1] * a2.transpose();
  const Tensor3 t = cm.triple.multilinear(a1.transpose(), a2.transpose(), Matrix::Identity(k, k));
  return {std::nullopt, 0.5 * (m2 + m2.transpose()), t.symmetrized(),
          cm.samples > 0 ? Provenance::kEmpirical : Provenance::kPopulation, cm.samples};
}

// ---------------------------------------------------------------------------
// Hidden Markov models through the second hidden state.

inline constexpr double kChainTol = 1e-10;

/// Conditional means of (x1, x2, x3) given h = y2:
/// (O diag(pi) T^T diag(w)^{-1}, O, O T) with w = T pi.
inline MultiviewParams hmm_views(const HmmParams& p) {
  validate(p);
  const Index k = p.pi.size();
  const Vector w = p.T * p.pi;
  auto rel_sigma_min = [](const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    return s(0) > 0 ? s(s.size() - 1) / s(0) : 0.0;
  };
  if (p.O.rows() < k || rel_sigma_min(p.O) < kChainTol)
    fail(ErrorKind::kDegenerateChain, "observation matrix lacks full column rank");
  if (rel_sigma_min(p.T) < kChainTol) fail(ErrorKind::kDegenerateChain, "transition matrix is singular");
  if (p.pi.minCoeff() < kChainTol || w.minCoeff() < kChainTol)
    fail(ErrorKind::kDegenerateChain, "state distributions must be entrywise positive");
  MultiviewParams out;
  out.w = w;
  out.means[0] = p.O * p.pi.asDiagonal() * p.T.transpose() * w.cwiseInverse().asDiagonal();
  out.means[1] = p.O;
  out.means[2] = p.O * p.T;
  return out;
}

struct HmmRecovery {
  HmmParams params;
  double projection_magnitude = 0.0;  // Frobenius size of the stochastic projection of T
};

namespace detail {

/// Clips negatives and rescales to sum 1; returns the change in norm.
inline double project_to_simplex_clip(Eigen::Ref<Vector> v) {
  const Vector before = v;
  v = v.cwiseMax(0.0);
  const double s = v.sum();
  if (s > 0) v /= s;
  else v.setConstant(1.0 / static_cast<double>(v.size()));
  return (v - before).norm();
}

}  // namespace detail

/// From view-3 means (columns O T e_j) and weights w = T pi together with
/// view-2 means O: T = pinv(O) (view-3 means), projected column-wise to the
/// simplex, and pi = T^{-1} w, projected to the simplex.
inline HmmRecovery hmm_recover(const ModelEstimate& view3, const Matrix& view2_means, const Vector& w) {
  const Index k = w.size();
  require_dims(view3.means.cols() == k && view2_means.cols() == k &&
                   view3.means.rows() == view2_means.rows(),
               "hmm_recover: dimension mismatch");
  Matrix t = pseudo_inverse(view2_means) * view3.means;
  double sq = 0.0;
  for (Index j = 0; j < k; ++j) {
    Vector col = t.col(j);
    const double moved = detail::project_to_simplex_clip(col);
    sq += moved * moved;
    t.col(j) = col;
  }
  Eigen::FullPivLU<Matrix> lu(t);
  if (!lu.isInvertible() || smallest_singular_value(t) < 1e-12 * t.norm())
    fail(ErrorKind::kNonInvertibleT, "recovered transition matrix is singular");
  Vector pi = lu.solve(w);
  detail::project_to_simplex_clip(pi);
  return {HmmParams{pi, t, view2_means}, std::sqrt(sq)};
}

/// O from view-3 estimates: E[x2 x3^T] = O diag(w) (O T)^T.
inline Matrix hmm_observation_from_views(const Matrix& pair23, const ModelEstimate& view3) {
  const Matrix right = view3.weights.asDiagonal() * view3.means.transpose();
  return pair23 * pseudo_inverse(right);
}

// ---------------------------------------------------------------------------
// Random coordinate partition into three views.

struct ThreeViewSplit {
  std::array<std::vector<Index>, 3> groups;
  std::optional<Matrix> rotation;  // applied before partitioning
  Index dim = 0;
};

/// Each coordinate lands in one of three groups uniformly at random,
/// redrawn until every group holds at least k coordinates (1 when k is not
/// given). With rotate, a Haar-random orthogonal matrix is applied first.
inline ThreeViewSplit random_three_views(Index n, std::uint64_t seed, bool rotate = false,
                                         std::optional<Index> k = std::nullopt) {
  if (n < 3) fail(ErrorKind::kTooFewDimensions, "need at least 3 coordinates to form three views");
  if (k && n < 3 * *k) fail(ErrorKind::kTooFewDimensions, "three views of size k need n >= 3k");
  const std::size_t min_size = static_cast<std::size_t>(k ? std::max<Index>(*k, 1) : 1);
  ThreeViewSplit split;
  split.dim = n;
  Rng rng = make_stream(seed, 0x76696577ULL);
  if (rotate) split.rotation = haar_orthogonal(n, rng);
  std::uniform_int_distribution<int> pick(0, 2);
  for (;;) {
    for (auto& g : split.groups) g.clear();
    for (Index i = 0; i < n; ++i) split.groups[static_cast<std::size_t>(pick(rng))].push_back(i);
    if (std::all_of(split.groups.begin(), split.groups.end(),
                    [&](const auto& g) { return g.size() >= min_size; }))
      break;
  }
  return split;
}

inline std::array<Vector, 3> apply_split(const ThreeViewSplit& split, const Vector& x) {
  require_dims(x.size() == split.dim, "apply_split: vector length != split dimension");
  const Vector y = split.rotation ? Vector(*split.rotation * x) : x;
  std::array<Vector, 3> out;
  for (std::size_t g = 0; g < 3; ++g) {
    out[g].resize(static_cast<Index>(split.groups[g].size()));
    for (std::size_t i = 0; i < split.groups[g].size(); ++i) out[g](static_cast<Index>(i)) = y(split.groups[g][i]);
  }
  return out;
}

/// Row selection of a d x k mean matrix for each view.
inline std::array<Matrix, 3> split_means(const ThreeViewSplit& split, const Matrix& means) {
  require_dims(means.rows() == split.dim, "split_means: row count != split dimension");
  const Matrix rotated = split.rotation ? Matrix(*split.rotation * means) : means;
  std::array<Matrix, 3> out;
  for (std::size_t g = 0; g < 3; ++g) {
    out[g].resize(static_cast<Index>(split.groups[g].size()), means.cols());
    for (std::size_t i = 0; i < split.groups[g].size(); ++i)
      out[g].row(static_cast<Index>(i)) = rotated.row(split.groups[g][i]);
  }
  return out;
}

}  // namespace tlvm
