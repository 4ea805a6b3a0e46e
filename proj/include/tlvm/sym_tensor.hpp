#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"

namespace tlvm {

/// A weighted rank-one symmetric term  weight * v (x) v (x) v.
struct RankOneTerm {
  double weight = 0.0;
  Vector vector;
};

/// Ordered collection of rank-one terms with (ideally) orthonormal vectors
/// and positive weights.
struct OrthoDecomposition {
  Index dim = 0;
  std::vector<RankOneTerm> terms;

  Vector weights() const {
    Vector w(static_cast<Index>(terms.size()));
    for (std::size_t i = 0; i < terms.size(); ++i)
      w(static_cast<Index>(i)) = terms[i].weight;
    return w;
  }

  /// Vectors as the columns of a dim x (#terms) matrix.
  Matrix vectors() const {
    Matrix v(dim, static_cast<Index>(terms.size()));
    for (std::size_t i = 0; i < terms.size(); ++i)
      v.col(static_cast<Index>(i)) = terms[i].vector;
    return v;
  }
};

namespace detail {
struct TensorAccess;
}

/// Dense symmetric third-order tensor with full dim^3 row-major storage.
///
/// Every instance is exactly symmetric: entry (i,j,l) is bit-identical to
/// each of its permutations. Instances are immutable once built.
class SymTensor3 {
 public:
  /// Zero tensor.
  explicit SymTensor3(Index dim) : dim_(dim) {
    if (dim < 1) fail(ErrorKind::kInvalidArgument, "SymTensor3: dim must be >= 1");
    entries_.assign(static_cast<std::size_t>(dim * dim * dim), 0.0);
  }

  /// Builds a tensor from an arbitrary cube, symmetrizing it. Index triples
  /// whose six permuted values already agree are kept bit-for-bit; otherwise
  /// all six receive their average.
  static SymTensor3 from_cube(Index dim, std::vector<double> cube) {
    if (dim < 1) fail(ErrorKind::kInvalidArgument, "SymTensor3: dim must be >= 1");
    require_dims(cube.size() == static_cast<std::size_t>(dim * dim * dim),
                 "SymTensor3::from_cube: expected dim^3 entries");
    for (double x : cube)
      if (!std::isfinite(x))
        fail(ErrorKind::kInvalidArgument, "SymTensor3: non-finite entry");
    SymTensor3 t(dim, std::move(cube), 0);
    t.symmetrize_in_place();
    return t;
  }

  Index dim() const noexcept { return dim_; }

  double operator()(Index i, Index j, Index l) const {
    return entries_[offset(i, j, l)];
  }

  std::span<const double> entries() const noexcept { return entries_; }

  /// Mode-1 unfolding viewed as a (dim^2 x dim) column-major matrix whose
  /// column i is the slice T(i,:,:) flattened as j*dim+l.
  Eigen::Map<const Matrix> slice_stack() const {
    return Eigen::Map<const Matrix>(entries_.data(), dim_ * dim_, dim_);
  }

  friend SymTensor3 operator+(const SymTensor3& a, const SymTensor3& b) {
    require_dims(a.dim_ == b.dim_, "tensor sum: dimension mismatch");
    SymTensor3 out = a;
    for (std::size_t i = 0; i < out.entries_.size(); ++i) out.entries_[i] += b.entries_[i];
    return out;
  }

  friend SymTensor3 operator-(const SymTensor3& a, const SymTensor3& b) {
    require_dims(a.dim_ == b.dim_, "tensor difference: dimension mismatch");
    SymTensor3 out = a;
    for (std::size_t i = 0; i < out.entries_.size(); ++i) out.entries_[i] -= b.entries_[i];
    return out;
  }

  friend SymTensor3 operator*(double s, const SymTensor3& a) {
    SymTensor3 out = a;
    for (double& x : out.entries_) x *= s;
    return out;
  }

  friend bool operator==(const SymTensor3& a, const SymTensor3& b) {
    return a.dim_ == b.dim_ && a.entries_ == b.entries_;
  }

 private:
  friend struct detail::TensorAccess;

  SymTensor3(Index dim, std::vector<double> entries, int /*trusted*/)
      : dim_(dim), entries_(std::move(entries)) {}

  std::size_t offset(Index i, Index j, Index l) const {
    return static_cast<std::size_t>((i * dim_ + j) * dim_ + l);
  }

  void symmetrize_in_place() {
    for (Index i = 0; i < dim_; ++i)
      for (Index j = i; j < dim_; ++j)
        for (Index l = j; l < dim_; ++l) {
          const std::array<std::size_t, 6> idx = {
              offset(i, j, l), offset(i, l, j), offset(j, i, l),
              offset(j, l, i), offset(l, i, j), offset(l, j, i)};
          const double first = entries_[idx[0]];
          bool same = true;
          double sum = 0.0;
          for (std::size_t p : idx) {
            same = same && entries_[p] == first;
            sum += entries_[p];
          }
          const double value = same ? first : sum / 6.0;
          for (std::size_t p : idx) entries_[p] = value;
        }
  }

  Index dim_;
  std::vector<double> entries_;
};

namespace detail {

/// Construction path for operations that produce exactly symmetric data by
/// writing every permutation of each unique entry.
struct TensorAccess {
  static SymTensor3 wrap(Index dim, std::vector<double> entries) {
    return SymTensor3(dim, std::move(entries), 0);
  }
};

template <class F>
SymTensor3 build_symmetric(Index dim, F&& unique_entry) {
  std::vector<double> e(static_cast<std::size_t>(dim * dim * dim));
  auto at = [dim](Index a, Index b, Index c) {
    return static_cast<std::size_t>((a * dim + b) * dim + c);
  };
  for (Index i = 0; i < dim; ++i)
    for (Index j = i; j < dim; ++j)
      for (Index l = j; l < dim; ++l) {
        const double v = unique_entry(i, j, l);
        e[at(i, j, l)] = v;
        e[at(i, l, j)] = v;
        e[at(j, i, l)] = v;
        e[at(j, l, i)] = v;
        e[at(l, i, j)] = v;
        e[at(l, j, i)] = v;
      }
  return TensorAccess::wrap(dim, std::move(e));
}

}  // namespace detail

/// Sum_i weight_i v_i (x) v_i (x) v_i. An empty list gives the zero tensor.
inline SymTensor3 from_rank_one_sum(std::span<const RankOneTerm> terms, Index dim) {
  for (const auto& t : terms)
    require_dims(t.vector.size() == dim, "from_rank_one_sum: vector length != dim");
  Matrix v(dim, static_cast<Index>(terms.size()));
  Vector w(static_cast<Index>(terms.size()));
  for (std::size_t r = 0; r < terms.size(); ++r) {
    v.col(static_cast<Index>(r)) = terms[r].vector;
    w(static_cast<Index>(r)) = terms[r].weight;
  }
  return detail::build_symmetric(dim, [&](Index i, Index j, Index l) {
    double s = 0.0;
    for (Index r = 0; r < v.cols(); ++r) s += w(r) * v(i, r) * v(j, r) * v(l, r);
    return s;
  });
}

inline SymTensor3 from_rank_one_sum(const OrthoDecomposition& d) {
  return from_rank_one_sum(d.terms, d.dim);
}

/// T(I, u, u).
inline Vector contract_vv(const SymTensor3& t, const Vector& u) {
  require_dims(u.size() == t.dim(), "contract_vv: vector length != dim");
  const Index k = t.dim();
  Vector uu(k * k);
  for (Index j = 0; j < k; ++j) uu.segment(j * k, k) = u(j) * u;
  return t.slice_stack().transpose() * uu;
}

/// T(u, u, u).
inline double contract_uuu(const SymTensor3& t, const Vector& u) {
  return u.dot(contract_vv(t, u));
}

/// T(I, I, u) as a symmetric dim x dim matrix.
inline Matrix contract_v(const SymTensor3& t, const Vector& u) {
  require_dims(u.size() == t.dim(), "contract_v: vector length != dim");
  const Index k = t.dim();
  Eigen::Map<const Matrix> unfold(t.entries().data(), k, k * k);
  const Vector flat = unfold.transpose() * u;  // index i*k + j
  Matrix m(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) m(i, j) = flat(i * k + j);
  return m;
}

/// Multilinear transform T(W, W, W) for a d x k matrix W; result has dim k.
inline SymTensor3 contract_matrix(const SymTensor3& t, const Matrix& w) {
  require_dims(w.rows() == t.dim(), "contract_matrix: W rows != dim");
  if (w.cols() < 1) fail(ErrorKind::kInvalidArgument, "contract_matrix: W has no columns");
  const Index d = t.dim();
  const Index k = w.cols();
  // first mode: (k x d^2), column (j*d+l)
  Eigen::Map<const Matrix> unfold(t.entries().data(), d * d, d);
  const Matrix first = w.transpose() * unfold.transpose();
  std::vector<double> cube(static_cast<std::size_t>(k * k * k));
  Matrix slice(d, d);
  for (Index a = 0; a < k; ++a) {
    for (Index j = 0; j < d; ++j)
      for (Index l = 0; l < d; ++l) slice(j, l) = first(a, j * d + l);
    const Matrix reduced = w.transpose() * slice * w;
    for (Index b = 0; b < k; ++b)
      for (Index c = 0; c < k; ++c)
        cube[static_cast<std::size_t>((a * k + b) * k + c)] = reduced(b, c);
  }
  return SymTensor3::from_cube(k, std::move(cube));
}

/// T - weight * v^{(x)3}. The input is not modified.
inline SymTensor3 deflate(const SymTensor3& t, const RankOneTerm& term) {
  require_dims(term.vector.size() == t.dim(), "deflate: vector length != dim");
  if (term.weight == 0.0) return t;
  const Vector& v = term.vector;
  const double lambda = term.weight;
  return detail::build_symmetric(t.dim(), [&](Index i, Index j, Index l) {
    return t(i, j, l) - lambda * v(i) * v(j) * v(l);
  });
}

inline double frobenius_norm(const SymTensor3& t) {
  double s = 0.0;
  for (double x : t.entries()) s += x * x;
  return std::sqrt(s);
}

/// Lower-bound estimate of the operator norm sup_{|theta|=1} |T(theta,theta,theta)|.
///
/// Each restart starts from a seeded uniform point, runs `iters` plain power
/// map steps and then `iters` shifted steps from the best point seen, with
/// shift twice the best value of that restart. Every evaluated
/// |T(theta,theta,theta)| is a valid lower bound and only the maximum is
/// kept. For odd order T(-x,-x,-x) = -T(x,x,x), so tracking the absolute
/// value covers both +T and -T.
inline double op_norm_estimate(const SymTensor3& t, int restarts, int iters,
                               std::uint64_t seed) {
  if (restarts < 1 || iters < 1)
    fail(ErrorKind::kInvalidArgument, "op_norm_estimate: restarts and iters must be >= 1");
  if (frobenius_norm(t) == 0.0) return 0.0;
  double best = 0.0;
  for (int r = 0; r < restarts; ++r) {
    Rng rng = make_stream(seed, 0x6f706e6f726dULL, static_cast<std::uint64_t>(r));
    Vector theta = uniform_sphere(t.dim(), rng);
    Vector best_theta = theta;
    double best_here = std::abs(contract_uuu(t, theta));
    for (int it = 0; it < iters; ++it) {
      Vector next = contract_vv(t, theta);
      const double n = next.norm();
      if (n == 0.0) break;
      theta = next / n;
      const double val = std::abs(contract_uuu(t, theta));
      if (val > best_here) {
        best_here = val;
        best_theta = theta;
      }
    }
    // Shifted ascent on whichever sign is larger at the best point.
    theta = best_theta;
    const double sign = contract_uuu(t, theta) >= 0 ? 1.0 : -1.0;
    const double shift = 2.0 * best_here;
    for (int it = 0; it < iters; ++it) {
      Vector next = sign * contract_vv(t, theta) + shift * theta;
      const double n = next.norm();
      if (n == 0.0) break;
      Vector prev = theta;
      theta = next / n;
      const double val = std::abs(contract_uuu(t, theta));
      best_here = std::max(best_here, val);
      if ((theta - prev).norm() < 1e-15) break;
    }
    best = std::max(best, best_here);
  }
  return best;
}

}  // namespace tlvm
