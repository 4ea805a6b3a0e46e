#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tlvm/error.hpp"

namespace tlvm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// Independent random stream for (seed, a, b). Every randomized routine
/// derives its streams this way so results never depend on call order or on
/// how work is split across threads.
inline Rng make_stream(std::uint64_t seed, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

inline Vector gaussian_vector(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // column-major fill order is part of the determinism contract
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Uniform draw from the unit sphere in R^n.
inline Vector uniform_sphere(Index n, Rng& rng) {
  for (;;) {
    Vector v = gaussian_vector(n, rng);
    const double norm = v.norm();
    if (norm > 1e-300) return v / norm;
  }
}

/// Flips v so that its largest-magnitude entry (first on ties) is positive.
inline void fix_sign(Eigen::Ref<Vector> v) {
  Index arg = 0;
  double best = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      arg = i;
    }
  }
  if (v.size() > 0 && v(arg) < 0) v = -v;
}

inline void fix_column_signs(Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    Vector col = m.col(j);
    fix_sign(col);
    m.col(j) = col;
  }
}

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // columns match values, sign-fixed
};

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
inline SymEig sym_eig_desc(const Matrix& m) {
  require_dims(m.rows() == m.cols(), "sym_eig_desc: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success)
    fail(ErrorKind::kInvalidArgument, "symmetric eigensolver did not converge");
  const Index n = m.rows();
  SymEig out{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  fix_column_signs(out.vectors);
  return out;
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix with the
/// R-diagonal sign correction.
inline Matrix haar_orthogonal(Index n, Rng& rng) {
  Matrix g = gaussian_matrix(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

/// Orthonormal basis (n x (n-1)) of the complement of unit vector u.
inline Matrix orthogonal_complement(const Vector& u) {
  const Index n = u.size();
  Matrix a(n, n);
  a.col(0) = u;
  a.rightCols(n - 1) = Matrix::Identity(n, n).leftCols(n - 1);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - 1);
}

/// Moore-Penrose pseudoinverse via SVD with a relative cutoff.
inline Matrix pseudo_inverse(const Matrix& m, double rel_cutoff = 1e-12) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_cutoff * s(0) : 0.0;
  Vector inv(s.size());
  for (Index i = 0; i < s.size(); ++i) inv(i) = s(i) > cutoff ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

inline double smallest_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  return s.size() == 0 ? 0.0 : s(s.size() - 1);
}

inline Index numeric_rank(const Matrix& m, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

/// Greedy assignment of estimated columns to true columns by largest
/// |cosine|. Returns perm with perm[j] = index of the truth column matched to
/// estimate column j.
inline std::vector<Index> greedy_match(const Matrix& truth,
                                       const Matrix& estimate) {
  require_dims(truth.rows() == estimate.rows(),
               "greedy_match: row count differs");
  const Index nt = truth.cols();
  const Index ne = estimate.cols();
  Matrix score(ne, nt);
  for (Index j = 0; j < ne; ++j)
    for (Index i = 0; i < nt; ++i) {
      const double denom = truth.col(i).norm() * estimate.col(j).norm();
      score(j, i) = denom > 0 ? std::abs(truth.col(i).dot(estimate.col(j))) / denom
                              : 0.0;
    }
  std::vector<Index> perm(static_cast<std::size_t>(ne), -1);
  std::vector<bool> used_truth(static_cast<std::size_t>(nt), false);
  std::vector<bool> used_est(static_cast<std::size_t>(ne), false);
  for (Index round = 0; round < std::min(ne, nt); ++round) {
    double best = -1.0;
    Index bj = -1, bi = -1;
    for (Index j = 0; j < ne; ++j) {
      if (used_est[static_cast<std::size_t>(j)]) continue;
      for (Index i = 0; i < nt; ++i) {
        if (used_truth[static_cast<std::size_t>(i)]) continue;
        if (score(j, i) > best) {
          best = score(j, i);
          bj = j;
          bi = i;
        }
      }
    }
    perm[static_cast<std::size_t>(bj)] = bi;
    used_est[static_cast<std::size_t>(bj)] = true;
    used_truth[static_cast<std::size_t>(bi)] = true;
  }
  return perm;
}

}  // namespace tlvm
