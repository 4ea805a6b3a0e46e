#pragma once

// Naive reference implementations used only by tests. They share no code
// with the library beyond the SymTensor3 element accessor.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

#include "tlvm/corpus.hpp"
#include "tlvm/sym_tensor.hpp"

namespace oracle {

using tlvm::Index;
using tlvm::Matrix;
using tlvm::Vector;

/// Plain k x k x k cube.
struct Cube {
  Index n = 0;
  std::vector<double> v;

  explicit Cube(Index dim) : n(dim), v(static_cast<std::size_t>(dim * dim * dim), 0.0) {}
  double& operator()(Index i, Index j, Index l) { return v[static_cast<std::size_t>((i * n + j) * n + l)]; }
  double operator()(Index i, Index j, Index l) const {
    return v[static_cast<std::size_t>((i * n + j) * n + l)];
  }
};

inline Cube to_cube(const tlvm::SymTensor3& t) {
  Cube c(t.dim());
  for (Index i = 0; i < t.dim(); ++i)
    for (Index j = 0; j < t.dim(); ++j)
      for (Index l = 0; l < t.dim(); ++l) c(i, j, l) = t(i, j, l);
  return c;
}

inline Vector contract_vv(const Cube& t, const Vector& u) {
  Vector out = Vector::Zero(t.n);
  for (Index i = 0; i < t.n; ++i)
    for (Index j = 0; j < t.n; ++j)
      for (Index l = 0; l < t.n; ++l) out(i) += t(i, j, l) * u(j) * u(l);
  return out;
}

inline double contract_uuu(const Cube& t, const Vector& u) {
  double s = 0.0;
  for (Index i = 0; i < t.n; ++i)
    for (Index j = 0; j < t.n; ++j)
      for (Index l = 0; l < t.n; ++l) s += t(i, j, l) * u(i) * u(j) * u(l);
  return s;
}

/// T(W, W, W) by the defining six-fold sum.
inline Cube contract_matrix(const Cube& t, const Matrix& w) {
  const Index k = w.cols();
  Cube out(k);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < k; ++b)
      for (Index c = 0; c < k; ++c) {
        double s = 0.0;
        for (Index i = 0; i < t.n; ++i)
          for (Index j = 0; j < t.n; ++j)
            for (Index l = 0; l < t.n; ++l) s += t(i, j, l) * w(i, a) * w(j, b) * w(l, c);
        out(a, b, c) = s;
      }
  return out;
}

inline double frobenius(const Cube& t) {
  double s = 0.0;
  for (double x : t.v) s += x * x;
  return std::sqrt(s);
}

inline double max_abs_diff(const Cube& a, const tlvm::SymTensor3& b) {
  double m = 0.0;
  for (Index i = 0; i < a.n; ++i)
    for (Index j = 0; j < a.n; ++j)
      for (Index l = 0; l < a.n; ++l) m = std::max(m, std::abs(a(i, j, l) - b(i, j, l)));
  return m;
}

inline double frobenius_diff(const tlvm::SymTensor3& a, const tlvm::SymTensor3& b) {
  double s = 0.0;
  for (Index i = 0; i < a.dim(); ++i)
    for (Index j = 0; j < a.dim(); ++j)
      for (Index l = 0; l < a.dim(); ++l) s += std::pow(a(i, j, l) - b(i, j, l), 2);
  return std::sqrt(s);
}

/// sum_i w_i mu_i^{(x)3} by explicit loops.
inline Cube weighted_cubes(const Vector& w, const Matrix& mu) {
  Cube c(mu.rows());
  for (Index r = 0; r < w.size(); ++r)
    for (Index i = 0; i < mu.rows(); ++i)
      for (Index j = 0; j < mu.rows(); ++j)
        for (Index l = 0; l < mu.rows(); ++l) c(i, j, l) += w(r) * mu(i, r) * mu(j, r) * mu(l, r);
  return c;
}

// ---------------------------------------------------------------------------
// Word-position brute force for one document.

inline std::vector<Index> positions(const tlvm::SparseDoc& doc) {
  std::vector<Index> words;
  for (std::size_t i = 0; i < doc.words.size(); ++i)
    for (int c = 0; c < static_cast<int>(doc.counts[i]); ++c) words.push_back(doc.words[i]);
  return words;
}

/// Average of e_x e_y^T over ordered pairs of distinct positions.
inline Matrix doc_m2(const tlvm::SparseDoc& doc, Index d) {
  const auto w = positions(doc);
  Matrix m = Matrix::Zero(d, d);
  double count = 0;
  for (std::size_t a = 0; a < w.size(); ++a)
    for (std::size_t b = 0; b < w.size(); ++b)
      if (a != b) {
        m(w[a], w[b]) += 1;
        count += 1;
      }
  return m / count;
}

/// Average of e_x e_y e_z over ordered triples of distinct positions.
inline Cube doc_m3(const tlvm::SparseDoc& doc, Index d) {
  const auto w = positions(doc);
  Cube c(d);
  double count = 0;
  for (std::size_t a = 0; a < w.size(); ++a)
    for (std::size_t b = 0; b < w.size(); ++b)
      for (std::size_t e = 0; e < w.size(); ++e)
        if (a != b && a != e && b != e) {
          c(w[a], w[b], w[e]) += 1;
          count += 1;
        }
  for (double& x : c.v) x /= count;
  return c;
}

// ---------------------------------------------------------------------------
// Gaussian moments by two-point Gauss-Hermite quadrature, which is exact for
// polynomials of degree <= 3 in each coordinate.

/// E[x_a x_b x_c] for x ~ N(mu, s2 I).
inline double gaussian_third(const Vector& mu, double s2, Index a, Index b, Index c) {
  const double s = std::sqrt(s2);
  const std::array<double, 2> nodes{-1.0, 1.0};  // probabilists' nodes, weights 1/2
  std::array<int, 64> power{};
  power[static_cast<std::size_t>(a)]++;
  power[static_cast<std::size_t>(b)]++;
  power[static_cast<std::size_t>(c)]++;
  double prod = 1.0;
  for (Index i = 0; i < mu.size(); ++i) {
    const int p = power[static_cast<std::size_t>(i)];
    if (p == 0) continue;
    double e = 0.0;
    for (double z : nodes) e += 0.5 * std::pow(mu(i) + s * z, p);
    prod *= e;
  }
  return prod;
}

/// E[x_a x_b] for x ~ N(mu, s2 I).
inline double gaussian_second(const Vector& mu, double s2, Index a, Index b) {
  return mu(a) * mu(b) + (a == b ? s2 : 0.0);
}

}  // namespace oracle
