#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/sym_tensor.hpp"
#include "tlvm/tensor_io.hpp"

namespace tlvm {

/// W whitens M2 (W^T M2 W = I_k); B = pinv(W^T) maps whitened vectors back.
struct WhiteningMap {
  Matrix W;
  Matrix B;
  Vector eigvals_used;
  Index rank_k = 0;

  Index observed_dim() const { return W.rows(); }
};

struct ModelEstimate {
  Vector weights;
  Matrix means;  // d x k, column i is mu_i
};

namespace detail {

inline WhiteningMap whitener_from_eig(const Matrix& basis, const Vector& values, Index k) {
  WhiteningMap map;
  map.rank_k = k;
  map.eigvals_used = values.head(k);
  const Vector inv_sqrt = map.eigvals_used.cwiseSqrt().cwiseInverse();
  const Vector sqrt = map.eigvals_used.cwiseSqrt();
  map.W = basis.leftCols(k) * inv_sqrt.asDiagonal();
  map.B = basis.leftCols(k) * sqrt.asDiagonal();
  return map;
}

inline void check_floor(const Vector& values, Index k, double floor) {
  Index effective = 0;
  for (Index i = 0; i < values.size(); ++i)
    if (values(i) > floor) ++effective;
  if (effective < k)
    fail(ErrorKind::kRankDeficient,
         "only " + std::to_string(effective) + " eigenvalues exceed the floor, need " +
             std::to_string(k),
         static_cast<std::size_t>(effective));
}

}  // namespace detail

/// W = U D^{-1/2} from the top-k eigenpairs of M2. The floor defaults to
/// 1e-9 times the largest eigenvalue; eigenvalues at or below it (including
/// negative ones) are an error, never clamped.
inline WhiteningMap build_whitener(const Matrix& m2, Index k,
                                   std::optional<double> eig_floor = std::nullopt) {
  require_dims(m2.rows() == m2.cols(), "build_whitener: M2 must be square");
  if (k < 1 || k > m2.rows())
    fail(ErrorKind::kInvalidArgument, "build_whitener: need 1 <= k <= d");
  const SymEig eig = sym_eig_desc(0.5 * (m2 + m2.transpose()));
  const double floor =
      eig_floor.value_or(1e-9 * std::max(eig.values(0), 0.0));
  detail::check_floor(eig.values, k, floor);
  return detail::whitener_from_eig(eig.vectors, eig.values, k);
}

/// M3(W, W, W).
inline SymTensor3 whiten_tensor(const SymTensor3& m3, const WhiteningMap& map) {
  require_dims(m3.dim() == map.W.rows(), "whiten_tensor: M3 dim != W rows");
  return contract_matrix(m3, map.W);
}

/// Eigenpairs (lambda, v) of the whitened tensor to parameters:
/// mu = lambda B v, w = 1 / lambda^2. Order is preserved.
inline ModelEstimate unwhiten(const OrthoDecomposition& decomp, const WhiteningMap& map) {
  const Index k = static_cast<Index>(decomp.terms.size());
  ModelEstimate est{Vector(k), Matrix(map.B.rows(), k)};
  for (Index i = 0; i < k; ++i) {
    const auto& term = decomp.terms[static_cast<std::size_t>(i)];
    require_dims(term.vector.size() == map.B.cols(), "unwhiten: vector length != k");
    if (!(term.weight > 0))
      fail(ErrorKind::kNonpositiveEigenvalue,
           "eigenvalue " + std::to_string(i) + " is not positive");
    est.means.col(i) = term.weight * (map.B * term.vector);
    est.weights(i) = 1.0 / (term.weight * term.weight);
  }
  return est;
}

/// M3(u,u,u) / M2(u,u)^{3/2}; invariant to positive rescaling of u.
inline double skewness_objective(const Matrix& m2, const SymTensor3& m3, const Vector& u) {
  require_dims(m2.rows() == u.size() && m3.dim() == u.size(),
               "skewness_objective: dimension mismatch");
  const double quad = u.dot(m2 * u);
  if (!(quad > 0)) fail(ErrorKind::kDegenerateDirection, "M2(u,u) <= 0");
  return contract_uuu(m3, u) / std::pow(quad, 1.5);
}

inline void save_whitening(const std::string& path, const WhiteningMap& map) {
  io::Bundle b;
  b.put_matrix("W", map.W);
  b.put_matrix("B", map.B);
  b.put_vector("eigvals", map.eigvals_used);
  b.save(path);
}

inline WhiteningMap load_whitening(const std::string& path) {
  const io::Bundle b = io::Bundle::load(path);
  WhiteningMap map;
  map.W = b.get_matrix("W");
  map.B = b.get_matrix("B");
  map.eigvals_used = b.get_vector("eigvals");
  map.rank_k = map.W.cols();
  return map;
}

}  // namespace tlvm
