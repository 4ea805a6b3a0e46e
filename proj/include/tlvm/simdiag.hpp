#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/sym_tensor.hpp"

namespace tlvm {

struct WeightedComponent {
  double weight = 0.0;
  Vector mean;
};

/// Baseline recovery of (w_i, mu_i) from exact M2 = sum w mu mu^T and
/// M3 = sum w mu^{(x)3} by diagonalizing M(eta) = M3(I,I,eta) pinv(M2).
///
/// The eigenproblem is solved on the rank-k range of M2 (U^T M(eta) U, with
/// U the top-k eigenvectors of M2), which has the same nonzero spectrum and
/// eigenvectors. Scales come from M2 and M3 through the dual basis, so no
/// division by mu_i^T eta is needed. Components are ordered by decreasing
/// mu_i^T eta.
inline std::vector<WeightedComponent> simdiag_decompose(
    const Matrix& m2, const SymTensor3& m3, Index k, std::optional<Vector> eta,
    std::uint64_t seed, double gap_tol = 1e-8) {
  const Index d = m2.rows();
  require_dims(m2.cols() == d && m3.dim() == d, "simdiag: M2/M3 dimension mismatch");
  if (k < 1 || k > d) fail(ErrorKind::kInvalidArgument, "simdiag: need 1 <= k <= d");
  Vector direction;
  if (eta) {
    require_dims(eta->size() == d, "simdiag: eta length != d");
    direction = *eta;
  } else {
    Rng rng = make_stream(seed, 0x73696d64ULL);
    direction = uniform_sphere(d, rng);
  }

  const SymEig e2 = sym_eig_desc(0.5 * (m2 + m2.transpose()));
  if (!(e2.values(k - 1) > 1e-12 * std::max(std::abs(e2.values(0)), 1e-300)))
    fail(ErrorKind::kRankDeficient, "simdiag: M2 has rank below k");
  const Matrix u = e2.vectors.leftCols(k);
  const Matrix m2_small = u.transpose() * m2 * u;
  const Matrix m3_eta_small = u.transpose() * contract_v(m3, direction) * u;
  const Matrix pencil = m3_eta_small * m2_small.inverse();

  Eigen::EigenSolver<Matrix> es(pencil);
  if (es.info() != Eigen::Success)
    fail(ErrorKind::kNearDegenerateSpectrum, "simdiag: eigensolver failed");
  const Eigen::VectorXcd evals = es.eigenvalues();
  const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
  for (Index i = 0; i < k; ++i)
    if (std::abs(evals(i).imag()) > gap_tol * scale)
      fail(ErrorKind::kNearDegenerateSpectrum, "simdiag: complex eigenvalues of M(eta)");

  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return evals(a).real() > evals(b).real(); });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const double gap = evals(order[i - 1]).real() - evals(order[i]).real();
    if (gap < gap_tol * scale)
      fail(ErrorKind::kNearDegenerateSpectrum,
           "simdiag: eigenvalues of M(eta) are not separated");
  }

  Matrix dirs(d, k);
  for (Index c = 0; c < k; ++c) {
    Vector y = es.eigenvectors().col(order[static_cast<std::size_t>(c)]).real();
    Vector x = u * y;
    x.normalize();
    fix_sign(x);
    dirs.col(c) = x;
  }
  // M2 = X diag(a) X^T, M3 = sum b_i x_i^{(x)3}, with a = w s^2, b = w s^3.
  const Matrix dual = pseudo_inverse(dirs);  // rows z_i with z_i^T x_j = delta_ij
  std::vector<WeightedComponent> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    const Vector z = dual.row(c).transpose();
    const double a = z.dot(m2 * z);
    const double b = contract_uuu(m3, z);
    if (!(std::abs(a) > 0) || !(std::abs(b) > 0))
      fail(ErrorKind::kNearDegenerateSpectrum, "simdiag: vanishing component scale");
    const double s = b / a;
    out.push_back({a * a * a / (b * b), s * dirs.col(c)});
  }
  return out;
}

}  // namespace tlvm
