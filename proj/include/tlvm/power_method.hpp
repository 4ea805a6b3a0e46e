#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/sym_tensor.hpp"

namespace tlvm {

struct PowerConfig {
  int restarts = 150;           // L
  int iters = 33;               // N
  double convergence_tol = 1e-13;
  std::uint64_t seed = 0;
  std::optional<int> max_factors;
  int threads = 1;              // restart parallelism; never changes results
  int opnorm_restarts = 20;     // residual operator-norm diagnostic
  int opnorm_iters = 50;

  /// L = 100 + 10k, N = 30 + ceil(log2(k + 1)).
  static PowerConfig defaults_for(Index k, std::uint64_t seed = 0) {
    PowerConfig cfg;
    cfg.restarts = 100 + 10 * static_cast<int>(k);
    cfg.iters = 30 + static_cast<int>(std::ceil(std::log2(static_cast<double>(k) + 1.0)));
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    if (restarts < 1) fail(ErrorKind::kInvalidArgument, "restarts must be >= 1");
    if (iters < 1) fail(ErrorKind::kInvalidArgument, "iters must be >= 1");
    if (!(convergence_tol > 0)) fail(ErrorKind::kInvalidArgument, "convergence_tol must be > 0");
    if (threads < 1) fail(ErrorKind::kInvalidArgument, "threads must be >= 1");
  }
};

struct FactorDiagnostics {
  int trials_used = 0;
  double final_power_value = 0.0;
  bool sign_flipped = false;
};

struct DecompositionReport {
  OrthoDecomposition decomposition;
  SymTensor3 residual;
  std::vector<FactorDiagnostics> per_factor;
  double residual_frobenius = 0.0;
  double residual_opnorm_estimate = 0.0;
};

namespace detail {

inline double zero_threshold(double tensor_scale) {
  return std::max(std::numeric_limits<double>::min(),
                  1e-14 * tensor_scale);
}

/// power_step with the degeneracy threshold precomputed.
inline std::optional<Vector> try_power_step(const SymTensor3& t, const Vector& theta,
                                            double threshold) {
  Vector next = contract_vv(t, theta);
  const double n = next.norm();
  if (!(n > threshold)) return std::nullopt;
  return Vector(next / n);
}

struct ConvergeResult {
  Vector theta;
  int iters_used = 0;
};

inline std::optional<ConvergeResult> try_converge(const SymTensor3& t, Vector theta,
                                                  int n_iters, double tol,
                                                  double threshold) {
  int used = 0;
  for (int it = 0; it < n_iters; ++it) {
    auto next = try_power_step(t, theta, threshold);
    if (!next) return std::nullopt;
    ++used;
    const double change = (*next - theta).norm();
    theta = std::move(*next);
    if (change <= tol) break;
  }
  return ConvergeResult{std::move(theta), used};
}

/// Runs body(i) for i in [0, n) over `threads` workers. Each index is handled
/// by exactly one worker, so per-index results do not depend on `threads`.
template <class F>
void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) body(i);
    });
}

}  // namespace detail

/// theta -> T(I,theta,theta) / |T(I,theta,theta)|.
inline Vector power_step(const SymTensor3& t, const Vector& theta) {
  require_dims(theta.size() == t.dim(), "power_step: vector length != dim");
  auto next = detail::try_power_step(t, theta, detail::zero_threshold(frobenius_norm(t)));
  if (!next) fail(ErrorKind::kZeroContraction, "T(I,theta,theta) vanishes at this start");
  return *next;
}

struct PowerConvergence {
  Vector theta;
  int iters_used = 0;
};

/// Up to n_iters power steps, stopping once successive iterates are within tol.
inline PowerConvergence power_converge(const SymTensor3& t, const Vector& theta0,
                                       int n_iters, double tol) {
  require_dims(theta0.size() == t.dim(), "power_converge: vector length != dim");
  if (n_iters < 1) fail(ErrorKind::kInvalidArgument, "power_converge: N must be >= 1");
  auto r = detail::try_converge(t, theta0, n_iters, tol,
                                detail::zero_threshold(frobenius_norm(t)));
  if (!r) fail(ErrorKind::kZeroContraction, "T(I,theta,theta) vanishes along the iteration");
  return {std::move(r->theta), r->iters_used};
}

struct Extraction {
  RankOneTerm term;
  SymTensor3 deflated;
  FactorDiagnostics diagnostics;
};

/// One call of the robust power method: L seeded restarts of N steps, keep
/// the restart with the largest T(theta,theta,theta) (smallest index on
/// ties), refine it with N more steps, and deflate. The returned weight keeps
/// the sign it was computed with.
inline Extraction extract_one(const SymTensor3& t, const PowerConfig& cfg,
                              std::uint64_t factor_index = 0) {
  cfg.validate();
  const double threshold = detail::zero_threshold(frobenius_norm(t));
  const int L = cfg.restarts;
  std::vector<std::optional<Vector>> finals(static_cast<std::size_t>(L));
  std::vector<double> values(static_cast<std::size_t>(L),
                             -std::numeric_limits<double>::infinity());

  detail::parallel_for(L, cfg.threads, [&](int tau) {
    Rng rng = make_stream(cfg.seed, factor_index, static_cast<std::uint64_t>(tau));
    Vector theta0 = uniform_sphere(t.dim(), rng);
    auto r = detail::try_converge(t, std::move(theta0), cfg.iters,
                                  cfg.convergence_tol, threshold);
    if (!r) return;
    values[static_cast<std::size_t>(tau)] = contract_uuu(t, r->theta);
    finals[static_cast<std::size_t>(tau)] = std::move(r->theta);
  });

  int best = -1;
  for (int tau = 0; tau < L; ++tau) {
    if (!finals[static_cast<std::size_t>(tau)]) continue;
    if (best < 0 || values[static_cast<std::size_t>(tau)] > values[static_cast<std::size_t>(best)])
      best = tau;
  }
  if (best < 0)
    fail(ErrorKind::kAllRestartsDegenerate,
         "every restart hit a vanishing contraction (factor " + std::to_string(factor_index) + ")",
         static_cast<std::size_t>(factor_index));

  auto refined = detail::try_converge(t, *finals[static_cast<std::size_t>(best)], cfg.iters,
                                      cfg.convergence_tol, threshold);
  if (!refined)
    fail(ErrorKind::kAllRestartsDegenerate, "refinement hit a vanishing contraction",
         static_cast<std::size_t>(factor_index));
  const double lambda = contract_uuu(t, refined->theta);
  RankOneTerm term{lambda, refined->theta};
  SymTensor3 deflated = deflate(t, term);
  return {std::move(term), std::move(deflated), FactorDiagnostics{L, lambda, false}};
}

namespace detail {

inline void flip_negative(RankOneTerm& term, FactorDiagnostics& diag) {
  if (term.weight < 0) {
    term.weight = -term.weight;
    term.vector = -term.vector;
    diag.sign_flipped = true;
  }
}

inline DecompositionReport finish_report(Index dim, std::vector<RankOneTerm> terms,
                                         std::vector<FactorDiagnostics> diags,
                                         SymTensor3 residual, const PowerConfig& cfg) {
  DecompositionReport rep{OrthoDecomposition{dim, std::move(terms)}, std::move(residual),
                          std::move(diags), 0.0, 0.0};
  rep.residual_frobenius = frobenius_norm(rep.residual);
  rep.residual_opnorm_estimate =
      op_norm_estimate(rep.residual, cfg.opnorm_restarts, cfg.opnorm_iters,
                       cfg.seed ^ 0x7265736964ULL);
  return rep;
}

inline void check_rank_request(const SymTensor3& t, Index k, const PowerConfig& cfg) {
  cfg.validate();
  if (k < 1) fail(ErrorKind::kInvalidArgument, "k must be >= 1");
  if (k > t.dim()) fail(ErrorKind::kInvalidArgument, "k exceeds tensor dimension");
}

inline Index factor_count(Index k, const PowerConfig& cfg) {
  return cfg.max_factors ? std::min<Index>(k, *cfg.max_factors) : k;
}

}  // namespace detail

/// k sequential extractions on successively deflated tensors. Negative
/// weights are reported as (|lambda|, -theta), flagged in the diagnostics.
inline DecompositionReport robust_decompose(const SymTensor3& t, Index k,
                                            const PowerConfig& cfg) {
  detail::check_rank_request(t, k, cfg);
  std::vector<RankOneTerm> terms;
  std::vector<FactorDiagnostics> diags;
  SymTensor3 work = t;
  const Index n = detail::factor_count(k, cfg);
  for (Index j = 0; j < n; ++j) {
    Extraction ex = extract_one(work, cfg, static_cast<std::uint64_t>(j));
    detail::flip_negative(ex.term, ex.diagnostics);
    terms.push_back(std::move(ex.term));
    diags.push_back(ex.diagnostics);
    work = std::move(ex.deflated);
  }
  return detail::finish_report(t.dim(), std::move(terms), std::move(diags), std::move(work), cfg);
}

/// |T(theta,theta,theta)| >= max{ |T|_F / (2 sqrt(r)), |T(I,I,theta)|_F / 1.05 }.
inline bool stopping_condition_holds(const SymTensor3& t, const Vector& theta, Index r) {
  const double value = std::abs(contract_uuu(t, theta));
  const double by_rank = frobenius_norm(t) / (2.0 * std::sqrt(static_cast<double>(std::max<Index>(r, 1))));
  const double by_slice = contract_v(t, theta).norm() / 1.05;
  return value >= std::max(by_rank, by_slice);
}

/// Variant that redraws starts until the stopping condition accepts one
/// (expected rank r = k - #deflations), capped at 32 L attempts per factor.
/// Attempts are evaluated in batches; the accepted attempt is always the
/// smallest index that satisfies the condition.
inline DecompositionReport decompose_with_stopping(const SymTensor3& t, Index k,
                                                   const PowerConfig& cfg) {
  detail::check_rank_request(t, k, cfg);
  std::vector<RankOneTerm> terms;
  std::vector<FactorDiagnostics> diags;
  SymTensor3 work = t;
  const Index n = detail::factor_count(k, cfg);
  const long cap = 32L * cfg.restarts;
  const int batch = std::max(cfg.threads, 1);
  for (Index j = 0; j < n; ++j) {
    const Index r = k - j;
    const double threshold = detail::zero_threshold(frobenius_norm(work));
    std::optional<Vector> accepted;
    long accepted_at = -1;
    for (long start = 0; start < cap && !accepted; start += batch) {
      const int count = static_cast<int>(std::min<long>(batch, cap - start));
      std::vector<std::optional<Vector>> ok(static_cast<std::size_t>(count));
      detail::parallel_for(count, cfg.threads, [&](int b) {
        const auto attempt = static_cast<std::uint64_t>(start + b);
        Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(j), attempt);
        auto res = detail::try_converge(work, uniform_sphere(work.dim(), rng), cfg.iters,
                                        cfg.convergence_tol, threshold);
        if (res && stopping_condition_holds(work, res->theta, r))
          ok[static_cast<std::size_t>(b)] = std::move(res->theta);
      });
      for (int b = 0; b < count; ++b)
        if (ok[static_cast<std::size_t>(b)]) {
          accepted = std::move(ok[static_cast<std::size_t>(b)]);
          accepted_at = start + b;
          break;
        }
    }
    if (!accepted)
      fail(ErrorKind::kStoppingNeverSatisfied,
           "no start satisfied the stopping condition for factor " + std::to_string(j),
           static_cast<std::size_t>(j));
    auto refined = detail::try_converge(work, *accepted, cfg.iters, cfg.convergence_tol, threshold);
    if (!refined)
      fail(ErrorKind::kStoppingNeverSatisfied, "refinement hit a vanishing contraction",
           static_cast<std::size_t>(j));
    const double lambda = contract_uuu(work, refined->theta);
    RankOneTerm term{lambda, refined->theta};
    FactorDiagnostics diag{static_cast<int>(accepted_at + 1), lambda, false};
    SymTensor3 next = deflate(work, term);
    detail::flip_negative(term, diag);
    terms.push_back(std::move(term));
    diags.push_back(diag);
    work = std::move(next);
  }
  return detail::finish_report(t.dim(), std::move(terms), std::move(diags), std::move(work), cfg);
}

/// Second-derivative test: u is a strict local maximizer of T(u,u,u) on the
/// sphere iff 6 T(I,I,u) - 3 T(u,u,u) I is negative definite on the tangent
/// space of u. Returns true when every tangent eigenvalue is <= -tol.
inline bool check_local_max(const SymTensor3& t, const Vector& u, double tol) {
  require_dims(u.size() == t.dim(), "check_local_max: vector length != dim");
  const double nu = u.norm();
  if (!(nu > 0)) fail(ErrorKind::kInvalidArgument, "check_local_max: zero vector");
  const Vector unit = u / nu;
  if (t.dim() == 1) return true;
  const double lambda = contract_uuu(t, unit);
  const Matrix hess = 6.0 * contract_v(t, unit) -
                      3.0 * lambda * Matrix::Identity(t.dim(), t.dim());
  const Matrix q = orthogonal_complement(unit);
  const Matrix tangent = q.transpose() * hess * q;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (tangent + tangent.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() <= -tol;
}

}  // namespace tlvm
