#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tlvm/corpus.hpp"
#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/moments.hpp"
#include "tlvm/multiview.hpp"
#include "tlvm/power_method.hpp"
#include "tlvm/simdiag.hpp"
#include "tlvm/synth.hpp"
#include "tlvm/whitening.hpp"

namespace tlvm {

enum class Algorithm { kFixed, kStopping, kSimdiag };

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kFixed: return "fixed";
    case Algorithm::kStopping: return "stopping";
    case Algorithm::kSimdiag: return "simdiag";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (Algorithm a : {Algorithm::kFixed, Algorithm::kStopping, Algorithm::kSimdiag})
    if (algorithm_name(a) == s) return a;
  fail(ErrorKind::kUsage, "unknown algorithm '" + s + "'");
}

/// Wall-clock stage timings in milliseconds, in the order recorded.
class StageTimer {
 public:
  template <class F>
  auto time(const std::string& stage, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      record(stage, start);
    } else {
      auto result = f();
      record(stage, start);
      return result;
    }
  }

  const std::vector<std::pair<std::string, double>>& stages() const { return stages_; }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
    stages_.emplace_back(stage, ms.count());
  }

  std::vector<std::pair<std::string, double>> stages_;
};

struct PipelineOptions {
  Index k = 1;
  PowerConfig power;
  Algorithm algorithm = Algorithm::kFixed;
  std::optional<double> alpha0;
  std::optional<Index> sketch_cols;  // topic corpora: randomized whitening
};

struct PipelineResult {
  ModelEstimate estimate;
  std::optional<DecompositionReport> report;
  std::optional<double> renormalization;  // sum of raw weights before renormalizing
  nlohmann::json extras = nlohmann::json::object();
  StageTimer timer;
};

namespace detail {

inline ModelEstimate from_components(const std::vector<WeightedComponent>& comps, Index d) {
  const Index k = static_cast<Index>(comps.size());
  ModelEstimate est{Vector(k), Matrix(d, k)};
  for (Index i = 0; i < k; ++i) {
    est.weights(i) = comps[static_cast<std::size_t>(i)].weight;
    est.means.col(i) = comps[static_cast<std::size_t>(i)].mean;
  }
  return est;
}

inline DecompositionReport run_decomposition(const SymTensor3& t, const PipelineOptions& opts) {
  return opts.algorithm == Algorithm::kStopping ? decompose_with_stopping(t, opts.k, opts.power)
                                                : robust_decompose(t, opts.k, opts.power);
}

/// Whiten, decompose, unwhiten; or the simultaneous-diagonalization baseline.
inline void decompose_pair(const Matrix& m2, const SymTensor3& m3, const PipelineOptions& opts,
                           PipelineResult& out) {
  if (opts.algorithm == Algorithm::kSimdiag) {
    const auto comps = out.timer.time("decompose", [&] {
      return simdiag_decompose(m2, m3, opts.k, std::nullopt, opts.power.seed);
    });
    out.estimate = from_components(comps, m2.rows());
    return;
  }
  const WhiteningMap map = out.timer.time("whiten", [&] { return build_whitener(m2, opts.k); });
  const SymTensor3 t = out.timer.time("whiten_tensor", [&] { return whiten_tensor(m3, map); });
  out.report = out.timer.time("decompose", [&] { return run_decomposition(t, opts); });
  out.estimate = unwhiten(out.report->decomposition, map);
}

inline void renormalize_weights(PipelineResult& out) {
  const double s = out.estimate.weights.sum();
  out.renormalization = s;
  if (s > 0) out.estimate.weights /= s;
}

}  // namespace detail

/// Where the moments come from: a corpus, sample rows, or exact population
/// moments of known parameters.
struct ModelInput {
  ModelKind model = ModelKind::kTopic;
  std::optional<SparseCorpus> corpus;
  std::optional<Matrix> rows;
  std::optional<SynthModel> population;
};

// ---------------------------------------------------------------------------

/// Single topic model. Corpora use the implicit path (randomized whitener and
/// the whitened kernel) unless the simdiag baseline is requested. Weights are
/// renormalized to the simplex.
inline PipelineResult estimate_topic(const ModelInput& in, const PipelineOptions& opts) {
  PipelineResult out;
  if (in.population || opts.algorithm == Algorithm::kSimdiag) {
    const MomentSet m = out.timer.time("moments", [&] {
      return in.population ? topic_population_moments(*in.population->topic)
                           : topic_empirical_moments(*in.corpus);
    });
    detail::decompose_pair(m.M2, m.M3, opts, out);
  } else {
    const SparseCorpus& corpus = *in.corpus;
    const CorpusUsage usage = corpus_usage(corpus);
    out.extras["docs_excluded_m2"] = usage.excluded_m2;
    out.extras["docs_excluded_m3"] = usage.excluded_m3;
    const WhiteningMap map = out.timer.time("whiten", [&] {
      return randomized_whitener(corpus, opts.k, opts.sketch_cols, opts.power.seed);
    });
    const SymTensor3 t = out.timer.time("whiten_tensor", [&] { return whitened_m3(corpus, map); });
    out.report = out.timer.time("decompose", [&] { return detail::run_decomposition(t, opts); });
    out.estimate = unwhiten(out.report->decomposition, map);
  }
  detail::renormalize_weights(out);
  return out;
}

/// LDA: M3 is rescaled by (alpha0 + 2)/2 so both moments carry the weights
/// alpha_i / ((alpha0 + 1) alpha0), which are then mapped back to alpha.
inline PipelineResult estimate_lda(const ModelInput& in, const PipelineOptions& opts) {
  if (!opts.alpha0) fail(ErrorKind::kUsage, "the lda model requires --alpha0");
  const double a0 = *opts.alpha0;
  PipelineResult out;
  const MomentSet m = out.timer.time("moments", [&] {
    return in.population ? lda_moments(*in.population->lda, a0) : lda_moments(*in.corpus, a0);
  });
  detail::decompose_pair(m.M2, ((a0 + 2.0) / 2.0) * m.M3, opts, out);
  const Vector alpha = out.estimate.weights * ((a0 + 1.0) * a0);
  out.extras["alpha"] = detail::to_json(alpha);
  detail::renormalize_weights(out);
  out.renormalization = alpha.sum() / a0;
  return out;
}

/// Spherical GMMs; weights are left raw. With per-component variances the
/// relation M1 = sum w_i sigma_i^2 mu_i is solved for sigma^2 by least squares.
inline PipelineResult estimate_gmm(const ModelInput& in, const PipelineOptions& opts) {
  const bool varying = in.model == ModelKind::kGmmVarying;
  PipelineResult out;
  const MomentSet m = out.timer.time("moments", [&] {
    if (in.population)
      return varying ? gmm_varying_moments(*in.population->gmm) : gmm_common_moments(*in.population->gmm);
    return varying ? gmm_varying_moments(*in.rows, opts.k) : gmm_common_moments(*in.rows, opts.k);
  });
  detail::decompose_pair(m.M2, m.M3, opts, out);
  out.extras["smallest_eig_multiplicity"] = m.smallest_eig_multiplicity;
  out.extras["ambiguous_eigenvector"] = m.ambiguous_eigenvector;
  if (m.noise_variance) out.extras["noise_variance"] = *m.noise_variance;
  if (varying) {
    const Matrix lhs = out.estimate.means * out.estimate.weights.asDiagonal();
    out.extras["sigma2"] = detail::to_json(Vector(pseudo_inverse(lhs) * *m.M1));
  }
  return out;
}

/// ICA through the fourth cumulant reduced along one seeded direction v
/// (u = v). Only the mixing directions are identifiable on this path; they
/// are returned as unit, sign-fixed columns.
inline PipelineResult estimate_ica(const ModelInput& in, const PipelineOptions& opts) {
  PipelineResult out;
  const SymTensor4 m4 = out.timer.time("moments", [&] {
    return in.population ? ica_moments(*in.population->ica) : ica_moments(*in.rows);
  });
  Rng rng = make_stream(opts.power.seed, 0x696361ULL);
  const Vector v = uniform_sphere(m4.dim(), rng);
  const auto [m2, m3] = out.timer.time("reduce", [&] { return ica_reduce(m4, v, v); });
  detail::decompose_pair(m2, m3, opts, out);
  for (Index i = 0; i < out.estimate.means.cols(); ++i) {
    Vector col = out.estimate.means.col(i).normalized();
    fix_sign(col);
    out.estimate.means.col(i) = col;
  }
  out.extras["direction"] = detail::to_json(v);
  return out;
}

/// HMM through the multi-view reduction on h = y2. The estimate holds
/// (w, O T); pi, T and O are recovered from it.
inline PipelineResult estimate_hmm(const ModelInput& in, const PipelineOptions& opts) {
  PipelineResult out;
  const CrossMoments cm = out.timer.time("moments", [&] {
    if (in.population) return population_cross_moments(hmm_views(*in.population->hmm));
    const Matrix& x = *in.rows;
    if (x.cols() % 3 != 0) fail(ErrorKind::kDimensionMismatch, "hmm rows must hold three views");
    const Index d = x.cols() / 3;
    return empirical_cross_moments(x.leftCols(d), x.middleCols(d, d), x.rightCols(d));
  });
  const MomentSet m = out.timer.time("symmetrize", [&] { return multiview_symmetrize(cm); });
  detail::decompose_pair(m.M2, m.M3, opts, out);
  const Matrix o = hmm_observation_from_views(cm.pair[1][2], out.estimate);
  const HmmRecovery rec = hmm_recover(out.estimate, o, out.estimate.weights);
  out.extras["pi"] = detail::to_json(rec.params.pi);
  out.extras["T"] = detail::columns_to_json(rec.params.T);
  out.extras["O"] = detail::columns_to_json(rec.params.O);
  out.extras["projection_magnitude"] = rec.projection_magnitude;
  return out;
}

inline PipelineResult run_estimate(const ModelInput& in, const PipelineOptions& opts) {
  if (!in.population && !in.corpus && !in.rows)
    fail(ErrorKind::kUsage, "no input: give a sample file or a population truth file");
  switch (in.model) {
    case ModelKind::kTopic: return estimate_topic(in, opts);
    case ModelKind::kLda: return estimate_lda(in, opts);
    case ModelKind::kGmmCommon:
    case ModelKind::kGmmVarying: return estimate_gmm(in, opts);
    case ModelKind::kIca: return estimate_ica(in, opts);
    case ModelKind::kHmm: return estimate_hmm(in, opts);
    case ModelKind::kRawTensor: break;
  }
  fail(ErrorKind::kUsage, "raw_tensor has no estimation pipeline; use decompose");
}

// ---------------------------------------------------------------------------
// Scoring against ground truth.

struct FactorError {
  Index truth_index = -1;
  double mean_error = 0.0;       // |mu_hat - mu|_2 (sign-aligned for directions)
  double mean_linf = 0.0;
  std::optional<double> weight_error;
};

struct Score {
  std::vector<FactorError> factors;
  double max_mean_error = 0.0;
  double max_mean_linf = 0.0;
  std::optional<double> max_weight_error;
};

/// Greedy |cosine| matching, then per-factor errors. With directions_only
/// the columns are compared as unit vectors up to sign and weights are skipped.
inline Score score_estimate(const ModelEstimate& truth, const ModelEstimate& est,
                            bool directions_only = false) {
  const auto perm = greedy_match(truth.means, est.means);
  Score s;
  for (Index j = 0; j < est.means.cols(); ++j) {
    FactorError f;
    f.truth_index = perm[static_cast<std::size_t>(j)];
    if (f.truth_index < 0) continue;
    Vector t = truth.means.col(f.truth_index);
    Vector e = est.means.col(j);
    if (directions_only) {
      t.normalize();
      e.normalize();
      if (t.dot(e) < 0) e = -e;
    } else {
      f.weight_error = std::abs(truth.weights(f.truth_index) - est.weights(j));
      s.max_weight_error = std::max(s.max_weight_error.value_or(0.0), *f.weight_error);
    }
    f.mean_error = (t - e).norm();
    f.mean_linf = (t - e).cwiseAbs().maxCoeff();
    s.max_mean_error = std::max(s.max_mean_error, f.mean_error);
    s.max_mean_linf = std::max(s.max_mean_linf, f.mean_linf);
    s.factors.push_back(f);
  }
  return s;
}

/// Truth (weights, means) in the same parameterization the pipeline reports.
inline ModelEstimate truth_estimate(const SynthModel& m) {
  switch (m.spec.model) {
    case ModelKind::kTopic: return {m.topic->w, m.topic->mu};
    case ModelKind::kGmmCommon:
    case ModelKind::kGmmVarying: return {m.gmm->w, m.gmm->mu};
    case ModelKind::kLda: return {m.lda->alpha / m.lda->alpha0(), m.lda->mu};
    case ModelKind::kIca: return {m.ica->kurtosis(), m.ica->A};
    case ModelKind::kHmm: return {m.hmm->T * m.hmm->pi, m.hmm->O * m.hmm->T};
    case ModelKind::kRawTensor: return {m.tensor->weights(), m.tensor->vectors()};
  }
  fail(ErrorKind::kInvalidArgument, "unknown model");
}

inline nlohmann::json score_to_json(const Score& s) {
  nlohmann::json j;
  j["max_mean_error"] = s.max_mean_error;
  j["max_mean_linf"] = s.max_mean_linf;
  if (s.max_weight_error) j["max_weight_error"] = *s.max_weight_error;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& f : s.factors) {
    nlohmann::json e{{"truth_index", f.truth_index}, {"mean_error", f.mean_error},
                     {"mean_linf", f.mean_linf}};
    if (f.weight_error) e["weight_error"] = *f.weight_error;
    per.push_back(e);
  }
  j["per_factor"] = per;
  return j;
}

/// Extra HMM errors: T and pi compared under the matching of the view-3 means.
inline nlohmann::json hmm_score(const HmmParams& truth, const nlohmann::json& extras,
                                const std::vector<Index>& perm) {
  const Matrix t_hat = detail::columns_from_json(extras.at("T"));
  const Matrix o_hat = detail::columns_from_json(extras.at("O"));
  const Vector pi_hat = detail::vector_from_json(extras.at("pi"));
  double t_err = 0.0, o_err = 0.0, pi_err = 0.0;
  const Index k = truth.pi.size();
  for (Index j = 0; j < k; ++j) {
    const Index tj = perm[static_cast<std::size_t>(j)];
    pi_err = std::max(pi_err, std::abs(pi_hat(j) - truth.pi(tj)));
    o_err = std::max(o_err, (o_hat.col(j) - truth.O.col(tj)).cwiseAbs().maxCoeff());
    for (Index i = 0; i < k; ++i)
      t_err = std::max(t_err, std::abs(t_hat(i, j) - truth.T(perm[static_cast<std::size_t>(i)], tj)));
  }
  return {{"T_max_error", t_err}, {"O_max_error", o_err}, {"pi_max_error", pi_err}};
}

}  // namespace tlvm
