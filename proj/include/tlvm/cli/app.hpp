#pragma once

// Command-line front end: decompose, estimate, synth, bench.
//
// Reports are JSON ("schema": 1) written to --out or stdout. Stage timings
// appear only with --timings, so reports are otherwise byte-identical for a
// fixed --seed whatever the --threads value.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tlvm/corpus.hpp"
#include "tlvm/error.hpp"
#include "tlvm/pipeline.hpp"
#include "tlvm/power_method.hpp"
#include "tlvm/simdiag.hpp"
#include "tlvm/synth.hpp"
#include "tlvm/tensor_io.hpp"

namespace tlvm::cli {

inline constexpr int kReportSchema = 1;

struct PowerFlags {
  Index k = 0;
  std::optional<int> restarts;
  std::optional<int> iters;
  double tol = 1e-13;
  std::optional<std::uint64_t> seed;
  std::string algorithm = "fixed";
  int threads = 0;  // 0: available parallelism
  bool timings = false;
  std::string out;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--k", k, "Number of components")->required();
    cmd.add_option("--restarts", restarts, "Restarts L per factor (default 100 + 10k)");
    cmd.add_option("--iters", iters, "Power iterations N (default 30 + ceil(log2(k+1)))");
    cmd.add_option("--tol", tol, "Early-exit tolerance on successive iterates");
    cmd.add_option("--seed", seed, "Seed for every random draw")->required();
    cmd.add_option("--algorithm", algorithm, "fixed | stopping | simdiag")
        ->check(CLI::IsMember({"fixed", "stopping", "simdiag"}));
    cmd.add_option("--threads", threads, "Worker threads (default: available parallelism)");
    cmd.add_flag("--timings", timings, "Include per-stage wall-clock timings");
    cmd.add_option("--out", out, "Report path (default: stdout)");
  }

  PowerConfig config() const {
    if (k < 1) fail(ErrorKind::kUsage, "--k must be >= 1");
    PowerConfig cfg = PowerConfig::defaults_for(k, *seed);
    if (restarts) cfg.restarts = *restarts;
    if (iters) cfg.iters = *iters;
    cfg.convergence_tol = tol;
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    cfg.threads = threads > 0 ? threads : static_cast<int>(hw);
    if (cfg.restarts < 1 || cfg.iters < 1 || !(cfg.convergence_tol > 0))
      fail(ErrorKind::kUsage, "--restarts and --iters must be >= 1 and --tol > 0");
    return cfg;
  }

  /// Effective configuration echoed into reports. Thread count is left out
  /// since it does not affect results.
  nlohmann::json echo(const PowerConfig& cfg) const {
    return {{"k", k},
            {"restarts", cfg.restarts},
            {"iters", cfg.iters},
            {"tol", cfg.convergence_tol},
            {"seed", cfg.seed},
            {"algorithm", algorithm}};
  }
};

namespace detail {

inline void emit(const nlohmann::json& report, const std::string& path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path);
  f << text;
}

inline nlohmann::json timings_json(const StageTimer& t) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [stage, ms] : t.stages()) j[stage] = ms;
  return j;
}

inline nlohmann::json diagnostics_json(const DecompositionReport& rep) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& d : rep.per_factor)
    per.push_back({{"trials_used", d.trials_used},
                   {"final_power_value", d.final_power_value},
                   {"sign_flipped", d.sign_flipped}});
  return {{"per_factor", per},
          {"residual_frobenius", rep.residual_frobenius},
          {"residual_opnorm_estimate", rep.residual_opnorm_estimate}};
}

inline nlohmann::json estimate_json(const ModelEstimate& est) {
  return {{"weights", tlvm::detail::to_json(est.weights)},
          {"means", tlvm::detail::columns_to_json(est.means)}};
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_decompose(const PowerFlags& flags, const std::string& input,
                         const std::string& truth_path, std::ostream& out) {
  const PowerConfig cfg = flags.config();
  StageTimer timer;
  const SymTensor3 t = timer.time("load", [&] { return io::load_tensor(input); });
  if (flags.k > t.dim()) fail(ErrorKind::kUsage, "--k exceeds the tensor dimension");
  const Algorithm algo = parse_algorithm(flags.algorithm);

  nlohmann::json report;
  report["schema"] = kReportSchema;
  report["command"] = "decompose";
  report["config"] = flags.echo(cfg);
  report["config"]["input"] = input;

  ModelEstimate est;  // weights = eigenvalues, means = eigenvectors
  if (algo == Algorithm::kSimdiag) {
    if (flags.k != t.dim())
      fail(ErrorKind::kUsage, "simdiag on a raw tensor needs --k equal to the tensor dimension");
    // With M2 = I each component has a = 1, b = lambda: w = 1/lambda^2, mu = lambda v.
    const auto comps = timer.time("decompose", [&] {
      return simdiag_decompose(Matrix::Identity(t.dim(), t.dim()), t, flags.k, std::nullopt, cfg.seed);
    });
    est = ModelEstimate{Vector(flags.k), Matrix(t.dim(), flags.k)};
    nlohmann::json terms = nlohmann::json::array();
    for (Index i = 0; i < flags.k; ++i) {
      const auto& c = comps[static_cast<std::size_t>(i)];
      const double lambda = 1.0 / std::sqrt(c.weight);
      Vector v = c.mean / lambda;
      est.weights(i) = lambda;
      est.means.col(i) = v;
      terms.push_back({{"weight", lambda}, {"vector", tlvm::detail::to_json(v)}});
    }
    std::vector<RankOneTerm> rt;
    for (Index i = 0; i < flags.k; ++i) rt.push_back({est.weights(i), est.means.col(i)});
    const SymTensor3 residual = t - from_rank_one_sum(rt, t.dim());
    report["result"] = {{"terms", terms}, {"residual_frobenius", frobenius_norm(residual)}};
  } else {
    const DecompositionReport rep = timer.time("decompose", [&] {
      return algo == Algorithm::kStopping ? decompose_with_stopping(t, flags.k, cfg)
                                          : robust_decompose(t, flags.k, cfg);
    });
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& term : rep.decomposition.terms)
      terms.push_back({{"weight", term.weight}, {"vector", tlvm::detail::to_json(term.vector)}});
    report["result"] = detail::diagnostics_json(rep);
    report["result"]["terms"] = terms;
    est = ModelEstimate{rep.decomposition.weights(), rep.decomposition.vectors()};
  }
  if (!truth_path.empty()) {
    const SynthModel truth = load_truth(truth_path);
    report["score"] = score_to_json(score_estimate(truth_estimate(truth), est));
  }
  if (flags.timings) report["timings_ms"] = detail::timings_json(timer);
  detail::emit(report, flags.out, out);
  return 0;
}

struct EstimateFlags {
  std::string model;
  std::string input;
  std::string truth;
  std::optional<double> alpha0;
  std::optional<Index> vocab;
  std::optional<Index> sketch;
  bool population = false;
};

inline int cmd_estimate(const PowerFlags& flags, const EstimateFlags& ef, std::ostream& out) {
  const PowerConfig cfg = flags.config();
  const ModelKind kind = parse_model(ef.model);
  if (kind == ModelKind::kLda && !ef.alpha0) fail(ErrorKind::kUsage, "the lda model requires --alpha0");
  if (ef.population && ef.truth.empty()) fail(ErrorKind::kUsage, "--population requires --truth");
  if (!ef.population && ef.input.empty()) fail(ErrorKind::kUsage, "--in is required unless --population is set");

  ModelInput in;
  in.model = kind;
  std::optional<SynthModel> truth;
  if (!ef.truth.empty()) {
    truth = load_truth(ef.truth);
    if (truth->spec.model != kind && !(truth->spec.model == ModelKind::kGmmCommon && kind == ModelKind::kGmmVarying))
      fail(ErrorKind::kUsage, "truth file describes model '" + model_name(truth->spec.model) + "'");
  }
  if (ef.population) {
    in.population = truth;
    if (kind == ModelKind::kGmmVarying && !truth->gmm) fail(ErrorKind::kUsage, "truth lacks gmm parameters");
  } else if (kind == ModelKind::kTopic || kind == ModelKind::kLda) {
    in.corpus = load_corpus(ef.input, ef.vocab);
  } else {
    in.rows = load_rows(ef.input);
  }

  PipelineOptions opts{flags.k, cfg, parse_algorithm(flags.algorithm), ef.alpha0, ef.sketch};
  const PipelineResult res = run_estimate(in, opts);

  nlohmann::json report;
  report["schema"] = kReportSchema;
  report["command"] = "estimate";
  report["config"] = flags.echo(cfg);
  report["config"]["model"] = ef.model;
  report["config"]["population"] = ef.population;
  if (!ef.input.empty()) report["config"]["input"] = ef.input;
  if (ef.alpha0) report["config"]["alpha0"] = *ef.alpha0;
  if (ef.sketch) report["config"]["sketch"] = *ef.sketch;
  report["result"] = detail::estimate_json(res.estimate);
  if (res.renormalization) report["result"]["renormalization"] = *res.renormalization;
  report["result"]["extras"] = res.extras;
  if (res.report) report["result"]["diagnostics"] = detail::diagnostics_json(*res.report);
  if (truth) {
    const ModelEstimate t = truth_estimate(*truth);
    const Score s = score_estimate(t, res.estimate, kind == ModelKind::kIca);
    report["score"] = score_to_json(s);
    if (kind == ModelKind::kHmm) {
      const auto perm = greedy_match(t.means, res.estimate.means);
      report["score"]["hmm"] = hmm_score(*truth->hmm, res.extras, perm);
    }
  }
  if (flags.timings) report["timings_ms"] = detail::timings_json(res.timer);
  detail::emit(report, flags.out, out);
  return 0;
}

struct SynthFlags {
  std::string model;
  Index d = 10, k = 3, n = 1000, length = 10;
  double epsilon = 0.0, alpha0 = 1.0;
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  std::string out;
};

/// Writes <out>.truth.json plus <out>.corpus.tsv, <out>.rows.csv or <out>.syt3;
/// prints a JSON listing of the files.
inline int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SynthSpec spec;
  spec.model = parse_model(f.model);
  spec.d = f.d;
  spec.k = f.k;
  spec.n = f.n;
  spec.doc_length = f.length;
  spec.epsilon = f.epsilon;
  spec.alpha0 = f.alpha0;
  spec.sigma = f.sigma;
  spec.seed = *f.seed;
  const SynthModel model = gen_params(spec);

  nlohmann::json report;
  report["schema"] = kReportSchema;
  report["command"] = "synth";
  report["config"] = {{"model", f.model}, {"d", f.d}, {"k", f.k}, {"n", f.n},
                      {"length", f.length}, {"seed", spec.seed}};
  nlohmann::json files = nlohmann::json::object();

  nlohmann::json truth = truth_json(model);
  if (spec.model == ModelKind::kRawTensor) {
    const OrthoTensorInstance inst =
        gen_orthotensor(spec.k, model.tensor->weights(), spec.epsilon, spec.seed, spec.d);
    truth["weights"] = tlvm::detail::to_json(inst.truth.weights());
    truth["means"] = tlvm::detail::columns_to_json(inst.truth.vectors());
    truth["achieved_epsilon"] = inst.achieved_epsilon;
    report["achieved_epsilon"] = inst.achieved_epsilon;
    files["tensor"] = f.out + ".syt3";
    io::save_tensor(f.out + ".syt3", inst.tensor);
  } else {
    const SynthSamples samples = gen_samples(model, spec.n, spec.seed);
    if (samples.corpus) {
      files["corpus"] = f.out + ".corpus.tsv";
      save_corpus(f.out + ".corpus.tsv", *samples.corpus);
    } else {
      files["rows"] = f.out + ".rows.csv";
      save_rows(f.out + ".rows.csv", *samples.rows);
    }
  }
  files["truth"] = f.out + ".truth.json";
  {
    std::ofstream t(f.out + ".truth.json", std::ios::binary);
    if (!t) fail(ErrorKind::kIo, "cannot write " + f.out + ".truth.json");
    t << truth.dump(2) << "\n";
  }
  report["files"] = files;
  out << report.dump(2) << "\n";
  return 0;
}

struct BenchFlags {
  std::string sweep = "k";
  std::vector<Index> values;
  int reps = 1;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

/// Timing sweeps as CSV: sweep,value,reps,total_ms,ms_per_rep. Wall-clock
/// numbers are not reproducible by nature; the workloads are.
inline int cmd_bench(const BenchFlags& f, std::ostream& out) {
  if (f.values.empty()) fail(ErrorKind::kUsage, "--values must list at least one value");
  if (f.reps < 1) fail(ErrorKind::kUsage, "--reps must be >= 1");
  std::ostringstream csv;
  csv << "sweep,value,reps,total_ms,ms_per_rep\n";
  for (const Index value : f.values) {
    if (value < 1) fail(ErrorKind::kUsage, "sweep values must be >= 1");
    std::function<void()> work;
    std::optional<SymTensor3> tensor;
    std::optional<SparseCorpus> corpus;
    PowerConfig cfg;
    Vector probe;
    if (f.sweep == "k" || f.sweep == "iters" || f.sweep == "restarts") {
      const Index k = f.sweep == "k" ? value : 10;
      Rng rng = make_stream(*f.seed, static_cast<std::uint64_t>(value));
      Vector lambda(k);
      std::uniform_real_distribution<double> u(1.0, 2.0);
      for (Index i = 0; i < k; ++i) lambda(i) = u(rng);
      tensor = gen_orthotensor(k, lambda, 0.0, *f.seed).tensor;
      cfg = PowerConfig::defaults_for(k, *f.seed);
      cfg.threads = f.threads;
      cfg.opnorm_restarts = 1;
      cfg.opnorm_iters = 1;
      if (f.sweep == "iters") cfg.iters = static_cast<int>(value), cfg.convergence_tol = 1e-300;
      if (f.sweep == "restarts") cfg.restarts = static_cast<int>(value);
      if (f.sweep == "k") {
        // dense power steps only
        probe = Vector::Ones(k).normalized();
        work = [&] {
          Vector th = probe;
          for (int s = 0; s < 100; ++s) th = power_step(*tensor, th);
        };
      } else {
        work = [&] { robust_decompose(*tensor, 1, cfg); };
      }
    } else if (f.sweep == "nnz") {
      SynthSpec spec;
      spec.model = ModelKind::kTopic;
      spec.d = 200;
      spec.k = 5;
      spec.seed = *f.seed;
      const SynthModel model = gen_params(spec);
      corpus = gen_samples(model, value, *f.seed).corpus;
      Rng rng = make_stream(*f.seed, 1);
      probe = gaussian_vector(spec.d, rng);
      work = [&] {
        for (int s = 0; s < 100; ++s) corpus_m3_contract(*corpus, probe);
      };
    } else {
      fail(ErrorKind::kUsage, "--sweep must be one of k, iters, restarts, nnz");
    }
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < f.reps; ++r) work();
    const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
    csv << f.sweep << ',' << value << ',' << f.reps << ',' << ms.count() << ','
        << ms.count() / f.reps << '\n';
  }
  if (f.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream file(f.out);
    if (!file) fail(ErrorKind::kIo, "cannot write " + f.out);
    file << csv.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------

/// Parses args (without the program name) and runs one subcommand. Returns
/// the process exit code; typed errors map through exit_code_for.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent variable model estimation by tensor decomposition", "tlvm"};
  app.require_subcommand(1);

  PowerFlags dec_flags;
  std::string dec_in, dec_truth;
  auto* dec = app.add_subcommand("decompose", "Orthogonal decomposition of a symmetric tensor file");
  dec_flags.add_to(*dec);
  dec->add_option("--in", dec_in, "Tensor file (.syt3 binary or .json)")->required();
  dec->add_option("--truth", dec_truth, "Truth JSON for scoring");

  PowerFlags est_flags;
  EstimateFlags est_extra;
  auto* est = app.add_subcommand("estimate", "Estimate model parameters from samples or exact moments");
  est_flags.add_to(*est);
  est->add_option("--model", est_extra.model, "topic | lda | gmm_common | gmm_varying | ica | hmm")
      ->required();
  est->add_option("--in", est_extra.input, "Corpus (.tsv) or sample rows (.csv)");
  est->add_option("--truth", est_extra.truth, "Truth JSON for scoring");
  est->add_option("--alpha0", est_extra.alpha0, "Dirichlet concentration (lda)");
  est->add_option("--vocab", est_extra.vocab, "Vocabulary size (default: corpus header or max id + 1)");
  est->add_option("--sketch", est_extra.sketch, "Sketch columns for randomized whitening (default k + 10)");
  est->add_flag("--population", est_extra.population, "Use exact moments of the --truth parameters");

  SynthFlags syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic instance and its truth file");
  synth->add_option("--model", syn.model, "topic | lda | gmm_common | gmm_varying | ica | hmm | raw_tensor")
      ->required();
  synth->add_option("--d", syn.d, "Observed dimension");
  synth->add_option("--k", syn.k, "Number of components");
  synth->add_option("--n", syn.n, "Documents or samples");
  synth->add_option("--length", syn.length, "Words per document");
  synth->add_option("--epsilon", syn.epsilon, "raw_tensor: operator norm of the added noise");
  synth->add_option("--alpha0", syn.alpha0, "lda: Dirichlet concentration");
  synth->add_option("--sigma", syn.sigma, "gmm/ica noise scale");
  synth->add_option("--seed", syn.seed, "Seed")->required();
  synth->add_option("--out", syn.out, "Output path prefix")->required();

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Timing sweeps written as CSV");
  bench->add_option("--sweep", bf.sweep, "k | iters | restarts | nnz");
  bench->add_option("--values", bf.values, "Sweep values")->delimiter(',')->required();
  bench->add_option("--reps", bf.reps, "Repetitions per value");
  bench->add_option("--seed", bf.seed, "Seed")->required();
  bench->add_option("--threads", bf.threads, "Worker threads");
  bench->add_option("--out", bf.out, "CSV path (default: stdout)");

  std::vector<const char*> argv{"tlvm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "tlvm: " << e.what() << "\n";
    return exit_code_for(ErrorKind::kUsage);
  }

  try {
    if (*dec) return cmd_decompose(dec_flags, dec_in, dec_truth, out);
    if (*est) return cmd_estimate(est_flags, est_extra, out);
    if (*synth) return cmd_synth(syn, out);
    if (*bench) return cmd_bench(bf, out);
  } catch (const Error& e) {
    err << "tlvm: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "tlvm: " << e.what() << "\n";
    return 1;
  }
  return exit_code_for(ErrorKind::kUsage);
}

}  // namespace tlvm::cli
