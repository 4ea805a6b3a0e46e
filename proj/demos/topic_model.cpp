// Recovers a single topic model from synthetic documents at growing corpus
// sizes and prints the matched error of the estimated topics.
//
//   demo_topic [seed]

#include <cstdio>
#include <cstdlib>

#include "tlvm/tlvm.hpp"

using namespace tlvm;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;

  SynthSpec spec;
  spec.model = ModelKind::kTopic;
  spec.d = 30;
  spec.k = 4;
  spec.doc_length = 12;
  spec.seed = seed;
  const SynthModel model = gen_params(spec);
  const ModelEstimate truth = truth_estimate(model);

  std::printf("vocabulary %lld, topics %lld, %lld words per document\n", static_cast<long long>(spec.d),
              static_cast<long long>(spec.k), static_cast<long long>(spec.doc_length));
  std::printf("%10s %12s %12s %12s\n", "docs", "max |mu|_2", "max |mu|_inf", "max |w|");

  for (Index n : {1000, 4000, 16000, 64000, 256000}) {
    ModelInput in;
    in.model = ModelKind::kTopic;
    in.corpus = gen_samples(model, n, seed + 1).corpus;
    PipelineOptions opts;
    opts.k = spec.k;
    opts.power = PowerConfig::defaults_for(spec.k, seed);
    const PipelineResult r = run_estimate(in, opts);
    const Score s = score_estimate(truth, r.estimate);
    std::printf("%10lld %12.5f %12.5f %12.5f\n", static_cast<long long>(n), s.max_mean_error, s.max_mean_linf,
                s.max_weight_error.value_or(0.0));
  }

  // Population moments give the exact answer up to rounding.
  ModelInput pop;
  pop.model = ModelKind::kTopic;
  pop.population = model;
  PipelineOptions opts;
  opts.k = spec.k;
  opts.power = PowerConfig::defaults_for(spec.k, seed);
  const Score exact = score_estimate(truth, run_estimate(pop, opts).estimate);
  std::printf("%10s %12.2e %12.2e %12.2e\n", "exact", exact.max_mean_error, exact.max_mean_linf,
              exact.max_weight_error.value_or(0.0));
  return 0;
}
