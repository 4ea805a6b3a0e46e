#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tlvm/multiview.hpp"
#include "tlvm/pipeline.hpp"
#include "tlvm/synth.hpp"

using namespace tlvm;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kUsage;
}

HmmParams example_chain() {
  HmmParams p;
  p.pi = Vector::Constant(2, 0.5);
  p.T.resize(2, 2);
  p.T << 0.8, 0.3, 0.2, 0.7;
  p.O = Matrix::Identity(2, 2);
  return p;
}

HmmParams random_chain(Index k, std::uint64_t seed) {
  SynthSpec spec;
  spec.model = ModelKind::kHmm;
  spec.d = spec.k = k;
  spec.seed = seed;
  return *gen_params(spec).hmm;
}

double cube_frob_diff(const oracle::Cube& a, const SymTensor3& b) {
  double s = 0.0;
  for (Index i = 0; i < a.n; ++i)
    for (Index j = 0; j < a.n; ++j)
      for (Index l = 0; l < a.n; ++l) s += std::pow(a(i, j, l) - b(i, j, l), 2);
  return std::sqrt(s);
}

MultiviewParams random_views(Index k, std::uint64_t seed) {
  Rng rng = make_stream(seed, 44);
  MultiviewParams p;
  p.w = detail::positive_weights(k, rng);
  for (auto& m : p.means) m = gaussian_matrix(k, k, rng);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// multiview_symmetrize

TEST(MultiviewSymmetrize, IdenticalViewsReduceToSingleView) {
  MultiviewParams p = random_views(3, 1);
  p.means[0] = p.means[1] = p.means[2];
  const MomentSet m = multiview_symmetrize(population_cross_moments(p));
  EXPECT_LE((m.M2 - p.means[2] * p.w.asDiagonal() * p.means[2].transpose()).norm(), 1e-10);
  EXPECT_LE(cube_frob_diff(oracle::weighted_cubes(p.w, p.means[2]), m.M3), 1e-10);
}

TEST(MultiviewSymmetrize, DistinctViewsTwoComponents) {
  const MultiviewParams p = random_views(2, 2);
  const MomentSet m = multiview_symmetrize(population_cross_moments(p));
  EXPECT_LE(cube_frob_diff(oracle::weighted_cubes(p.w, p.means[2]), m.M3), 1e-10);
}

TEST(MultiviewSymmetrize, StructuredFormsRandom) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index k = 1 + static_cast<Index>(seed % 5);
    const MultiviewParams p = random_views(k, 100 + seed);
    const MomentSet m = multiview_symmetrize(population_cross_moments(p));
    const Matrix target2 = p.means[2] * p.w.asDiagonal() * p.means[2].transpose();
    EXPECT_LE((m.M2 - target2).norm(), 1e-10 * std::max(1.0, target2.norm())) << seed;
    const oracle::Cube target3 = oracle::weighted_cubes(p.w, p.means[2]);
    EXPECT_LE(cube_frob_diff(target3, m.M3), 1e-10 * std::max(1.0, oracle::frobenius(target3))) << seed;
  }
}

TEST(MultiviewSymmetrize, RankDeficientViewIsSingular) {
  MultiviewParams p = random_views(3, 3);
  p.means[0].col(2) = p.means[0].col(0) + p.means[0].col(1);
  EXPECT_EQ(kind_of([&] { multiview_symmetrize(population_cross_moments(p)); }),
            ErrorKind::kSingularPairMoment);
}

TEST(MultiviewSymmetrize, RequiresCubicalViews) {
  MultiviewParams p = random_views(2, 4);
  p.means[2] = Matrix::Ones(3, 2);
  EXPECT_EQ(kind_of([&] { multiview_symmetrize(population_cross_moments(p)); }),
            ErrorKind::kDimensionMismatch);
}

TEST(Tensor3, MultilinearAgainstLoops) {
  Rng rng = make_stream(5, 5);
  Tensor3 t(2, 3, 2);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index l = 0; l < 2; ++l) t(i, j, l) = gaussian_vector(1, rng)(0);
  const Matrix a = gaussian_matrix(2, 2, rng), b = gaussian_matrix(3, 4, rng), c = gaussian_matrix(2, 1, rng);
  const Tensor3 out = t.multilinear(a, b, c);
  for (Index p = 0; p < 2; ++p)
    for (Index q = 0; q < 4; ++q) {
      double s = 0.0;
      for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 3; ++j)
          for (Index l = 0; l < 2; ++l) s += t(i, j, l) * a(i, p) * b(j, q) * c(l, 0);
      EXPECT_NEAR(out(p, q, 0), s, 1e-13);
    }
}

// ---------------------------------------------------------------------------
// HMM views and recovery

TEST(HmmViews, ExampleChain) {
  const HmmParams p = example_chain();
  const MultiviewParams v = hmm_views(p);
  EXPECT_NEAR(v.w(0), 0.55, 1e-15);
  EXPECT_NEAR(v.w(1), 0.45, 1e-15);
  // column j of view 1 is the posterior P[y1 = i | y2 = j]
  Matrix posterior(2, 2);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) posterior(i, j) = p.pi(i) * p.T(j, i) / v.w(j);
  EXPECT_NEAR(posterior(0, 0), 0.4 / 0.55, 1e-15);
  EXPECT_LE((v.means[0] - posterior).norm(), 1e-15);
  EXPECT_EQ(v.means[1], p.O);
  EXPECT_LE((v.means[2] - p.T).norm(), 1e-15);
}

TEST(HmmViews, IdentityChainSharesMeans) {
  HmmParams p = example_chain();
  p.T = Matrix::Identity(2, 2);
  p.O << 0.6, 0.1, 0.4, 0.9;
  const MultiviewParams v = hmm_views(p);
  EXPECT_EQ(v.means[1], v.means[2]);
}

TEST(HmmViews, DegenerateChains) {
  HmmParams p = example_chain();
  p.T << 0.5, 0.5, 0.5, 0.5;
  EXPECT_EQ(kind_of([&] { hmm_views(p); }), ErrorKind::kDegenerateChain);
  p = example_chain();
  p.O << 0.5, 0.5, 0.5, 0.5;
  EXPECT_EQ(kind_of([&] { hmm_views(p); }), ErrorKind::kDegenerateChain);
  p = example_chain();
  p.pi << 1.0, 0.0;
  EXPECT_EQ(kind_of([&] { hmm_views(p); }), ErrorKind::kDegenerateChain);
}

TEST(HmmRecover, ExactPopulationInputs) {
  for (Index k : {2, 3, 4}) {
    const HmmParams p = random_chain(k, 10 + static_cast<std::uint64_t>(k));
    const MultiviewParams v = hmm_views(p);
    const HmmRecovery rec = hmm_recover(ModelEstimate{v.w, v.means[2]}, v.means[1], v.w);
    EXPECT_LE((rec.params.T - p.T).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((rec.params.pi - p.pi).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((rec.params.O - p.O).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(rec.projection_magnitude, 1e-12);
  }
}

TEST(HmmRecover, IdentityTransition) {
  const Matrix o = (Matrix(2, 2) << 0.7, 0.2, 0.3, 0.8).finished();
  const Vector w = (Vector(2) << 0.3, 0.7).finished();
  const HmmRecovery rec = hmm_recover(ModelEstimate{w, o}, o, w);
  EXPECT_LE((rec.params.T - Matrix::Identity(2, 2)).norm(), 1e-12);
  EXPECT_LE((rec.params.pi - w).norm(), 1e-12);
}

TEST(HmmRecover, PerturbationIsProjected) {
  const HmmParams p = random_chain(3, 20);
  const MultiviewParams v = hmm_views(p);
  Matrix view3 = v.means[2];
  view3(0, 0) -= 0.5;  // pushes a transition entry negative
  const HmmRecovery rec = hmm_recover(ModelEstimate{v.w, view3}, v.means[1], v.w);
  EXPECT_GT(rec.projection_magnitude, 0.0);
  for (Index j = 0; j < 3; ++j) {
    EXPECT_NEAR(rec.params.T.col(j).sum(), 1.0, 1e-15);
    EXPECT_GE(rec.params.T.col(j).minCoeff(), 0.0);
  }
  EXPECT_NEAR(rec.params.pi.sum(), 1.0, 1e-15);
  EXPECT_GE(rec.params.pi.minCoeff(), 0.0);
}

TEST(HmmRecover, SingularTransition) {
  const Matrix o = Matrix::Identity(2, 2);
  const Matrix view3 = (Matrix(2, 2) << 0.5, 0.5, 0.5, 0.5).finished();
  EXPECT_EQ(kind_of([&] { hmm_recover(ModelEstimate{Vector::Constant(2, 0.5), view3}, o, Vector::Constant(2, 0.5)); }),
            ErrorKind::kNonInvertibleT);
}

TEST(HmmRoundTrip, PopulationThroughDecomposition) {
  for (Index k : {1, 2, 3, 4}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const HmmParams p = random_chain(k, 30 + seed * 7 + static_cast<std::uint64_t>(k));
      SynthModel model;
      model.spec.model = ModelKind::kHmm;
      model.spec.d = model.spec.k = k;
      model.hmm = p;
      ModelInput in;
      in.model = ModelKind::kHmm;
      in.population = model;
      PipelineOptions opts;
      opts.k = k;
      opts.power = PowerConfig::defaults_for(k, seed);
      const PipelineResult r = run_estimate(in, opts);
      const auto perm = greedy_match(p.O * p.T, r.estimate.means);
      const nlohmann::json s = hmm_score(p, r.extras, perm);
      EXPECT_LE(s["T_max_error"].get<double>(), 1e-6) << k << " " << seed;
      EXPECT_LE(s["O_max_error"].get<double>(), 1e-6) << k << " " << seed;
      EXPECT_LE(s["pi_max_error"].get<double>(), 1e-6) << k << " " << seed;
    }
  }
}

TEST(HmmRoundTrip, SampledSequencesApproach) {
  SynthSpec spec;
  spec.model = ModelKind::kHmm;
  spec.d = spec.k = 3;
  spec.seed = 9;
  const SynthModel model = gen_params(spec);
  ModelInput in;
  in.model = ModelKind::kHmm;
  in.rows = *gen_samples(model, 200000, 10).rows;
  PipelineOptions opts;
  opts.k = 3;
  opts.power = PowerConfig::defaults_for(3, 1);
  const PipelineResult r = run_estimate(in, opts);
  const auto perm = greedy_match(model.hmm->O * model.hmm->T, r.estimate.means);
  const nlohmann::json s = hmm_score(*model.hmm, r.extras, perm);
  EXPECT_LE(s["T_max_error"].get<double>(), 0.1);
  EXPECT_LE(s["O_max_error"].get<double>(), 0.1);
}

// ---------------------------------------------------------------------------
// Random three-view split

TEST(ThreeViews, ThreeCoordinatesOneEach) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ThreeViewSplit s = random_three_views(3, seed);
    for (const auto& g : s.groups) EXPECT_EQ(g.size(), 1u);
  }
}

TEST(ThreeViews, TooFewDimensions) {
  EXPECT_EQ(kind_of([&] { random_three_views(2, 0); }), ErrorKind::kTooFewDimensions);
  EXPECT_EQ(kind_of([&] { random_three_views(8, 0, true, 3); }), ErrorKind::kTooFewDimensions);
}

TEST(ThreeViews, PartitionAndDeterminism) {
  const ThreeViewSplit a = random_three_views(17, 4);
  const ThreeViewSplit b = random_three_views(17, 4);
  std::vector<int> seen(17, 0);
  for (std::size_t g = 0; g < 3; ++g) {
    EXPECT_EQ(a.groups[g], b.groups[g]);
    for (Index i : a.groups[g]) seen[static_cast<std::size_t>(i)]++;
  }
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(ThreeViews, RotationIsOrthogonal) {
  const ThreeViewSplit s = random_three_views(9, 7, true, 3);
  ASSERT_TRUE(s.rotation);
  EXPECT_LE((s.rotation->transpose() * *s.rotation - Matrix::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ThreeViews, RankPreserved) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_stream(seed, 12);
    const Matrix a = gaussian_matrix(12, 3, rng);
    for (bool rotate : {false, true}) {
      const ThreeViewSplit s = random_three_views(12, seed, rotate, 3);
      for (const Matrix& m : split_means(s, a)) EXPECT_EQ(numeric_rank(m), 3);
    }
  }
}

TEST(ThreeViews, ApplySplitMatchesMeans) {
  const ThreeViewSplit s = random_three_views(10, 3, true);
  Rng rng = make_stream(1, 1);
  const Vector x = gaussian_vector(10, rng);
  const auto parts = apply_split(s, x);
  const auto cols = split_means(s, Matrix(x));
  for (std::size_t g = 0; g < 3; ++g) EXPECT_LE((parts[g] - cols[g].col(0)).norm(), 1e-15);
}
