#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tlvm/corpus.hpp"
#include "tlvm/moments.hpp"
#include "tlvm/whitening.hpp"

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

SparseCorpus random_corpus(Index d, Index docs, Index max_len, std::uint64_t seed, Index min_len = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> word(0, d - 1), len(min_len, max_len);
  SparseCorpus c(d);
  for (Index i = 0; i < docs; ++i) {
    std::vector<std::pair<Index, std::int64_t>> e;
    const Index l = len(rng);
    for (Index t = 0; t < l; ++t) e.emplace_back(word(rng), 1);
    c.add(make_doc(e));
  }
  return c;
}

/// Corpus-average position oracles (documents with >= 2 / >= 3 words).
Matrix oracle_m2(const SparseCorpus& c) {
  Matrix m = Matrix::Zero(c.vocab_size(), c.vocab_size());
  double n = 0;
  for (const auto& d : c.docs())
    if (d.length >= 2) {
      m += oracle::doc_m2(d, c.vocab_size());
      n += 1;
    }
  return m / n;
}

oracle::Cube oracle_m3(const SparseCorpus& c) {
  oracle::Cube out(c.vocab_size());
  double n = 0;
  for (const auto& d : c.docs()) {
    if (d.length < 3) continue;
    const auto w = oracle::positions(d);
    double count = 0;
    oracle::Cube one(c.vocab_size());
    for (std::size_t a = 0; a < w.size(); ++a)
      for (std::size_t b = 0; b < w.size(); ++b)
        for (std::size_t e = 0; e < w.size(); ++e)
          if (a != b && a != e && b != e) {
            one(w[a], w[b], w[e]) += 1;
            count += 1;
          }
    for (std::size_t i = 0; i < one.v.size(); ++i) out.v[i] += one.v[i] / count;
    n += 1;
  }
  for (double& x : out.v) x /= n;
  return out;
}

/// Documents from k topics, topic i putting mass `peak` on word i and the
/// rest uniformly on words 0..k-1. Words k..d-1 never occur.
SparseCorpus peaked_corpus(Index d, Index k, Index docs, Index len, double peak, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> topic(0, k - 1), other(0, k - 1);
  std::bernoulli_distribution hit(peak);
  SparseCorpus c(d);
  for (Index i = 0; i < docs; ++i) {
    const Index h = topic(rng);
    std::vector<std::pair<Index, std::int64_t>> e;
    for (Index t = 0; t < len; ++t) e.emplace_back(hit(rng) ? h : other(rng), 1);
    c.add(make_doc(e));
  }
  return c;
}

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Largest principal-angle sine between the column spans of a and b.
double subspace_gap(const Matrix& a, const Matrix& b) {
  const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
  return (qa - qb * (qb.transpose() * qa)).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Per-document contributions

TEST(DocM2, RepeatedWord) {
  const SparseDoc doc = make_doc({{0, 2}, {1, 1}});
  const Matrix m = Matrix(doc_m2_contribution(doc, 2));
  Matrix expected(2, 2);
  expected << 2, 2, 2, 0;
  expected /= 6.0;
  EXPECT_LE((m - expected).norm(), 1e-15);
  EXPECT_LE((m - oracle::doc_m2(doc, 2)).norm(), 1e-15);
}

TEST(DocM2, SingleWordVocabulary) {
  const SparseDoc doc = make_doc({{0, 5}});
  EXPECT_NEAR(Matrix(doc_m2_contribution(doc, 1))(0, 0), 1.0, 1e-15);
}

TEST(DocM2, TwoDistinctWords) {
  const Matrix m = Matrix(doc_m2_contribution(make_doc({{0, 1}, {1, 1}}), 2));
  Matrix expected(2, 2);
  expected << 0, 0.5, 0.5, 0;
  EXPECT_LE((m - expected).norm(), 1e-15);
}

TEST(DocM2, TooShort) {
  EXPECT_EQ(kind_of([] { doc_m2_contribution(make_doc({{0, 1}}), 2); }), ErrorKind::kDocTooShort);
}

TEST(DocM3, ThreeDistinctWords) {
  const SparseDoc doc = make_doc({{0, 1}, {1, 1}, {2, 1}});
  const oracle::Cube cube = oracle::doc_m3(doc, 3);
  for (Index j = 0; j < 3; ++j) {
    const Vector theta = Vector::Unit(3, j);
    EXPECT_LE((doc_m3_contract(doc, theta) - oracle::contract_vv(cube, theta)).norm(), 1e-15);
  }
  Vector theta(3);
  theta << 0.3, -1.0, 2.0;
  // (1/6) sum over permutations: entry i gets theta_j theta_l over the other two words, times 2 / 6
  Vector expected(3);
  expected << theta(1) * theta(2), theta(0) * theta(2), theta(0) * theta(1);
  expected /= 3.0;
  EXPECT_LE((doc_m3_contract(doc, theta) - expected).norm(), 1e-15);
}

TEST(DocM3, SingleWord) {
  const SparseDoc doc = make_doc({{0, 3}});
  Vector theta(1);
  theta << 1.7;
  EXPECT_NEAR(doc_m3_contract(doc, theta)(0), 1.7 * 1.7, 1e-15);
}

TEST(DocM3, RandomDocsAgainstPositionOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<Index> word(0, 9), len(3, 12);
    std::vector<std::pair<Index, std::int64_t>> e;
    const Index l = len(rng);
    for (Index t = 0; t < l; ++t) e.emplace_back(word(rng), 1);
    const SparseDoc doc = make_doc(e);
    Rng g = make_stream(static_cast<std::uint64_t>(trial), 3);
    const Vector theta = gaussian_vector(10, g);
    const Vector expect = oracle::contract_vv(oracle::doc_m3(doc, 10), theta);
    EXPECT_LE(max_abs(doc_m3_contract(doc, theta) - expect), 1e-12);
  }
}

TEST(DocM3, TooShort) {
  EXPECT_EQ(kind_of([] { doc_m3_contract(make_doc({{0, 1}, {1, 1}}), Vector::Ones(2)); }),
            ErrorKind::kDocTooShort);
}

TEST(DocM3, ExchangeableBitForBit) {
  // the same count vector presented in a different order
  const SparseDoc a = make_doc({{4, 2}, {1, 1}, {7, 3}, {1, 1}});
  const SparseDoc b = make_doc({{7, 1}, {1, 2}, {7, 2}, {4, 2}});
  Rng g = make_stream(1, 1);
  const Vector theta = gaussian_vector(8, g);
  EXPECT_EQ(doc_m3_contract(a, theta), doc_m3_contract(b, theta));
}

// ---------------------------------------------------------------------------
// Corpus-level operators

TEST(CorpusOps, OneDocEqualsDocOperation) {
  SparseCorpus c(5);
  c.add(make_doc({{0, 2}, {3, 1}, {4, 2}}));
  Rng g = make_stream(2, 2);
  const Vector theta = gaussian_vector(5, g);
  EXPECT_EQ(corpus_m3_contract(c, theta), doc_m3_contract(c.docs()[0], theta));
  EXPECT_LE(max_abs(corpus_m2_matvec(c, theta) - Matrix(doc_m2_contribution(c.docs()[0], 5)) * theta), 1e-15);
}

TEST(CorpusOps, DuplicatedDocEqualsSingle) {
  SparseCorpus one(4), two(4);
  const SparseDoc doc = make_doc({{0, 1}, {1, 2}, {3, 1}});
  one.add(doc);
  two.add(doc);
  two.add(doc);
  const Vector theta = (Vector(4) << 0.5, -0.2, 1.0, 0.3).finished();
  EXPECT_LE(max_abs(corpus_m3_contract(one, theta) - corpus_m3_contract(two, theta)), 1e-16);
  EXPECT_LE(max_abs(corpus_m2_matvec(one, theta) - corpus_m2_matvec(two, theta)), 1e-16);
}

TEST(CorpusOps, ImplicitMatchesDenseAssembly) {
  const SparseCorpus c = random_corpus(30, 100, 12, 11);
  const Matrix m2 = oracle_m2(c);
  const oracle::Cube m3 = oracle_m3(c);
  Rng g = make_stream(3, 3);
  const Vector y = gaussian_vector(30, g), theta = gaussian_vector(30, g);
  EXPECT_LE(max_abs(corpus_m2_matvec(c, y) - m2 * y), 1e-12);
  EXPECT_LE(max_abs(corpus_m3_contract(c, theta) - oracle::contract_vv(m3, theta)), 1e-12);
  EXPECT_LE((corpus_dense_m2(c) - m2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(m3, corpus_dense_m3(c)), 1e-12);
}

TEST(CorpusOps, ShortDocsExcludedAndCounted) {
  SparseCorpus c(3);
  c.add(make_doc({{0, 1}}));
  c.add(make_doc({{0, 1}, {1, 1}}));
  c.add(make_doc({{0, 1}, {1, 1}, {2, 1}}));
  const CorpusUsage u = corpus_usage(c);
  EXPECT_EQ(u.m2_docs, 2);
  EXPECT_EQ(u.m3_docs, 1);
  EXPECT_EQ(u.excluded_m2, 1);
  EXPECT_EQ(u.excluded_m3, 2);
  const Vector theta = Vector::Ones(3);
  EXPECT_EQ(corpus_m3_contract(c, theta), doc_m3_contract(c.docs()[2], theta));
}

TEST(CorpusOps, EmptyCorpus) {
  SparseCorpus c(3);
  EXPECT_EQ(kind_of([&] { corpus_m2_matvec(c, Vector::Ones(3)); }), ErrorKind::kEmptyCorpus);
  c.add(make_doc({{0, 1}, {1, 1}}));
  EXPECT_NO_THROW(corpus_m2_matvec(c, Vector::Ones(3)));
  EXPECT_EQ(kind_of([&] { corpus_m3_contract(c, Vector::Ones(3)); }), ErrorKind::kEmptyCorpus);
}

TEST(CorpusOps, EquivalenceProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const Index d = std::uniform_int_distribution<Index>(3, 50)(rng);
    const Index docs = std::uniform_int_distribution<Index>(1, 100)(rng);
    const SparseCorpus c = random_corpus(d, docs, 10, 1000 + seed, 2);
    if (c.count_with_length_at_least(3) == 0) continue;
    Rng g = make_stream(seed, 4);
    const Vector y = gaussian_vector(d, g), theta = gaussian_vector(d, g);
    EXPECT_LE(max_abs(corpus_m2_matvec(c, y) - oracle_m2(c) * y), 1e-12) << seed;
    const oracle::Cube m3 = oracle_m3(c);
    EXPECT_LE(max_abs(corpus_m3_contract(c, theta) - oracle::contract_vv(m3, theta)), 1e-12) << seed;
    const Index k = std::min<Index>(d, 1 + static_cast<Index>(seed % 5));
    WhiteningMap map;
    map.W = gaussian_matrix(d, k, g) / std::sqrt(static_cast<double>(d));
    const Vector t = gaussian_vector(k, g);
    const oracle::Cube whitened = oracle::contract_matrix(m3, map.W);
    EXPECT_LE(max_abs(whitened_power_kernel(c, map, t) - oracle::contract_vv(whitened, t)), 1e-10) << seed;
  }
}

// ---------------------------------------------------------------------------
// Whitening over a corpus

TEST(WhitenedKernel, IdentityMap) {
  const SparseCorpus c = random_corpus(6, 20, 8, 2);
  WhiteningMap map{Matrix::Identity(6, 6), Matrix::Identity(6, 6), Vector::Ones(6), 6};
  Rng g = make_stream(1, 2);
  const Vector theta = gaussian_vector(6, g);
  EXPECT_LE(max_abs(whitened_power_kernel(c, map, theta) - corpus_m3_contract(c, theta)), 1e-15);
}

TEST(WhitenedKernel, ZeroTheta) {
  const SparseCorpus c = random_corpus(6, 20, 8, 3);
  WhiteningMap map{Matrix::Identity(6, 3), Matrix::Identity(6, 3), Vector::Ones(3), 3};
  EXPECT_EQ(whitened_power_kernel(c, map, Vector::Zero(3)), Vector(Vector::Zero(3)));
}

TEST(WhitenedKernel, MatchesExplicitWhitenedTensor) {
  const SparseCorpus c = peaked_corpus(12, 4, 200, 9, 0.8, 4);
  const MomentSet m = topic_empirical_moments(c);
  const WhiteningMap map = build_whitener(m.M2, 4);
  const SymTensor3 explicit_t = whiten_tensor(m.M3, map);
  Rng g = make_stream(5, 6);
  for (int i = 0; i < 5; ++i) {
    const Vector theta = gaussian_vector(4, g);
    EXPECT_LE(max_abs(whitened_power_kernel(c, map, theta) - contract_vv(explicit_t, theta)), 1e-10);
  }
  EXPECT_LE(oracle::frobenius_diff(whitened_m3(c, map), explicit_t), 1e-10);
}

TEST(RandomizedWhitener, ExactRankThree) {
  // words 0..2 only: the empirical M2 has rank 3 inside a 9-word vocabulary
  const SparseCorpus c = peaked_corpus(9, 3, 300, 8, 0.8, 8);
  const Matrix m2 = corpus_dense_m2(c);
  ASSERT_EQ(numeric_rank(m2), 3);
  const WhiteningMap approx = randomized_whitener(c, 3, 6, 1);
  EXPECT_LE((approx.W.transpose() * m2 * approx.W - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  const WhiteningMap tight = randomized_whitener(c, 3, 3, 2);
  EXPECT_LE(subspace_gap(tight.W, build_whitener(m2, 3).W), 1e-6);
}

TEST(RandomizedWhitener, FullRankIsExact) {
  const SparseCorpus c = peaked_corpus(6, 6, 600, 8, 0.7, 9);
  const Matrix m2 = corpus_dense_m2(c);
  const WhiteningMap dense = build_whitener(m2, 6);
  const WhiteningMap approx = randomized_whitener(c, 6, std::nullopt, 3);
  const Matrix a = approx.W * approx.W.transpose(), b = dense.W * dense.W.transpose();
  EXPECT_LE((a - b).norm() / b.norm(), 1e-10);
}

TEST(RandomizedWhitener, DeterministicPerSeed) {
  const SparseCorpus c = peaked_corpus(20, 3, 200, 8, 0.8, 10);
  EXPECT_EQ(randomized_whitener(c, 3, std::nullopt, 5).W, randomized_whitener(c, 3, std::nullopt, 5).W);
}

TEST(RandomizedWhitener, RankDeficient) {
  SparseCorpus c(5);
  for (int i = 0; i < 10; ++i) c.add(make_doc({{0, 2}, {1, 2}}));
  EXPECT_EQ(kind_of([&] { randomized_whitener(c, 3, std::nullopt, 1); }), ErrorKind::kRankDeficient);
}

TEST(CorpusCost, LinearInNnz) {
  const Index d = 200;
  const SparseCorpus small = random_corpus(d, 2000, 40, 20, 20);
  SparseCorpus big(d);
  for (int rep = 0; rep < 2; ++rep)
    for (const auto& doc : small.docs()) big.add(doc);
  ASSERT_EQ(big.total_nnz(), 2 * small.total_nnz());
  Rng g = make_stream(1, 1);
  const Vector theta = gaussian_vector(d, g);
  auto time_of = [&](const SparseCorpus& c) {
    double best = 1e300;
    for (int trial = 0; trial < 5; ++trial) {
      const auto start = std::chrono::steady_clock::now();
      double sink = 0.0;
      for (int i = 0; i < 100; ++i) sink += corpus_m3_contract(c, theta)(0);
      const std::chrono::duration<double> t = std::chrono::steady_clock::now() - start;
      EXPECT_TRUE(std::isfinite(sink));
      best = std::min(best, t.count());
    }
    return best;
  };
  const double t_small = time_of(small), t_big = time_of(big);
  EXPECT_LE(t_big / t_small, 2.5) << t_small << " s -> " << t_big << " s";
}

// ---------------------------------------------------------------------------
// File format

TEST(CorpusFile, ParsesInterleavedAndMerges) {
  std::istringstream in("# a comment\n1\t2\t1\n0\t0\t2\n1\t2\t3  # trailing\n\n0\t3\t1\n");
  const SparseCorpus c = read_corpus(in);
  EXPECT_EQ(c.vocab_size(), 4);
  ASSERT_EQ(c.docs().size(), 2u);
  EXPECT_EQ(c.docs()[0].length, 3.0);
  EXPECT_EQ(c.docs()[1].words, std::vector<Index>{2});
  EXPECT_EQ(c.docs()[1].counts, std::vector<double>{4.0});
}

TEST(CorpusFile, VocabHeaderAndRoundTrip) {
  const SparseCorpus c = random_corpus(15, 12, 7, 12);
  std::stringstream s;
  write_corpus(s, c);
  const SparseCorpus back = read_corpus(s);
  EXPECT_EQ(back.vocab_size(), 15);
  ASSERT_EQ(back.docs().size(), c.docs().size());
  for (std::size_t i = 0; i < c.docs().size(); ++i) {
    EXPECT_EQ(back.docs()[i].words, c.docs()[i].words);
    EXPECT_EQ(back.docs()[i].counts, c.docs()[i].counts);
  }
}

TEST(CorpusFile, MalformedLinesReportLineNumber) {
  const std::vector<std::pair<std::string, std::size_t>> cases{
      {"0\t1\t1\n0\t1\n", 2},         {"0\t1\t1\n\n0\tx\t1\n", 3},   {"0\t1\t0\n", 1},
      {"0\t1\t-2\n", 1},              {"0\t1\t1\t9\n", 1},           {"# vocab_size 3\n0\t3\t1\n", 2},
  };
  for (const auto& [text, line] : cases) {
    std::istringstream in(text);
    try {
      read_corpus(in);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse);
      EXPECT_EQ(e.detail(), std::optional<std::size_t>(line)) << text;
    }
  }
}

TEST(CorpusFile, MissingFile) {
  EXPECT_EQ(kind_of([] { load_corpus("/nonexistent/corpus.tsv"); }), ErrorKind::kIo);
}
