#pragma once

// Word-count corpora and implicit moment operators.
//
// Text format: one "doc_id<TAB>word_id<TAB>count" triple per line, 0-based
// ids, '#' starts a comment; a "# vocab_size d" comment fixes the vocabulary.
// Lines for one document need not be adjacent;
// repeated (doc, word) pairs add up. Documents are ordered by doc_id.

#include <Eigen/Sparse>

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/sym_tensor.hpp"
#include "tlvm/whitening.hpp"

namespace tlvm {

/// Count vector of one document: parallel arrays of word ids and counts.
struct SparseDoc {
  std::vector<Index> words;
  std::vector<double> counts;
  double length = 0.0;  // sum of counts

  Index nnz() const { return static_cast<Index>(words.size()); }
};

inline SparseDoc make_doc(const std::vector<std::pair<Index, std::int64_t>>& entries) {
  std::map<Index, std::int64_t> merged;
  for (const auto& [w, c] : entries) {
    if (w < 0) fail(ErrorKind::kInvalidArgument, "negative word id");
    if (c <= 0) fail(ErrorKind::kInvalidArgument, "counts must be positive integers");
    merged[w] += c;
  }
  SparseDoc doc;
  for (const auto& [w, c] : merged) {
    doc.words.push_back(w);
    doc.counts.push_back(static_cast<double>(c));
    doc.length += static_cast<double>(c);
  }
  return doc;
}

class SparseCorpus {
 public:
  explicit SparseCorpus(Index vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size < 1) fail(ErrorKind::kInvalidArgument, "vocabulary size must be >= 1");
  }

  void add(SparseDoc doc) {
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
      if (doc.words[i] < 0 || doc.words[i] >= vocab_size_)
        fail(ErrorKind::kDimensionMismatch, "word id outside vocabulary");
      if (!(doc.counts[i] > 0)) fail(ErrorKind::kInvalidArgument, "counts must be positive");
    }
    total_nnz_ += doc.nnz();
    docs_.push_back(std::move(doc));
  }

  Index vocab_size() const { return vocab_size_; }
  const std::vector<SparseDoc>& docs() const { return docs_; }
  Index total_nnz() const { return total_nnz_; }

  Index count_with_length_at_least(double l) const {
    Index n = 0;
    for (const auto& d : docs_)
      if (d.length >= l) ++n;
    return n;
  }

 private:
  Index vocab_size_;
  std::vector<SparseDoc> docs_;
  Index total_nnz_ = 0;
};

inline SparseCorpus read_corpus(std::istream& is, std::optional<Index> vocab_size = std::nullopt) {
  std::map<long long, std::vector<std::pair<Index, std::int64_t>>> by_doc;
  std::string line;
  std::size_t lineno = 0;
  Index max_word = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      std::istringstream header(line.substr(hash + 1));
      std::string key;
      long long declared = 0;
      if (!vocab_size && header >> key >> declared && key == "vocab_size" && declared > 0)
        vocab_size = static_cast<Index>(declared);
      line.erase(hash);
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    long long doc = 0, word = 0, count = 0;
    std::string extra;
    if (!(fields >> doc >> word >> count) || (fields >> extra) || doc < 0 || word < 0 ||
        count <= 0)
      fail(ErrorKind::kParse, "corpus line " + std::to_string(lineno) +
                                  ": expected doc_id<TAB>word_id<TAB>positive count",
           lineno);
    if (vocab_size && word >= *vocab_size)
      fail(ErrorKind::kParse, "corpus line " + std::to_string(lineno) + ": word id out of range",
           lineno);
    max_word = std::max<Index>(max_word, static_cast<Index>(word));
    by_doc[doc].emplace_back(static_cast<Index>(word), static_cast<std::int64_t>(count));
  }
  SparseCorpus corpus(vocab_size.value_or(std::max<Index>(max_word + 1, 1)));
  for (const auto& [id, entries] : by_doc) corpus.add(make_doc(entries));
  return corpus;
}

inline SparseCorpus load_corpus(const std::string& path, std::optional<Index> vocab_size = std::nullopt) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot open " + path);
  return read_corpus(is, vocab_size);
}

inline void write_corpus(std::ostream& os, const SparseCorpus& corpus) {
  os << "# vocab_size " << corpus.vocab_size() << '\n';
  for (std::size_t d = 0; d < corpus.docs().size(); ++d) {
    const auto& doc = corpus.docs()[d];
    for (std::size_t i = 0; i < doc.words.size(); ++i)
      os << d << '\t' << doc.words[i] << '\t' << static_cast<long long>(doc.counts[i]) << '\n';
  }
}

inline void save_corpus(const std::string& path, const SparseCorpus& corpus) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path);
  write_corpus(os, corpus);
}

/// (c c^T - diag(c)) / (l (l - 1)): the average of e_x e_y^T over ordered
/// pairs of distinct word positions.
inline Eigen::SparseMatrix<double> doc_m2_contribution(const SparseDoc& doc, Index vocab_size) {
  if (doc.length < 2) fail(ErrorKind::kDocTooShort, "M2 needs documents with >= 2 words");
  const double s = 1.0 / (doc.length * (doc.length - 1.0));
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(doc.nnz() * doc.nnz()));
  for (std::size_t a = 0; a < doc.words.size(); ++a)
    for (std::size_t b = 0; b < doc.words.size(); ++b) {
      double v = doc.counts[a] * doc.counts[b];
      if (a == b) v -= doc.counts[a];
      if (v != 0.0) trip.emplace_back(doc.words[a], doc.words[b], s * v);
    }
  Eigen::SparseMatrix<double> m(vocab_size, vocab_size);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

namespace detail {

inline void accumulate_m2_matvec(const SparseDoc& doc, const Vector& y, double weight,
                                 Vector& out) {
  const double s = weight / (doc.length * (doc.length - 1.0));
  double cy = 0.0;
  for (std::size_t a = 0; a < doc.words.size(); ++a) cy += doc.counts[a] * y(doc.words[a]);
  for (std::size_t a = 0; a < doc.words.size(); ++a) {
    const Index w = doc.words[a];
    out(w) += s * doc.counts[a] * (cy - y(w));
  }
}

// i-th entry: s c_i [ (c.t)^2 + 2 t_i^2 - 2 t_i (c.t) - c.(t*t) ]
inline void accumulate_m3_contract(const SparseDoc& doc, const Vector& theta, double weight,
                                   Vector& out) {
  const double l = doc.length;
  const double s = weight / (l * (l - 1.0) * (l - 2.0));
  double ct = 0.0, ctt = 0.0;
  for (std::size_t a = 0; a < doc.words.size(); ++a) {
    const double t = theta(doc.words[a]);
    ct += doc.counts[a] * t;
    ctt += doc.counts[a] * t * t;
  }
  for (std::size_t a = 0; a < doc.words.size(); ++a) {
    const double t = theta(doc.words[a]);
    out(doc.words[a]) += s * doc.counts[a] * (ct * ct + 2.0 * t * t - 2.0 * t * ct - ctt);
  }
}

}  // namespace detail

/// Per-document third-moment contribution contracted as M3_doc(I, theta, theta),
/// in O(nnz) arithmetic plus the output allocation.
inline Vector doc_m3_contract(const SparseDoc& doc, const Vector& theta) {
  if (doc.length < 3) fail(ErrorKind::kDocTooShort, "M3 needs documents with >= 3 words");
  Vector out = Vector::Zero(theta.size());
  detail::accumulate_m3_contract(doc, theta, 1.0, out);
  return out;
}

/// Documents with fewer than 2 (M2) or 3 (M3) words are skipped; these
/// counts report how many were used.
struct CorpusUsage {
  Index m2_docs = 0;
  Index m3_docs = 0;
  Index excluded_m2 = 0;
  Index excluded_m3 = 0;
};

inline CorpusUsage corpus_usage(const SparseCorpus& corpus) {
  CorpusUsage u;
  for (const auto& d : corpus.docs()) {
    (d.length >= 2 ? u.m2_docs : u.excluded_m2)++;
    (d.length >= 3 ? u.m3_docs : u.excluded_m3)++;
  }
  return u;
}

/// Empirical M2 y, averaged over documents with >= 2 words.
inline Vector corpus_m2_matvec(const SparseCorpus& corpus, const Vector& y) {
  require_dims(y.size() == corpus.vocab_size(), "corpus_m2_matvec: length != vocab size");
  const Index n = corpus.count_with_length_at_least(2);
  if (n == 0) fail(ErrorKind::kEmptyCorpus, "no documents with >= 2 words");
  Vector out = Vector::Zero(y.size());
  const double weight = 1.0 / static_cast<double>(n);
  for (const auto& d : corpus.docs())
    if (d.length >= 2) detail::accumulate_m2_matvec(d, y, weight, out);
  return out;
}

/// Empirical M3(I, theta, theta), averaged over documents with >= 3 words.
inline Vector corpus_m3_contract(const SparseCorpus& corpus, const Vector& theta) {
  require_dims(theta.size() == corpus.vocab_size(), "corpus_m3_contract: length != vocab size");
  const Index n = corpus.count_with_length_at_least(3);
  if (n == 0) fail(ErrorKind::kEmptyCorpus, "no documents with >= 3 words");
  Vector out = Vector::Zero(theta.size());
  const double weight = 1.0 / static_cast<double>(n);
  for (const auto& d : corpus.docs())
    if (d.length >= 3) detail::accumulate_m3_contract(d, theta, weight, out);
  return out;
}

/// Average word distribution E[x_1] over documents with >= 1 word.
inline Vector corpus_mean(const SparseCorpus& corpus) {
  Vector out = Vector::Zero(corpus.vocab_size());
  Index n = 0;
  for (const auto& d : corpus.docs()) {
    if (d.length < 1) continue;
    ++n;
    for (std::size_t a = 0; a < d.words.size(); ++a) out(d.words[a]) += d.counts[a] / d.length;
  }
  if (n == 0) fail(ErrorKind::kEmptyCorpus, "corpus has no words");
  return out / static_cast<double>(n);
}

/// Dense empirical M2 (d x d).
inline Matrix corpus_dense_m2(const SparseCorpus& corpus) {
  const Index d = corpus.vocab_size();
  const Index n = corpus.count_with_length_at_least(2);
  if (n == 0) fail(ErrorKind::kEmptyCorpus, "no documents with >= 2 words");
  Matrix m = Matrix::Zero(d, d);
  for (const auto& doc : corpus.docs()) {
    if (doc.length < 2) continue;
    m += Matrix(doc_m2_contribution(doc, d));
  }
  return m / static_cast<double>(n);
}

/// Dense empirical M3 (d^3) from the count-vector identity
/// c(x)c(x)c + 2 sum c_i e_i^3 - sum c_i c_j (e_i e_i e_j + e_i e_j e_i + e_i e_j e_j),
/// scaled by 1 / (l (l-1) (l-2)) per document.
inline SymTensor3 corpus_dense_m3(const SparseCorpus& corpus) {
  const Index d = corpus.vocab_size();
  const Index n = corpus.count_with_length_at_least(3);
  if (n == 0) fail(ErrorKind::kEmptyCorpus, "no documents with >= 3 words");
  std::vector<double> cube(static_cast<std::size_t>(d * d * d), 0.0);
  for (const auto& doc : corpus.docs()) {
    const double l = doc.length;
    if (l < 3) continue;
    const double s = 1.0 / (l * (l - 1.0) * (l - 2.0) * static_cast<double>(n));
    const std::size_t m = doc.words.size();
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t c = 0; c < m; ++c) {
          const double ca = doc.counts[a], cb = doc.counts[b], cc = doc.counts[c];
          double v = ca * cb * cc;
          if (a == b && b == c) v += 2.0 * ca;
          if (a == b) v -= ca * cc;
          if (a == c) v -= ca * cb;
          if (b == c) v -= ca * cb;
          cube[static_cast<std::size_t>((doc.words[a] * d + doc.words[b]) * d + doc.words[c])] +=
              s * v;
        }
  }
  return SymTensor3::from_cube(d, std::move(cube));
}

/// Randomized whitener for an implicitly accessed symmetric PSD operator.
///
/// apply(X) must return M2 X for a d x m block X. Sketch Y = M2 R with a
/// seeded Gaussian R (d x sketch_cols), refine with `power_passes` passes of
/// Y <- M2 orth(Y), take U = top-k left singular vectors of Y, and whiten
/// through the eigendecomposition of U^T M2 U.
template <class Apply>
WhiteningMap randomized_whitener_op(Index d, Apply&& apply, Index k, Index sketch_cols,
                                    std::uint64_t seed, int power_passes = 1,
                                    std::optional<double> eig_floor = std::nullopt) {
  if (k < 1 || k > d) fail(ErrorKind::kInvalidArgument, "randomized_whitener: need 1 <= k <= d");
  if (sketch_cols < k) fail(ErrorKind::kInvalidArgument, "randomized_whitener: oversample < k");
  sketch_cols = std::min(sketch_cols, d);
  Rng rng = make_stream(seed, 0x72776869ULL);
  Matrix y = apply(gaussian_matrix(d, sketch_cols, rng));
  for (int p = 0; p < power_passes; ++p) {
    Eigen::HouseholderQR<Matrix> qr(y);
    const Matrix q = qr.householderQ() * Matrix::Identity(d, sketch_cols);
    y = apply(q);
  }
  Eigen::HouseholderQR<Matrix> qr(y);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, sketch_cols);
  const Matrix r = q.transpose() * y;
  Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeThinU);
  const Matrix u = q * svd.matrixU().leftCols(k);

  const Matrix mu = apply(u);
  const Matrix small = u.transpose() * mu;
  const SymEig eig = sym_eig_desc(0.5 * (small + small.transpose()));
  const double floor = eig_floor.value_or(1e-9 * std::max(eig.values(0), 0.0));
  detail::check_floor(eig.values, k, floor);
  Matrix basis = u * eig.vectors;
  fix_column_signs(basis);
  return detail::whitener_from_eig(basis, eig.values, k);
}

/// Default oversampling: sketch_cols = k + 10.
inline WhiteningMap randomized_whitener(const SparseCorpus& corpus, Index k,
                                        std::optional<Index> sketch_cols, std::uint64_t seed,
                                        int power_passes = 1) {
  auto apply = [&corpus](const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Index c = 0; c < x.cols(); ++c) out.col(c) = corpus_m2_matvec(corpus, x.col(c));
    return out;
  };
  return randomized_whitener_op(corpus.vocab_size(), apply, k, sketch_cols.value_or(k + 10),
                                seed, power_passes);
}

/// W^T M3(I, W theta, W theta) without forming any d x d x d or k x k x k array.
inline Vector whitened_power_kernel(const SparseCorpus& corpus, const WhiteningMap& map,
                                    const Vector& theta) {
  require_dims(map.W.rows() == corpus.vocab_size() && theta.size() == map.W.cols(),
               "whitened_power_kernel: dimension mismatch");
  const Vector eta = map.W * theta;
  return map.W.transpose() * corpus_m3_contract(corpus, eta);
}

/// The whitened k x k x k tensor M3(W,W,W), assembled from k(k+1)/2 calls
/// of the implicit kernel via polarization.
inline SymTensor3 whitened_m3(const SparseCorpus& corpus, const WhiteningMap& map) {
  const Index k = map.W.cols();
  std::vector<Vector> diag(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j)
    diag[static_cast<std::size_t>(j)] = whitened_power_kernel(corpus, map, Vector::Unit(k, j));
  std::vector<double> cube(static_cast<std::size_t>(k * k * k));
  auto put = [&](Index j, Index l, const Vector& col) {
    for (Index i = 0; i < k; ++i) {
      cube[static_cast<std::size_t>((i * k + j) * k + l)] = col(i);
      cube[static_cast<std::size_t>((i * k + l) * k + j)] = col(i);
    }
  };
  for (Index j = 0; j < k; ++j) {
    put(j, j, diag[static_cast<std::size_t>(j)]);
    for (Index l = j + 1; l < k; ++l) {
      const Vector both =
          whitened_power_kernel(corpus, map, Vector::Unit(k, j) + Vector::Unit(k, l));
      put(j, l, 0.5 * (both - diag[static_cast<std::size_t>(j)] - diag[static_cast<std::size_t>(l)]));
    }
  }
  return SymTensor3::from_cube(k, std::move(cube));
}

}  // namespace tlvm
