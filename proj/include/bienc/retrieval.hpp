#ifndef BIENC_RETRIEVAL_HPP
#define BIENC_RETRIEVAL_HPP

// Cached entity embeddings and exact top-K retrieval.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "bienc/bpe.hpp"
#include "bienc/model.hpp"

namespace bienc {

enum class Metric { Dot, Cosine, Euclidean };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Dot: return "dot";
    case Metric::Cosine: return "cosine";
    case Metric::Euclidean: return "euclidean";
  }
  return "dot";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "dot") return Metric::Dot;
  if (s == "cosine") return Metric::Cosine;
  if (s == "euclidean") return Metric::Euclidean;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

/// dot: a.b;  cosine: a.b / (|a||b|);  euclidean: |a - b| (smaller is closer).
inline double similarity(const Vector& a, const Vector& b, Metric metric) {
  if (a.size() != b.size()) throw std::invalid_argument("similarity between vectors of different dimension");
  switch (metric) {
    case Metric::Dot: return a.dot(b);
    case Metric::Cosine: {
      const double na = a.norm(), nb = b.norm();
      if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine similarity with a zero vector");
      return a.dot(b) / (na * nb);
    }
    case Metric::Euclidean: return (a - b).norm();
  }
  return 0.0;
}

/// True when score `a` ranks strictly ahead of `b` under the metric.
inline bool ranks_ahead(Metric metric, double a, double b) { return metric == Metric::Euclidean ? a < b : a > b; }

struct Candidate {
  std::string entity_id;
  double score = 0.0;
  bool operator==(const Candidate&) const = default;
};

struct RetrievalResult {
  std::string mention_id;
  std::vector<Candidate> candidates;  // best first
};

struct EmbeddingIndex {
  std::vector<std::string> entity_ids;
  Matrix matrix;  // one row per entity
  Metric metric = Metric::Dot;
  PoolingKind pooling = PoolingKind::Cls;
  std::string world;

  std::size_t size() const { return entity_ids.size(); }

  /// `ids.txt`, `embeddings.bin` (magic, rows, cols, row-major f64 LE) and `index.meta`.
  void save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream ids(dir + "/ids.txt");
    for (const auto& id : entity_ids) ids << id << '\n';
    std::ofstream bin(dir + "/embeddings.bin", std::ios::binary);
    if (!ids || !bin) throw Error("cannot write index to " + dir);
    bin.write(kMagic, sizeof kMagic);
    detail::write_matrix(bin, matrix);
    std::ofstream meta(dir + "/index.meta");
    meta << "world=" << world << "\nmetric=" << to_string(metric) << "\npooling=" << to_string(pooling) << '\n';
  }

  static EmbeddingIndex load(const std::string& dir) {
    EmbeddingIndex idx;
    detail::for_each_line(dir + "/ids.txt", [&](const std::string& line, std::size_t) {
      if (!line.empty()) idx.entity_ids.push_back(line);
    });
    std::ifstream bin(dir + "/embeddings.bin", std::ios::binary);
    if (!bin) throw Error("cannot open " + dir + "/embeddings.bin");
    char magic[8];
    bin.read(magic, sizeof magic);
    if (!bin || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(dir + "/embeddings.bin is not an index");
    idx.matrix = detail::read_matrix(bin);
    if (static_cast<std::size_t>(idx.matrix.rows()) != idx.entity_ids.size())
      throw Error(dir + ": ids and embedding rows disagree");
    detail::for_each_line(dir + "/index.meta", [&](const std::string& line, std::size_t lineno) {
      if (line.empty()) return;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(dir + "/index.meta", lineno, "expected key=value");
      const auto key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "world") idx.world = value;
      else if (key == "metric") idx.metric = parse_metric(value);
      else if (key == "pooling") idx.pooling = parse_pooling(value);
    });
    return idx;
  }

  static constexpr char kMagic[8] = {'B', 'I', 'E', 'N', 'C', 'I', 'X', '1'};
};

namespace detail {

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Embeds a world's dictionary with the entity encoder. Rows are written independently, so
/// the result does not depend on `threads`.
inline EmbeddingIndex build_index(const std::vector<EntityRecord>& entities, const BiEncoder& model,
                                  const Vocabulary& vocab, const std::string& world = "", std::size_t threads = 1) {
  if (entities.empty()) throw ValidationError("cannot index an empty dictionary");
  EmbeddingIndex idx;
  idx.world = world.empty() ? entities.front().world : world;
  idx.pooling = model.config.pooling;
  idx.matrix.resize(static_cast<Eigen::Index>(entities.size()),
                    static_cast<Eigen::Index>(model.config.embedding_dim()));
  idx.entity_ids.reserve(entities.size());
  for (const auto& e : entities) idx.entity_ids.push_back(e.entity_id);
  detail::parallel_for(entities.size(), threads, [&](std::size_t i) {
    const auto seq = build_entity_sequence(entities[i], vocab, model.config.templates);
    idx.matrix.row(static_cast<Eigen::Index>(i)) = model.embed(seq).values.transpose();
  });
  if (!idx.matrix.allFinite()) throw NumericError("non-finite entity embedding");
  return idx;
}

/// Exact K best entities by brute-force scan; ties go to the smaller entity_id.
inline RetrievalResult top_k(const EmbeddingIndex& index, const Vector& query, std::size_t K, Metric metric,
                             const std::string& mention_id = "") {
  const std::size_t N = index.size();
  if (K > N) throw std::invalid_argument("K=" + std::to_string(K) + " exceeds index size " + std::to_string(N));
  if (static_cast<Eigen::Index>(query.size()) != index.matrix.cols())
    throw std::invalid_argument("query dimension does not match index");
  std::vector<double> scores(N);
  for (std::size_t i = 0; i < N; ++i)
    scores[i] = similarity(index.matrix.row(static_cast<Eigen::Index>(i)).transpose(), query, metric);
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return ranks_ahead(metric, scores[a], scores[b]);
    return index.entity_ids[a] < index.entity_ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K), order.end(), better);
  RetrievalResult r;
  r.mention_id = mention_id;
  r.candidates.reserve(K);
  for (std::size_t k = 0; k < K; ++k) r.candidates.push_back({index.entity_ids[order[k]], scores[order[k]]});
  return r;
}

inline RetrievalResult top_k(const EmbeddingIndex& index, const PooledVector& query, std::size_t K, Metric metric,
                             const std::string& mention_id = "") {
  return top_k(index, query.values, K, metric, mention_id);
}

}  // namespace bienc

#endif  // BIENC_RETRIEVAL_HPP
