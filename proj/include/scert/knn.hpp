#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "scert/core.hpp"
#include "scert/error.hpp"
#include "scert/io.hpp"
#include "scert/pq.hpp"

namespace scert {

struct Neighbor {
  std::string id;
  double sq_dist = 0.0;
};

// Ascending by distance, ties by id; length min(K, corpus size).
using NeighborList = std::vector<Neighbor>;

// Immutable after build; concurrent searches are safe.
class Index {
 public:
  Index(std::shared_ptr<const EmbeddingSet> corpus,
        std::optional<PQCodebook> codebook)
      : corpus_(std::move(corpus)), codebook_(std::move(codebook)) {
    if (!corpus_ || corpus_->empty()) {
      throw EmptyInputError("cannot index an empty corpus");
    }
    if (codebook_) {
      if (codebook_->dim() != corpus_->dim()) {
        throw DimensionError("codebook dim " + std::to_string(codebook_->dim()) +
                             " vs corpus dim " + std::to_string(corpus_->dim()));
      }
      codes_.reserve(corpus_->size());
      for (std::size_t i = 0; i < corpus_->size(); ++i) {
        codes_.push_back(quantize(corpus_->row(i), *codebook_));
      }
    }
  }

  const EmbeddingSet& corpus() const { return *corpus_; }
  std::shared_ptr<const EmbeddingSet> corpus_ptr() const { return corpus_; }
  bool has_codebook() const { return codebook_.has_value(); }
  const PQCodebook& codebook() const {
    if (!codebook_) throw ConfigError("index was built without a codebook");
    return *codebook_;
  }
  const std::vector<PQCode>& codes() const { return codes_; }

 private:
  std::shared_ptr<const EmbeddingSet> corpus_;
  std::optional<PQCodebook> codebook_;
  std::vector<PQCode> codes_;
};

inline Index build_index(std::shared_ptr<const EmbeddingSet> corpus,
                         std::optional<PQCodebook> codebook = std::nullopt) {
  return Index(std::move(corpus), std::move(codebook));
}

inline Index build_index(EmbeddingSet corpus,
                         std::optional<PQCodebook> codebook = std::nullopt) {
  return Index(std::make_shared<const EmbeddingSet>(std::move(corpus)),
               std::move(codebook));
}

namespace detail {

struct HeapEntry {
  double dist;
  std::size_t row;
};

// Selects the K smallest (dist, id) pairs from per-row distances produced by
// dist_fn. exclude_self drops the row whose distance is exactly 0 and whose id
// matches; used when scoring corpus members against their own index.
template <typename DistFn>
NeighborList select_top_k(const EmbeddingSet& corpus, std::size_t K,
                          DistFn&& dist_fn,
                          std::optional<std::string_view> exclude_id) {
  auto worse = [&corpus](const HeapEntry& a, const HeapEntry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return corpus.id(a.row) < corpus.id(b.row);
  };
  // max-heap on (dist, id): top is the current worst keeper
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(worse)> heap(
      worse);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double d = dist_fn(i);
    if (exclude_id && d == 0.0 && corpus.id(i) == *exclude_id) continue;
    if (heap.size() < K) {
      heap.push(HeapEntry{d, i});
    } else if (worse(HeapEntry{d, i}, heap.top())) {
      heap.pop();
      heap.push(HeapEntry{d, i});
    }
  }
  NeighborList out(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    out[i] = Neighbor{corpus.id(heap.top().row), heap.top().dist};
    heap.pop();
  }
  return out;
}

}  // namespace detail

inline NeighborList search_exact(
    const Index& ix, VecView q, std::size_t K,
    std::optional<std::string_view> exclude_id = std::nullopt) {
  const EmbeddingSet& corpus = ix.corpus();
  if (q.size() != corpus.dim()) {
    throw DimensionError("query dim " + std::to_string(q.size()) +
                         " vs corpus dim " + std::to_string(corpus.dim()));
  }
  if (K < 1) throw ConfigError("K must be >= 1");
  return detail::select_top_k(
      corpus, K, [&](std::size_t i) { return squared_euclidean(q, corpus.row(i)); },
      exclude_id);
}

// ADC scan: per-subspace lookup table of query-to-centroid squared distances,
// summed over each row's code. Equals the squared distance to the row's
// reconstruction, reorganized.
inline NeighborList search_adc(
    const Index& ix, VecView q, std::size_t K,
    std::optional<std::string_view> exclude_id = std::nullopt) {
  if (!ix.has_codebook()) {
    throw ConfigError("search_adc requires an index built with a codebook");
  }
  const PQCodebook& cb = ix.codebook();
  const EmbeddingSet& corpus = ix.corpus();
  if (q.size() != cb.dim()) {
    throw DimensionError("query dim " + std::to_string(q.size()) +
                         " vs codebook dim " + std::to_string(cb.dim()));
  }
  if (K < 1) throw ConfigError("K must be >= 1");

  const std::uint32_t m = cb.num_subspaces();
  const std::uint32_t k = cb.centroids_per_subspace();
  const std::uint32_t sd = cb.sub_dim();
  std::vector<double> lut(static_cast<std::size_t>(m) * k);
  for (std::uint32_t s = 0; s < m; ++s) {
    const double* sub = q.data() + static_cast<std::size_t>(s) * sd;
    for (std::uint32_t c = 0; c < k; ++c) {
      lut[static_cast<std::size_t>(s) * k + c] =
          detail::subvec_sqdist(sub, cb.centroid(s, c).data(), sd);
    }
  }
  const std::vector<PQCode>& codes = ix.codes();
  return detail::select_top_k(
      corpus, K,
      [&](std::size_t i) {
        const PQCode& code = codes[i];
        double acc = 0.0;
        for (std::uint32_t s = 0; s < m; ++s) {
          acc += lut[static_cast<std::size_t>(s) * k + code[s]];
        }
        return acc;
      },
      exclude_id);
}

// TREC run line: query_id Q0 doc_id rank score tag; score is the negative
// squared distance so larger is better.
inline void append_run_lines(std::ostream& os, const std::string& query_id,
                             const NeighborList& neighbors,
                             const std::string& tag) {
  int rank = 1;
  for (const Neighbor& n : neighbors) {
    os << query_id << " Q0 " << n.id << ' ' << rank << ' '
       << format_score(-n.sq_dist) << ' ' << tag << '\n';
    ++rank;
  }
}

}  // namespace scert
