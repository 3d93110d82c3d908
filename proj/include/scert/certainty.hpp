#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scert/core.hpp"
#include "scert/error.hpp"
#include "scert/knn.hpp"
#include "scert/pq.hpp"
#include "scert/rng.hpp"

namespace scert {

inline constexpr double kSigmaFloor = 1e-12;

enum class SigmaMode { kGlobalCalibration, kPerQueryLocal };
enum class Combiner { kHarmonic, kLinear, kProduct };

inline const char* to_string(SigmaMode m) {
  return m == SigmaMode::kGlobalCalibration ? "global-calibration"
                                            : "per-query-local";
}

inline const char* to_string(Combiner c) {
  switch (c) {
    case Combiner::kHarmonic: return "harmonic";
    case Combiner::kLinear: return "linear";
    default: return "product";
  }
}

inline SigmaMode sigma_mode_from_string(const std::string& s) {
  if (s == "global-calibration") return SigmaMode::kGlobalCalibration;
  if (s == "per-query-local") return SigmaMode::kPerQueryLocal;
  throw ConfigError("unknown sigma mode: " + s);
}

inline Combiner combiner_from_string(const std::string& s) {
  if (s == "harmonic") return Combiner::kHarmonic;
  if (s == "linear") return Combiner::kLinear;
  if (s == "product") return Combiner::kProduct;
  throw ConfigError("unknown combiner: " + s);
}

struct SigmaEstimate {
  SigmaMode mode = SigmaMode::kGlobalCalibration;
  double value = kSigmaFloor;  // squared-distance units, > 0
};

struct ScoreParams {
  double alpha = 0.6;
  double beta = 0.4;
  double epsilon = 1e-6;
  std::size_t k = 10;
};

struct CertaintyScore {
  std::string query_id;
  double stability = 0.0;     // S_q, in (0,1]
  double raw_density = 0.0;   // N_q, positive, unbounded
  double norm_density = 0.0;  // rank-normalized N_q, in (0,1]
  double combined = 0.0;      // in (0,1]
  Combiner combiner = Combiner::kHarmonic;
  ScoreParams params;
};

inline double mean_neighbor_sqdist(const NeighborList& neighbors) {
  if (neighbors.empty()) throw EmptyInputError("empty neighbor list");
  double acc = 0.0;
  for (const Neighbor& n : neighbors) acc += n.sq_dist;
  return acc / static_cast<double>(neighbors.size());
}

// Global mode: mean PQ reconstruction error over the calibration set.
// Per-query mode: mean squared neighbor distance. Both floored at 1e-12.
inline SigmaEstimate estimate_sigma(
    SigmaMode mode, const EmbeddingSet& calibration, const PQCodebook& cb,
    const std::optional<NeighborList>& neighbors = std::nullopt) {
  SigmaEstimate est;
  est.mode = mode;
  if (mode == SigmaMode::kGlobalCalibration) {
    if (calibration.empty()) throw EmptyInputError("empty calibration set");
    est.value = std::max(reconstruction_mse(calibration, cb), kSigmaFloor);
  } else {
    if (!neighbors || neighbors->empty()) {
      throw EmptyInputError("per-query sigma needs a non-empty neighbor list");
    }
    est.value = std::max(mean_neighbor_sqdist(*neighbors), kSigmaFloor);
  }
  return est;
}

// S_q = exp(-||e - R(Q(e))||^2 / 2 sigma^2)
inline double stability_score(VecView e, const PQCodebook& cb,
                              const SigmaEstimate& sigma) {
  if (!(sigma.value > 0.0) || !std::isfinite(sigma.value)) {
    throw RangeError("sigma estimate must be positive and finite");
  }
  return std::exp(-quantization_residual(e, cb) / (2.0 * sigma.value));
}

// N_q = K / (sum of squared neighbor distances + epsilon)
inline double density_score(const NeighborList& neighbors, double epsilon) {
  if (neighbors.empty()) throw EmptyInputError("empty neighbor list");
  if (!(epsilon > 0.0)) throw RangeError("epsilon must be positive");
  double acc = 0.0;
  for (const Neighbor& n : neighbors) acc += n.sq_dist;
  return static_cast<double>(neighbors.size()) / (acc + epsilon);
}

// Empirical-CDF rank of raw against sorted calibration densities, floored at
// 1/(size+1) so the result stays in (0, 1].
inline double normalize_density(double raw,
                                const std::vector<double>& sorted_calibration) {
  if (sorted_calibration.empty()) {
    throw EmptyInputError("empty density calibration");
  }
  const auto it = std::upper_bound(sorted_calibration.begin(),
                                   sorted_calibration.end(), raw);
  const double count =
      static_cast<double>(it - sorted_calibration.begin());
  const double size = static_cast<double>(sorted_calibration.size());
  return std::max(count / size, 1.0 / (size + 1.0));
}

inline void require_unit_open(double v, const char* name) {
  if (!(v > 0.0) || v > 1.0 || !std::isfinite(v)) {
    throw RangeError(std::string(name) + " must lie in (0,1], got " +
                     std::to_string(v));
  }
}

// harmonic: 2SN/(S+N); linear: aS+bN with a+b=1; product: SN.
inline double combine(double stability, double density, Combiner combiner,
                      double alpha = 0.6, double beta = 0.4) {
  require_unit_open(stability, "stability");
  require_unit_open(density, "density");
  switch (combiner) {
    case Combiner::kHarmonic:
      return 2.0 * stability * density / (stability + density);
    case Combiner::kLinear:
      if (std::abs(alpha + beta - 1.0) > 1e-9 || alpha < 0.0 || beta < 0.0) {
        throw RangeError("linear combiner requires alpha+beta=1, both >= 0");
      }
      return alpha * stability + beta * density;
    default:
      return stability * density;
  }
}

// 1 - exp(-score*K/(2D)); reported as a diagnostic, never asserted against
// observed recall.
inline double recall_bound(double score, std::size_t K, std::size_t D) {
  require_unit_open(score, "score");
  if (K < 1 || D < 1) throw RangeError("K and D must be >= 1");
  return 1.0 - std::exp(-score * static_cast<double>(K) /
                        (2.0 * static_cast<double>(D)));
}

struct ScorerConfig {
  std::size_t k = 10;
  double epsilon = 1e-6;
  SigmaMode sigma_mode = SigmaMode::kGlobalCalibration;
  Combiner combiner = Combiner::kHarmonic;
  double alpha = 0.6;
  double beta = 0.4;
  // Rows sampled from the corpus for sigma and density calibration; 0 means
  // use every row.
  std::size_t calibration_sample = 2048;
  std::uint64_t seed = 0;
};

// Deterministic sample of `count` distinct indices out of [0, n), ascending.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (count >= n || count == 0) return idx;
  Rng rng(splitmix64(seed));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Calibrated scoring stack over one index/codebook pair. Pure after
// construction; safe for concurrent assess calls.
class Scorer {
 public:
  Scorer(const Index& ix, const PQCodebook& cb, ScorerConfig cfg)
      : ix_(ix), cb_(cb), cfg_(cfg) {
    if (cb.dim() != ix.corpus().dim()) {
      throw DimensionError("codebook dim " + std::to_string(cb.dim()) +
                           " vs corpus dim " +
                           std::to_string(ix.corpus().dim()));
    }
    if (cfg_.k < 1) throw ConfigError("k must be >= 1");
    if (!(cfg_.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (cfg_.combiner == Combiner::kLinear &&
        std::abs(cfg_.alpha + cfg_.beta - 1.0) > 1e-9) {
      throw ConfigError("linear combiner requires alpha + beta = 1");
    }
    calibrate();
  }

  const ScorerConfig& config() const { return cfg_; }
  const Index& index() const { return ix_; }
  const PQCodebook& codebook() const { return cb_; }
  const SigmaEstimate& global_sigma() const { return global_sigma_; }
  const std::vector<double>& calibration_densities() const {
    return calibration_densities_;
  }

  // Algorithm path: quantize/reconstruct -> stability; TopK -> density;
  // rank-normalize; combine.
  CertaintyScore assess(VecView q, const std::string& query_id) const {
    const NeighborList neighbors = search_exact(ix_, q, cfg_.k);
    return assess_with_neighbors(q, query_id, neighbors);
  }

  // Same scoring but reusing a neighbor list the retrieval layer already
  // produced; this is the per-query overhead path.
  CertaintyScore assess_with_neighbors(VecView q, const std::string& query_id,
                                       const NeighborList& neighbors) const {
    CertaintyScore score;
    score.query_id = query_id;
    score.combiner = cfg_.combiner;
    score.params =
        ScoreParams{cfg_.alpha, cfg_.beta, cfg_.epsilon, cfg_.k};

    SigmaEstimate sigma = global_sigma_;
    if (cfg_.sigma_mode == SigmaMode::kPerQueryLocal) {
      sigma.mode = SigmaMode::kPerQueryLocal;
      sigma.value = std::max(mean_neighbor_sqdist(neighbors), kSigmaFloor);
    }
    score.stability = stability_score(q, cb_, sigma);
    score.raw_density = density_score(neighbors, cfg_.epsilon);
    score.norm_density =
        normalize_density(score.raw_density, calibration_densities_);
    score.combined = combine(score.stability, score.norm_density,
                             cfg_.combiner, cfg_.alpha, cfg_.beta);
    return score;
  }

 private:
  void calibrate() {
    const EmbeddingSet& corpus = ix_.corpus();
    const std::vector<std::size_t> rows =
        sample_indices(corpus.size(), cfg_.calibration_sample, cfg_.seed);

    if (cfg_.sigma_mode == SigmaMode::kGlobalCalibration) {
      std::vector<double> data;
      std::vector<std::string> ids;
      data.reserve(rows.size() * corpus.dim());
      ids.reserve(rows.size());
      for (std::size_t i : rows) {
        const VecView r = corpus.row(i);
        data.insert(data.end(), r.begin(), r.end());
        ids.push_back(corpus.id(i));
      }
      const EmbeddingSet calib(corpus.dim(), std::move(data), std::move(ids));
      global_sigma_ = estimate_sigma(SigmaMode::kGlobalCalibration, calib, cb_);
    }

    calibration_densities_.reserve(rows.size());
    for (std::size_t i : rows) {
      const NeighborList nb =
          search_exact(ix_, corpus.row(i), cfg_.k, corpus.id(i));
      calibration_densities_.push_back(density_score(nb, cfg_.epsilon));
    }
    std::sort(calibration_densities_.begin(), calibration_densities_.end());
  }

  const Index& ix_;
  const PQCodebook& cb_;
  ScorerConfig cfg_;
  SigmaEstimate global_sigma_;
  std::vector<double> calibration_densities_;
};

}  // namespace scert
