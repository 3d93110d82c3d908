#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "scert/core.hpp"
#include "scert/error.hpp"
#include "scert/io.hpp"
#include "scert/rng.hpp"

namespace scert {

inline constexpr char kCodebookMagic[4] = {'S', 'C', 'P', 'Q'};
inline constexpr std::uint32_t kCodebookVersion = 1;

struct PQConfig {
  std::uint32_t num_subspaces = 0;  // m; 0 means pick a default from D
  std::uint32_t centroids_per_subspace = 256;  // k
  std::uint32_t kmeans_iters = 25;
  std::uint64_t seed = 0;
};

// m = D/8 rounded to the nearest divisor of D (larger m on a tie).
inline std::uint32_t default_num_subspaces(std::size_t dim) {
  const double target = static_cast<double>(dim) / 8.0;
  std::uint32_t best = 1;
  double best_gap = std::numeric_limits<double>::max();
  for (std::uint32_t m = 1; m <= dim; ++m) {
    if (dim % m != 0) continue;
    const double gap = std::abs(static_cast<double>(m) - target);
    if (gap < best_gap || (gap == best_gap && m > best)) {
      best_gap = gap;
      best = m;
    }
  }
  return best;
}

class PQCodebook {
 public:
  PQCodebook() = default;
  PQCodebook(PQConfig config, std::uint32_t sub_dim,
             std::vector<double> centroids)
      : config_(config), sub_dim_(sub_dim), centroids_(std::move(centroids)) {
    if (centroids_.size() != static_cast<std::size_t>(config_.num_subspaces) *
                                 config_.centroids_per_subspace * sub_dim_) {
      throw ConfigError("centroid table size mismatch");
    }
    for (double x : centroids_) {
      if (!std::isfinite(x)) throw RangeError("non-finite centroid");
    }
  }

  const PQConfig& config() const { return config_; }
  std::uint32_t num_subspaces() const { return config_.num_subspaces; }
  std::uint32_t centroids_per_subspace() const {
    return config_.centroids_per_subspace;
  }
  std::uint32_t sub_dim() const { return sub_dim_; }
  std::size_t dim() const {
    return static_cast<std::size_t>(config_.num_subspaces) * sub_dim_;
  }

  VecView centroid(std::uint32_t subspace, std::uint32_t index) const {
    const std::size_t off =
        (static_cast<std::size_t>(subspace) * config_.centroids_per_subspace +
         index) *
        sub_dim_;
    return VecView(centroids_.data() + off, sub_dim_);
  }

  const std::vector<double>& raw() const { return centroids_; }

 private:
  PQConfig config_;
  std::uint32_t sub_dim_ = 0;
  std::vector<double> centroids_;
};

using PQCode = std::vector<std::uint32_t>;

namespace detail {

inline double subvec_sqdist(const double* a, const double* b,
                            std::uint32_t n) {
  double acc = 0.0;
  for (std::uint32_t d = 0; d < n; ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return acc;
}

// Lloyd k-means on one subspace slice of the training rows. points is
// row-major n x sub_dim. Returns k*sub_dim centroids.
inline std::vector<double> kmeans_subspace(const std::vector<double>& points,
                                           std::size_t n, std::uint32_t sub_dim,
                                           std::uint32_t k,
                                           std::uint32_t iters, Rng& rng) {
  const double* pts = points.data();
  std::vector<double> centroids(static_cast<std::size_t>(k) * sub_dim);
  std::vector<double> min_dist(n, std::numeric_limits<double>::max());

  // k-means++ seeding
  std::size_t first = uniform_index(rng, n);
  std::copy_n(pts + first * sub_dim, sub_dim, centroids.begin());
  for (std::uint32_t c = 1; c < k; ++c) {
    const double* prev = centroids.data() + (c - 1) * sub_dim;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = subvec_sqdist(pts + i * sub_dim, prev, sub_dim);
      if (d < min_dist[i]) min_dist[i] = d;
      total += min_dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_dist[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, n);  // all points coincide with chosen seeds
    }
    std::copy_n(pts + pick * sub_dim, sub_dim, centroids.data() + c * sub_dim);
  }

  std::vector<std::uint32_t> assign(n, 0);
  std::vector<std::size_t> counts(k, 0);
  std::vector<double> dist_to_own(n, 0.0);

  // One Lloyd step: assign, repair empties, update means. Returns whether any
  // assignment moved.
  auto step = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      std::uint32_t best_c = 0;
      for (std::uint32_t c = 0; c < k; ++c) {
        const double d = subvec_sqdist(pts + i * sub_dim,
                                       centroids.data() + c * sub_dim, sub_dim);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
      dist_to_own[i] = best;
    }

    // Repair empty clusters: move in the point farthest from its centroid.
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t worst = 0;
      double worst_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;  // do not empty another cluster
        if (dist_to_own[i] > worst_d) {
          worst_d = dist_to_own[i];
          worst = i;
        }
      }
      if (worst_d < 0.0) continue;  // nothing movable
      --counts[assign[worst]];
      assign[worst] = c;
      counts[c] = 1;
      dist_to_own[worst] = 0.0;
      changed = true;
    }

    std::fill(centroids.begin(), centroids.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* ctr = centroids.data() + assign[i] * sub_dim;
      const double* p = pts + i * sub_dim;
      for (std::uint32_t d = 0; d < sub_dim; ++d) ctr[d] += p[d];
    }
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      double* ctr = centroids.data() + c * sub_dim;
      for (std::uint32_t d = 0; d < sub_dim; ++d) {
        ctr[d] /= static_cast<double>(counts[c]);
      }
    }
    return changed;
  };

  auto has_duplicate_centroids = [&]() {
    for (std::uint32_t a = 0; a < k; ++a) {
      for (std::uint32_t b = a + 1; b < k; ++b) {
        if (std::equal(centroids.begin() + a * sub_dim,
                       centroids.begin() + (a + 1) * sub_dim,
                       centroids.begin() + b * sub_dim)) {
          return true;
        }
      }
    }
    return false;
  };

  for (std::uint32_t it = 0; it < iters; ++it) {
    const bool changed = step();
    if (!changed && it > 0) break;
  }
  // Coincident cluster means collapse to the lowest index on reassignment and
  // the empty-cluster repair splits them again; a few extra steps resolve it
  // whenever the data has enough distinct points.
  for (int extra = 0; extra < 8 && has_duplicate_centroids(); ++extra) {
    step();
  }
  if (has_duplicate_centroids()) {
    throw InsufficientDataError(
        "training data cannot support k distinct centroids in a subspace");
  }
  return centroids;
}

}  // namespace detail

inline PQConfig resolve_pq_config(PQConfig cfg, std::size_t dim) {
  if (cfg.num_subspaces == 0) {
    cfg.num_subspaces = default_num_subspaces(dim);
  }
  return cfg;
}

// Per-subspace k-means with k-means++ seeding; deterministic per seed.
inline PQCodebook train_codebook(const EmbeddingSet& train, PQConfig cfg) {
  if (train.empty()) throw EmptyInputError("empty training set");
  cfg = resolve_pq_config(cfg, train.dim());
  const std::uint32_t m = cfg.num_subspaces;
  const std::uint32_t k = cfg.centroids_per_subspace;
  if (m == 0 || train.dim() % m != 0) {
    throw ConfigError("num_subspaces must divide dimension " +
                      std::to_string(train.dim()));
  }
  if (k < 2) throw ConfigError("centroids_per_subspace must be >= 2");
  if (cfg.kmeans_iters < 1) throw ConfigError("kmeans_iters must be >= 1");
  if (train.size() < k) {
    throw InsufficientDataError("need at least k=" + std::to_string(k) +
                                " training rows, have " +
                                std::to_string(train.size()));
  }
  const std::uint32_t sub_dim =
      static_cast<std::uint32_t>(train.dim()) / m;

  std::vector<double> all(static_cast<std::size_t>(m) * k * sub_dim);
  std::vector<double> slice(train.size() * sub_dim);
  for (std::uint32_t s = 0; s < m; ++s) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      const VecView r = train.row(i);
      std::copy_n(r.data() + s * sub_dim, sub_dim,
                  slice.data() + i * sub_dim);
    }
    Rng rng(substream_seed(cfg.seed, s));
    std::vector<double> ctr = detail::kmeans_subspace(
        slice, train.size(), sub_dim, k, cfg.kmeans_iters, rng);
    std::copy(ctr.begin(), ctr.end(),
              all.begin() + static_cast<std::size_t>(s) * k * sub_dim);
  }
  return PQCodebook(cfg, sub_dim, std::move(all));
}

// Nearest centroid per subspace, ties to the lowest index.
inline PQCode quantize(VecView e, const PQCodebook& cb) {
  if (e.size() != cb.dim()) {
    throw DimensionError("embedding dim " + std::to_string(e.size()) +
                         " vs codebook dim " + std::to_string(cb.dim()));
  }
  const std::uint32_t m = cb.num_subspaces();
  const std::uint32_t k = cb.centroids_per_subspace();
  const std::uint32_t sd = cb.sub_dim();
  PQCode code(m);
  for (std::uint32_t s = 0; s < m; ++s) {
    const double* sub = e.data() + static_cast<std::size_t>(s) * sd;
    double best = std::numeric_limits<double>::max();
    std::uint32_t best_c = 0;
    for (std::uint32_t c = 0; c < k; ++c) {
      const double d = detail::subvec_sqdist(sub, cb.centroid(s, c).data(), sd);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    code[s] = best_c;
  }
  return code;
}

inline Vec reconstruct(const PQCode& code, const PQCodebook& cb) {
  if (code.size() != cb.num_subspaces()) {
    throw CodeError("code length " + std::to_string(code.size()) +
                    " vs m=" + std::to_string(cb.num_subspaces()));
  }
  Vec out;
  out.reserve(cb.dim());
  for (std::uint32_t s = 0; s < code.size(); ++s) {
    if (code[s] >= cb.centroids_per_subspace()) {
      throw CodeError("centroid index out of range: " +
                      std::to_string(code[s]));
    }
    const VecView c = cb.centroid(s, code[s]);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

// ||e - R(Q(e))||^2 without materializing the reconstruction: the per-subspace
// minima are the residual terms.
inline double quantization_residual(VecView e, const PQCodebook& cb) {
  if (e.size() != cb.dim()) {
    throw DimensionError("embedding dim " + std::to_string(e.size()) +
                         " vs codebook dim " + std::to_string(cb.dim()));
  }
  const std::uint32_t m = cb.num_subspaces();
  const std::uint32_t k = cb.centroids_per_subspace();
  const std::uint32_t sd = cb.sub_dim();
  double total = 0.0;
  for (std::uint32_t s = 0; s < m; ++s) {
    const double* sub = e.data() + static_cast<std::size_t>(s) * sd;
    double best = std::numeric_limits<double>::max();
    for (std::uint32_t c = 0; c < k; ++c) {
      const double d = detail::subvec_sqdist(sub, cb.centroid(s, c).data(), sd);
      if (d < best) best = d;
    }
    total += best;
  }
  return total;
}

inline double reconstruction_mse(const EmbeddingSet& set,
                                 const PQCodebook& cb) {
  if (set.empty()) throw EmptyInputError("empty embedding set");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Vec recon = reconstruct(quantize(set.row(i), cb), cb);
    total += squared_euclidean(set.row(i), recon);
  }
  return total / static_cast<double>(set.size());
}

// Codebook file: "SCPQ", version u32, m u32, k u32, sub_dim u32,
// then m*k*sub_dim float32 LE.
inline void save_codebook(const PQCodebook& cb, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("cannot open for write: " + path);
  os.write(kCodebookMagic, 4);
  detail::write_u32(os, kCodebookVersion);
  detail::write_u32(os, cb.num_subspaces());
  detail::write_u32(os, cb.centroids_per_subspace());
  detail::write_u32(os, cb.sub_dim());
  for (double x : cb.raw()) {
    detail::write_f32(os, static_cast<float>(x));
  }
  if (!os) throw IOError("write failed: " + path);
}

inline PQCodebook load_codebook(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCodebookMagic, 4) != 0) {
    throw IOError("bad codebook magic in " + path);
  }
  const std::uint32_t version = detail::read_u32(is);
  if (version != kCodebookVersion) {
    throw IOError("unsupported codebook version " + std::to_string(version));
  }
  PQConfig cfg;
  cfg.num_subspaces = detail::read_u32(is);
  cfg.centroids_per_subspace = detail::read_u32(is);
  const std::uint32_t sub_dim = detail::read_u32(is);
  const std::size_t total = static_cast<std::size_t>(cfg.num_subspaces) *
                            cfg.centroids_per_subspace * sub_dim;
  std::vector<double> centroids;
  centroids.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    centroids.push_back(static_cast<double>(detail::read_f32(is)));
  }
  if (!is) throw IOError("truncated codebook: " + path);
  return PQCodebook(cfg, sub_dim, std::move(centroids));
}

}  // namespace scert
