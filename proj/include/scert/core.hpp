#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "scert/error.hpp"

namespace scert {

// Embeddings are sequences of finite reals. Arithmetic is double throughout;
// files store float32 (see io.hpp).
using Vec = std::vector<double>;
using VecView = std::span<const double>;

inline bool all_finite(VecView v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_same_dim(VecView a, VecView b) {
  if (a.size() != b.size()) {
    throw DimensionError("dimension mismatch: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

// Canonical distance everywhere: squared Euclidean.
inline double squared_euclidean(VecView a, VecView b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return acc;
}

// Immutable after construction; rows stored row-major.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  EmbeddingSet(std::size_t dim, std::vector<double> data,
               std::vector<std::string> ids)
      : dim_(dim), data_(std::move(data)), ids_(std::move(ids)) {
    validate();
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  VecView row(std::size_t i) const {
    return VecView(data_.data() + i * dim_, dim_);
  }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& data() const { return data_; }

 private:
  void validate() {
    if (dim_ == 0 && !ids_.empty()) {
      throw DimensionError("embedding dimension must be >= 1");
    }
    if (data_.size() != ids_.size() * dim_) {
      throw DimensionError("row storage does not match count*dim");
    }
    for (double x : data_) {
      if (!std::isfinite(x)) {
        throw RangeError("non-finite coordinate in embedding set");
      }
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids_.size());
    for (const auto& id : ids_) {
      if (!seen.insert(id).second) {
        throw ConfigError("duplicate id in embedding set: " + id);
      }
    }
  }

  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::string> ids_;
};

}  // namespace scert
