#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "scert/certainty.hpp"
#include "scert/core.hpp"
#include "scert/error.hpp"
#include "scert/io.hpp"
#include "scert/rng.hpp"

namespace scert {

enum class DepthClass { kDeep, kMedium, kShallow };

inline const char* to_string(DepthClass c) {
  switch (c) {
    case DepthClass::kDeep: return "deep";
    case DepthClass::kMedium: return "medium";
    default: return "shallow";
  }
}

inline DepthClass depth_class_from_string(const std::string& s) {
  if (s == "deep") return DepthClass::kDeep;
  if (s == "medium") return DepthClass::kMedium;
  if (s == "shallow") return DepthClass::kShallow;
  throw ConfigError("unknown depth class: " + s);
}

// Per-class sampling variances; deep wells are the tightest.
struct VarianceBands {
  double deep = 0.05;
  double medium = 0.25;
  double shallow = 1.0;

  double of(DepthClass c) const {
    switch (c) {
      case DepthClass::kDeep: return deep;
      case DepthClass::kMedium: return medium;
      default: return shallow;
    }
  }
  double max_variance() const { return shallow; }
  void validate() const {
    if (!(deep > 0.0) || !(medium > 0.0) || !(shallow > 0.0)) {
      throw ConfigError("variance bands must be positive");
    }
    if (!(deep < medium && medium < shallow)) {
      throw ConfigError("variance bands must be ordered deep < medium < shallow");
    }
  }
};

struct GravityWell {
  std::string concept_id;
  Vec centroid;
  double variance = 1.0;
  DepthClass depth_class = DepthClass::kShallow;
};

// phi_c(x) = ||x - mu||^2 / (2 sigma^2) + log(2 pi sigma^2)
inline double well_potential(VecView x, const GravityWell& w) {
  if (!(w.variance > 0.0)) throw ConfigError("well variance must be positive");
  return squared_euclidean(x, w.centroid) / (2.0 * w.variance) +
         std::log(2.0 * 3.14159265358979323846 * w.variance);
}

struct GravityConfig {
  std::size_t num_wells = 30;
  std::size_t docs_per_well = 200;
  std::size_t queries_per_well = 20;
  std::size_t dim = 64;
  VarianceBands bands;
  std::uint64_t seed = 0;
  std::size_t placement_attempts = 256;
  // New centroids land between min_sep and min_sep*(1+spacing_jitter) from
  // their anchor; smaller jitter packs wells tighter.
  double spacing_jitter = 0.05;
};

struct SyntheticInstance {
  std::vector<GravityWell> wells;
  EmbeddingSet corpus;
  EmbeddingSet queries;
  std::map<std::string, std::set<std::string>> relevance;  // qid -> doc ids
  std::map<std::string, std::string> provenance;           // any id -> concept
  std::uint64_t seed = 0;

  const GravityWell& well_of(const std::string& id) const {
    const auto it = provenance.find(id);
    if (it == provenance.end()) throw JoinError("unknown id: " + id);
    for (const GravityWell& w : wells) {
      if (w.concept_id == it->second) return w;
    }
    throw JoinError("unknown concept: " + it->second);
  }
};

namespace detail {

inline Vec random_unit_vector(Rng& rng, std::size_t dim) {
  NormalSampler normal;
  Vec v(dim);
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      v[d] = normal(rng);
      norm_sq += v[d] * v[d];
    }
  } while (norm_sq == 0.0);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
  return v;
}

// Growth placement: each new centroid sits just outside the minimum
// separation from an anchor of the same depth class when one exists, so
// classes form contiguous regions and same-class wells genuinely overlap.
inline std::vector<Vec> place_centroids(const GravityConfig& cfg, Rng& rng,
                                        double min_sep,
                                        const std::vector<DepthClass>& classes) {
  std::vector<Vec> centroids;
  centroids.reserve(cfg.num_wells);
  centroids.push_back(Vec(cfg.dim, 0.0));
  while (centroids.size() < cfg.num_wells) {
    std::vector<std::size_t> anchors;
    for (std::size_t w = 0; w < centroids.size(); ++w) {
      if (classes[w] == classes[centroids.size()]) anchors.push_back(w);
    }
    if (anchors.empty()) {
      for (std::size_t w = 0; w < centroids.size(); ++w) anchors.push_back(w);
    }
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.placement_attempts; ++attempt) {
      const std::size_t anchor = anchors[uniform_index(rng, anchors.size())];
      const Vec dir = random_unit_vector(rng, cfg.dim);
      const double r = min_sep * uniform_range(rng, 1.0, 1.0 + cfg.spacing_jitter);
      Vec cand(cfg.dim);
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        cand[d] = centroids[anchor][d] + r * dir[d];
      }
      bool ok = true;
      for (const Vec& c : centroids) {
        if (squared_euclidean(cand, c) < min_sep * min_sep) {
          ok = false;
          break;
        }
      }
      if (ok) {
        centroids.push_back(std::move(cand));
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw PlacementError("could not place well " +
                           std::to_string(centroids.size()) + " after " +
                           std::to_string(cfg.placement_attempts) +
                           " attempts");
    }
  }
  return centroids;
}

inline std::string zero_pad(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
  return buf;
}

}  // namespace detail

// Deterministic per seed: one PRNG stream drives placement, then docs, then
// queries, in well order.
inline SyntheticInstance generate_instance(const GravityConfig& cfg) {
  if (cfg.num_wells < 1 || cfg.docs_per_well < 1 || cfg.queries_per_well < 1 ||
      cfg.dim < 1) {
    throw ConfigError("all gravity instance counts must be >= 1");
  }
  if (!(cfg.spacing_jitter >= 0.0)) {
    throw ConfigError("spacing_jitter must be >= 0");
  }
  cfg.bands.validate();

  Rng rng(splitmix64(cfg.seed));
  const double min_sep = 8.0 * std::sqrt(cfg.bands.max_variance());
  std::vector<DepthClass> classes(cfg.num_wells);
  for (std::size_t w = 0; w < cfg.num_wells; ++w) {
    classes[w] = static_cast<DepthClass>(w % 3);
  }
  std::vector<Vec> centroids =
      detail::place_centroids(cfg, rng, min_sep, classes);

  SyntheticInstance inst;
  inst.seed = cfg.seed;
  inst.wells.reserve(cfg.num_wells);
  for (std::size_t w = 0; w < cfg.num_wells; ++w) {
    const DepthClass cls = classes[w];
    GravityWell well;
    well.concept_id = "c" + detail::zero_pad(w, 3);
    well.centroid = std::move(centroids[w]);
    well.variance = cfg.bands.of(cls);
    well.depth_class = cls;
    inst.wells.push_back(std::move(well));
  }

  NormalSampler normal;
  auto draw_around = [&](const GravityWell& well) {
    const double sigma = std::sqrt(well.variance);
    Vec v(cfg.dim);
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      v[d] = well.centroid[d] + sigma * normal(rng);
    }
    return v;
  };

  std::vector<double> doc_data;
  std::vector<std::string> doc_ids;
  doc_data.reserve(cfg.num_wells * cfg.docs_per_well * cfg.dim);
  for (const GravityWell& well : inst.wells) {
    for (std::size_t i = 0; i < cfg.docs_per_well; ++i) {
      const Vec v = draw_around(well);
      doc_data.insert(doc_data.end(), v.begin(), v.end());
      const std::string id =
          "d-" + well.concept_id + "-" + detail::zero_pad(i, 4);
      doc_ids.push_back(id);
      inst.provenance[id] = well.concept_id;
    }
  }

  std::vector<double> query_data;
  std::vector<std::string> query_ids;
  for (const GravityWell& well : inst.wells) {
    std::set<std::string> relevant;
    for (std::size_t i = 0; i < cfg.docs_per_well; ++i) {
      relevant.insert("d-" + well.concept_id + "-" + detail::zero_pad(i, 4));
    }
    for (std::size_t i = 0; i < cfg.queries_per_well; ++i) {
      const Vec v = draw_around(well);
      query_data.insert(query_data.end(), v.begin(), v.end());
      const std::string id =
          "q-" + well.concept_id + "-" + detail::zero_pad(i, 3);
      query_ids.push_back(id);
      inst.provenance[id] = well.concept_id;
      inst.relevance[id] = relevant;
    }
  }

  inst.corpus = EmbeddingSet(cfg.dim, std::move(doc_data), std::move(doc_ids));
  inst.queries =
      EmbeddingSet(cfg.dim, std::move(query_data), std::move(query_ids));
  return inst;
}

// ---- instance bundles ------------------------------------------------------

// Bundle layout under dir: corpus.scrt, queries.scrt, qrels.txt (TREC),
// wells.scrt (centroid rows), wells.json (per-well metadata + seed).
inline std::vector<std::string> save_instance(const SyntheticInstance& inst,
                                              const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string corpus_path = (fs::path(dir) / "corpus.scrt").string();
  const std::string queries_path = (fs::path(dir) / "queries.scrt").string();
  const std::string qrels_path = (fs::path(dir) / "qrels.txt").string();
  const std::string wells_scrt = (fs::path(dir) / "wells.scrt").string();
  const std::string wells_json = (fs::path(dir) / "wells.json").string();

  save_embeddings(inst.corpus, corpus_path);
  save_embeddings(inst.queries, queries_path);

  QrelSet qrels;
  for (const auto& [qid, docs] : inst.relevance) qrels[qid] = docs;
  save_qrels(qrels, qrels_path);

  std::vector<double> ctr_data;
  std::vector<std::string> ctr_ids;
  for (const GravityWell& w : inst.wells) {
    ctr_data.insert(ctr_data.end(), w.centroid.begin(), w.centroid.end());
    ctr_ids.push_back(w.concept_id);
  }
  save_embeddings(EmbeddingSet(inst.corpus.dim(), std::move(ctr_data),
                               std::move(ctr_ids)),
                  wells_scrt);

  nlohmann::ordered_json manifest;
  manifest["seed"] = inst.seed;
  manifest["wells"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < inst.wells.size(); ++i) {
    const GravityWell& w = inst.wells[i];
    manifest["wells"].push_back({{"concept_id", w.concept_id},
                                 {"centroid_offset", i},
                                 {"variance", w.variance},
                                 {"depth_class", to_string(w.depth_class)}});
  }
  std::ofstream os(wells_json);
  if (!os) throw IOError("cannot open for write: " + wells_json);
  os << manifest.dump(2) << '\n';

  return {corpus_path, queries_path, qrels_path, wells_scrt, wells_json};
}

// Ids carry their concept: "d-<concept>-NNNN" / "q-<concept>-NNN".
inline std::string concept_of_id(const std::string& id) {
  const std::size_t first = id.find('-');
  const std::size_t last = id.rfind('-');
  if (first == std::string::npos || last == first) {
    throw JoinError("id does not encode a concept: " + id);
  }
  return id.substr(first + 1, last - first - 1);
}

inline SyntheticInstance load_instance(const std::string& dir) {
  namespace fs = std::filesystem;
  SyntheticInstance inst;
  inst.corpus = load_embeddings((fs::path(dir) / "corpus.scrt").string());
  inst.queries = load_embeddings((fs::path(dir) / "queries.scrt").string());
  const QrelSet qrels = load_qrels((fs::path(dir) / "qrels.txt").string());
  for (const auto& [qid, docs] : qrels) inst.relevance[qid] = docs;

  const EmbeddingSet centroids =
      load_embeddings((fs::path(dir) / "wells.scrt").string());
  std::ifstream is((fs::path(dir) / "wells.json").string());
  if (!is) throw IOError("cannot open wells.json in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  inst.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& entry : manifest.at("wells")) {
    GravityWell w;
    w.concept_id = entry.at("concept_id").get<std::string>();
    const std::size_t off = entry.at("centroid_offset").get<std::size_t>();
    const VecView row = centroids.row(off);
    w.centroid.assign(row.begin(), row.end());
    w.variance = entry.at("variance").get<double>();
    w.depth_class =
        depth_class_from_string(entry.at("depth_class").get<std::string>());
    inst.wells.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < inst.corpus.size(); ++i) {
    inst.provenance[inst.corpus.id(i)] = concept_of_id(inst.corpus.id(i));
  }
  for (std::size_t i = 0; i < inst.queries.size(); ++i) {
    inst.provenance[inst.queries.id(i)] = concept_of_id(inst.queries.id(i));
  }
  return inst;
}

// ---- probes ----------------------------------------------------------------

struct DepthClassStats {
  DepthClass depth_class = DepthClass::kDeep;
  std::size_t count = 0;
  double mean_sq_error = 0.0;
  double mean_stability = 0.0;
};

struct Theorem2Report {
  std::vector<DepthClassStats> per_class;  // deep, medium, shallow order
  bool error_weakly_increasing = false;
};

// Groups queries by well depth and reports mean quantization error and mean
// stability per class (sigma from global calibration over the corpus).
inline Theorem2Report theorem2_probe(const SyntheticInstance& inst,
                                     const PQCodebook& cb) {
  const SigmaEstimate sigma =
      estimate_sigma(SigmaMode::kGlobalCalibration, inst.corpus, cb);
  Theorem2Report report;
  report.per_class.resize(3);
  for (int c = 0; c < 3; ++c) {
    report.per_class[c].depth_class = static_cast<DepthClass>(c);
  }
  for (std::size_t i = 0; i < inst.queries.size(); ++i) {
    const GravityWell& well = inst.well_of(inst.queries.id(i));
    DepthClassStats& stats =
        report.per_class[static_cast<int>(well.depth_class)];
    ++stats.count;
    stats.mean_sq_error += quantization_residual(inst.queries.row(i), cb);
    stats.mean_stability += stability_score(inst.queries.row(i), cb, sigma);
  }
  for (DepthClassStats& stats : report.per_class) {
    if (stats.count > 0) {
      stats.mean_sq_error /= static_cast<double>(stats.count);
      stats.mean_stability /= static_cast<double>(stats.count);
    }
  }
  report.error_weakly_increasing =
      report.per_class[0].mean_sq_error <= report.per_class[1].mean_sq_error &&
      report.per_class[1].mean_sq_error <= report.per_class[2].mean_sq_error;
  return report;
}

struct Theorem3Row {
  std::string query_id;
  double combined = 0.0;
  double bound = 0.0;
  double recall = 0.0;
  bool satisfied = false;
};

struct Theorem3Report {
  std::vector<Theorem3Row> rows;  // ordered by query id
  double fraction_satisfied = 0.0;
  double mean_slack = 0.0;  // mean of (recall - bound)
};

// Diagnostic only: evaluates the reliability bound per query and reports how
// often observed recall clears it. Never asserted.
inline Theorem3Report theorem3_probe(
    const std::vector<CertaintyScore>& scores,
    const std::map<std::string, double>& recalls, std::size_t K,
    std::size_t D) {
  if (scores.size() != recalls.size()) {
    throw JoinError("scores and recalls cover different query sets");
  }
  std::map<std::string, double> combined;
  for (const CertaintyScore& s : scores) combined[s.query_id] = s.combined;
  if (combined.size() != recalls.size()) {
    throw JoinError("duplicate or missing query ids in scores");
  }
  Theorem3Report report;
  for (const auto& [qid, rec] : recalls) {
    const auto it = combined.find(qid);
    if (it == combined.end()) throw JoinError("no score for query " + qid);
    Theorem3Row row;
    row.query_id = qid;
    row.combined = it->second;
    row.bound = recall_bound(it->second, K, D);
    row.recall = rec;
    row.satisfied = rec >= row.bound;
    report.mean_slack += rec - row.bound;
    if (row.satisfied) report.fraction_satisfied += 1.0;
    report.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(report.rows.size());
  if (n > 0) {
    report.fraction_satisfied /= n;
    report.mean_slack /= n;
  }
  return report;
}

}  // namespace scert
