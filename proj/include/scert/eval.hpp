#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scert/certainty.hpp"
#include "scert/error.hpp"
#include "scert/gravity.hpp"
#include "scert/io.hpp"
#include "scert/knn.hpp"
#include "scert/stats.hpp"

namespace scert {

enum class ScoreVariant { kStability, kDensity, kCombined };

struct AblationConfig {
  std::string label;
  ScoreVariant variant = ScoreVariant::kCombined;
  Combiner combiner = Combiner::kHarmonic;
  double alpha = 0.6;
  double beta = 0.4;
};

inline std::vector<AblationConfig> default_ablation_configs() {
  std::vector<AblationConfig> out;
  out.push_back({"stability-only", ScoreVariant::kStability,
                 Combiner::kHarmonic, 0.6, 0.4});
  out.push_back({"density-only", ScoreVariant::kDensity, Combiner::kHarmonic,
                 0.6, 0.4});
  out.push_back(
      {"harmonic", ScoreVariant::kCombined, Combiner::kHarmonic, 0.6, 0.4});
  out.push_back(
      {"linear", ScoreVariant::kCombined, Combiner::kLinear, 0.6, 0.4});
  out.push_back(
      {"product", ScoreVariant::kCombined, Combiner::kProduct, 0.6, 0.4});
  return out;
}

struct AblationRow {
  std::string label;
  double pearson = 0.0;
  double spearman = 0.0;
  double mean_score = 0.0;
  double mean_recall = 0.0;
};

// Low-score queries get their retrieval K expanded before recall is measured.
struct AblationGate {
  double tau = 0.5;
  std::size_t expand_factor = 2;
  std::size_t expand_cap = 100;
};

struct Timings {
  double search_ms = 0.0;
  double score_ms = 0.0;
  double overhead_fraction = 0.0;
};

// Which retrieval the recall side of the report measures. Scoring always
// sees exact neighbor geometry; recall against quantized retrieval is the
// default because that is the system the score is meant to predict.
enum class RetrievalMode { kExact, kAdc };

inline std::string to_string(RetrievalMode m) {
  return m == RetrievalMode::kExact ? "exact" : "adc";
}

inline RetrievalMode retrieval_mode_from_string(const std::string& s) {
  if (s == "exact") return RetrievalMode::kExact;
  if (s == "adc") return RetrievalMode::kAdc;
  throw ConfigError("unknown retrieval mode: " + s);
}

struct EvalReport {
  std::map<std::string, double> per_query_recall;
  double mean_recall = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
  BootstrapCI recall_ci;
  std::vector<AblationRow> ablation_rows;
  std::optional<Timings> timings;
};

namespace detail {

// Everything an ablation row needs, computed once per query so every row
// sees exactly the same retrieval and scoring state.
struct QueryRecord {
  std::string id;
  std::size_t row = 0;
  CertaintyScore score;
  double base_recall = 0.0;
};

inline NeighborList retrieve(const Index& ix, VecView q, std::size_t K,
                             const std::string& qid, RetrievalMode mode) {
  return mode == RetrievalMode::kAdc ? search_adc(ix, q, K, qid)
                                     : search_exact(ix, q, K, qid);
}

inline std::vector<QueryRecord> collect_query_records(
    const Index& ix, const Scorer& scorer, const EmbeddingSet& queries,
    const QrelSet& qrels, std::size_t K, RetrievalMode mode) {
  std::vector<QueryRecord> records;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::string& qid = queries.id(i);
    const auto rel = qrels.find(qid);
    if (rel == qrels.end() || rel->second.empty()) continue;
    QueryRecord rec;
    rec.id = qid;
    rec.row = i;
    const NeighborList neighbors = search_exact(ix, queries.row(i), K, qid);
    rec.score = scorer.assess_with_neighbors(queries.row(i), qid, neighbors);
    const NeighborList retrieved =
        mode == RetrievalMode::kExact
            ? neighbors
            : retrieve(ix, queries.row(i), K, qid, mode);
    rec.base_recall = recall_at_k(retrieved, rel->second, K);
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    throw EmptyInputError("no query has relevance judgments");
  }
  return records;
}

inline double variant_value(const CertaintyScore& s, const AblationConfig& ac) {
  switch (ac.variant) {
    case ScoreVariant::kStability:
      return s.stability;
    case ScoreVariant::kDensity:
      return s.norm_density;
    case ScoreVariant::kCombined:
      break;
  }
  return combine(s.stability, s.norm_density, ac.combiner, ac.alpha, ac.beta);
}

inline std::vector<AblationRow> ablation_rows_over(
    const Index& ix, const EmbeddingSet& queries, const QrelSet& qrels,
    const std::vector<QueryRecord>& records,
    const std::vector<AblationConfig>& configs, std::size_t K,
    const AblationGate& gate, RetrievalMode mode) {
  std::vector<AblationRow> rows;
  for (const AblationConfig& ac : configs) {
    AblationRow row;
    row.label = ac.label;
    std::map<std::string, double> score_map;
    std::map<std::string, double> recall_map;
    double recall_acc = 0.0;
    for (const QueryRecord& rec : records) {
      const double v = variant_value(rec.score, ac);
      score_map[rec.id] = v;
      recall_map[rec.id] = rec.base_recall;
      row.mean_score += v;
      double gated = rec.base_recall;
      if (v < gate.tau) {
        const std::size_t big =
            std::min(K * gate.expand_factor, gate.expand_cap);
        const NeighborList expanded =
            retrieve(ix, queries.row(rec.row), big, rec.id, mode);
        gated = recall_at_k(expanded, qrels.at(rec.id), big);
      }
      recall_acc += gated;
    }
    const double n = static_cast<double>(records.size());
    row.mean_score /= n;
    row.mean_recall = recall_acc / n;
    const Correlation c = correlate(score_map, recall_map);
    row.pearson = c.pearson;
    row.spearman = c.spearman;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

struct EvalConfig {
  ScorerConfig scorer;
  AblationGate gate;
  RetrievalMode retrieval = RetrievalMode::kAdc;
  std::size_t bootstrap_resamples = 1000;
  bool with_ablation = true;
  std::uint64_t seed = 1;
};

inline EvalReport evaluate(const Index& ix, const PQCodebook& cb,
                           const EmbeddingSet& queries, const QrelSet& qrels,
                           const EvalConfig& cfg) {
  const Index* rix = &ix;
  std::optional<Index> adc_ix;
  if (cfg.retrieval == RetrievalMode::kAdc && !ix.has_codebook()) {
    adc_ix.emplace(ix.corpus_ptr(), cb);
    rix = &*adc_ix;
  }
  const Scorer scorer(ix, cb, cfg.scorer);
  const std::vector<detail::QueryRecord> records = detail::collect_query_records(
      *rix, scorer, queries, qrels, cfg.scorer.k, cfg.retrieval);

  EvalReport report;
  std::map<std::string, double> score_map;
  for (const detail::QueryRecord& rec : records) {
    report.per_query_recall[rec.id] = rec.base_recall;
    score_map[rec.id] = rec.score.combined;
    report.mean_recall += rec.base_recall;
  }
  report.mean_recall /= static_cast<double>(records.size());
  const Correlation c = correlate(score_map, report.per_query_recall);
  report.pearson = c.pearson;
  report.spearman = c.spearman;
  std::vector<double> recall_values;
  recall_values.reserve(records.size());
  for (const auto& [qid, r] : report.per_query_recall) {
    recall_values.push_back(r);
  }
  report.recall_ci =
      bootstrap_ci(recall_values, cfg.bootstrap_resamples, cfg.seed);
  if (cfg.with_ablation) {
    report.ablation_rows = detail::ablation_rows_over(
        *rix, queries, qrels, records, default_ablation_configs(), cfg.scorer.k,
        cfg.gate, cfg.retrieval);
  }
  return report;
}

inline std::vector<AblationRow> run_ablation(
    const SyntheticInstance& inst, const Index& ix, const PQCodebook& cb,
    const std::vector<AblationConfig>& configs, const ScorerConfig& base = {},
    const AblationGate& gate = {},
    RetrievalMode mode = RetrievalMode::kAdc) {
  if (configs.empty()) throw EmptyInputError("no ablation configs");
  const Index* rix = &ix;
  std::optional<Index> adc_ix;
  if (mode == RetrievalMode::kAdc && !ix.has_codebook()) {
    adc_ix.emplace(ix.corpus_ptr(), cb);
    rix = &*adc_ix;
  }
  const Scorer scorer(ix, cb, base);
  const std::vector<detail::QueryRecord> records = detail::collect_query_records(
      *rix, scorer, inst.queries, inst.relevance, base.k, mode);
  return detail::ablation_rows_over(*rix, inst.queries, inst.relevance, records,
                                    configs, base.k, gate, mode);
}

namespace detail {

inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Median per-query wall time over the repetitions for search alone and for
// search plus scoring; calibration happens once, outside the timed region.
inline Timings measure_overhead(const EmbeddingSet& queries, const Index& ix,
                                const PQCodebook& cb, std::size_t K,
                                std::size_t repetitions,
                                const ScorerConfig& scfg = {}) {
  if (repetitions < 3) throw ConfigError("need >= 3 timing repetitions");
  if (queries.empty()) throw EmptyInputError("no queries to time");
  ScorerConfig cfg = scfg;
  cfg.k = K;
  const Scorer scorer(ix, cb, cfg);
  const double nq = static_cast<double>(queries.size());

  double sink = 0.0;
  std::vector<double> search_ms, total_ms;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    double t0 = detail::now_ms();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const NeighborList nb = search_exact(ix, queries.row(i), K, queries.id(i));
      sink += nb.back().sq_dist;
    }
    search_ms.push_back((detail::now_ms() - t0) / nq);

    t0 = detail::now_ms();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const NeighborList nb = search_exact(ix, queries.row(i), K, queries.id(i));
      const CertaintyScore s =
          scorer.assess_with_neighbors(queries.row(i), queries.id(i), nb);
      sink += nb.back().sq_dist + s.combined;
    }
    total_ms.push_back((detail::now_ms() - t0) / nq);
  }
  volatile double keep = sink;
  (void)keep;

  Timings t;
  t.search_ms = detail::median_of(search_ms);
  const double total = detail::median_of(total_ms);
  t.score_ms = std::max(0.0, total - t.search_ms);
  t.overhead_fraction = total > 0.0 ? t.score_ms / total : 0.0;
  return t;
}

// Median per-query cost of the scoring step alone, retrieval precomputed.
inline double median_scoring_ms(const EmbeddingSet& queries, const Index& ix,
                                const PQCodebook& cb, std::size_t K,
                                std::size_t repetitions,
                                const ScorerConfig& scfg = {}) {
  if (repetitions < 3) throw ConfigError("need >= 3 timing repetitions");
  if (queries.empty()) throw EmptyInputError("no queries to time");
  ScorerConfig cfg = scfg;
  cfg.k = K;
  const Scorer scorer(ix, cb, cfg);
  std::vector<NeighborList> neighbors;
  neighbors.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    neighbors.push_back(search_exact(ix, queries.row(i), K, queries.id(i)));
  }
  double sink = 0.0;
  std::vector<double> reps;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    const double t0 = detail::now_ms();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const CertaintyScore s = scorer.assess_with_neighbors(
          queries.row(i), queries.id(i), neighbors[i]);
      sink += s.combined;
    }
    reps.push_back((detail::now_ms() - t0) /
                   static_cast<double>(queries.size()));
  }
  volatile double keep = sink;
  (void)keep;
  return detail::median_of(reps);
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mean_recall"] = r.mean_recall;
  j["pearson"] = r.pearson;
  j["spearman"] = r.spearman;
  j["bootstrap_ci"] = {{"low", r.recall_ci.low},
                       {"high", r.recall_ci.high},
                       {"point", r.recall_ci.point}};
  j["ablation"] = nlohmann::ordered_json::array();
  for (const AblationRow& row : r.ablation_rows) {
    j["ablation"].push_back({{"label", row.label},
                             {"pearson", row.pearson},
                             {"spearman", row.spearman},
                             {"mean_score", row.mean_score},
                             {"mean_recall", row.mean_recall}});
  }
  if (r.timings) {
    j["timings"] = {{"search_ms", r.timings->search_ms},
                    {"score_ms", r.timings->score_ms},
                    {"overhead_fraction", r.timings->overhead_fraction}};
  } else {
    j["timings"] = nullptr;
  }
  j["per_query_recall"] = nlohmann::ordered_json::object();
  for (const auto& [qid, rec] : r.per_query_recall) {
    j["per_query_recall"][qid] = rec;
  }
  return j;
}

inline std::string render_report(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %9s %9s %11s %11s\n", "variant",
                "pearson", "spearman", "mean score", "mean recall");
  out += line;
  out += std::string(60, '-');
  out += '\n';
  for (const AblationRow& row : r.ablation_rows) {
    std::snprintf(line, sizeof(line), "%-16s %9.4f %9.4f %11.4f %11.4f\n",
                  row.label.c_str(), row.pearson, row.spearman, row.mean_score,
                  row.mean_recall);
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "\nmean recall %.4f  (95%% CI [%.4f, %.4f])\n", r.mean_recall,
                r.recall_ci.low, r.recall_ci.high);
  out += line;
  std::snprintf(line, sizeof(line), "correlation pearson %.4f spearman %.4f\n",
                r.pearson, r.spearman);
  out += line;
  if (r.timings) {
    std::snprintf(line, sizeof(line),
                  "timing search %.4f ms  scoring %.4f ms  overhead %.2f%%\n",
                  r.timings->search_ms, r.timings->score_ms,
                  100.0 * r.timings->overhead_fraction);
    out += line;
  }
  return out;
}

}  // namespace scert
