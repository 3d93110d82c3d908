#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "scert/monitor.hpp"

using namespace scert;

namespace {

EmbeddingSet rig_corpus() {
  Rng rng(splitmix64(21));
  return oracles::random_embeddings(rng, 50, 4, "d");
}

PQCodebook rig_codebook(const EmbeddingSet& corpus) {
  PQConfig pcfg;
  pcfg.num_subspaces = 2;
  pcfg.centroids_per_subspace = 4;
  pcfg.seed = 21;
  return train_codebook(corpus, pcfg);
}

ScorerConfig rig_scorer_config() {
  ScorerConfig scfg;
  scfg.k = 5;
  scfg.calibration_sample = 0;
  return scfg;
}

// The scorer keeps references into the index and codebook, so everything is
// built in member order and the rig itself never moves.
struct Rig {
  EmbeddingSet corpus;
  PQCodebook cb;
  Index ix;
  Scorer scorer;

  Rig()
      : corpus(rig_corpus()),
        cb(rig_codebook(corpus)),
        ix(build_index(corpus, cb)),
        scorer(ix, cb, rig_scorer_config()) {}
  Rig(const Rig&) = delete;
  Rig& operator=(const Rig&) = delete;

  Vec query(std::uint64_t salt) const {
    Rng rng(splitmix64(1000 + salt));
    NormalSampler normal;
    Vec q(corpus.dim());
    for (double& v : q) v = normal(rng);
    return q;
  }
};

}  // namespace

TEST_CASE("monitor config validation") {
  const Rig rig;
  MonitorConfig cfg;

  cfg.threshold = 1.0;
  CHECK_THROWS_AS(Monitor(rig.scorer, cfg), ConfigError);
  cfg.threshold = -0.1;
  CHECK_THROWS_AS(Monitor(rig.scorer, cfg), ConfigError);
  cfg.threshold = 0.0;
  CHECK_NOTHROW(Monitor(rig.scorer, cfg));

  cfg = MonitorConfig{};
  cfg.window = 0;
  CHECK_THROWS_AS(Monitor(rig.scorer, cfg), ConfigError);

  cfg = MonitorConfig{};
  cfg.policy = AdaptivePolicy::kExpandK;
  cfg.expand_factor = 1;
  CHECK_THROWS_AS(Monitor(rig.scorer, cfg), ConfigError);
  cfg.expand_factor = 2;
  cfg.expand_cap = 4;  // below the scorer's base K
  CHECK_THROWS_AS(Monitor(rig.scorer, cfg), ConfigError);
  cfg.expand_cap = 5;
  CHECK_NOTHROW(Monitor(rig.scorer, cfg));

  // factor and cap are only checked when the policy uses them
  cfg = MonitorConfig{};
  cfg.policy = AdaptivePolicy::kNone;
  cfg.expand_factor = 1;
  cfg.expand_cap = 0;
  CHECK_NOTHROW(Monitor(rig.scorer, cfg));
}

TEST_CASE("detached monitor refuses queries") {
  Monitor m;
  CHECK_THROWS_AS(m.process_query(Vec{0.0}, "q"), StateError);
}

TEST_CASE("alerting is strict and scoring excludes the query id") {
  const Rig rig;
  const Vec q = rig.query(1);

  MonitorConfig cfg;
  cfg.threshold = 0.0;
  Monitor probe(rig.scorer, cfg);
  const auto [ev0, nb0] = probe.process_query(q, "s0");
  REQUIRE(ev0.score.combined < 1.0);
  CHECK_FALSE(ev0.alert);
  CHECK(ev0.expanded_k == 0);
  CHECK(action_label(ev0) == "none");

  const CertaintyScore direct = rig.scorer.assess_with_neighbors(
      q, "s0", search_exact(rig.ix, q, 5, "s0"));
  CHECK(ev0.score.combined == direct.combined);
  CHECK(ev0.score.stability == direct.stability);
  REQUIRE(nb0.size() == 5);

  // at threshold == combined the strict comparison stays quiet
  cfg.threshold = ev0.score.combined;
  Monitor at(rig.scorer, cfg);
  CHECK_FALSE(at.process_query(q, "s0").first.alert);

  // nudging the threshold above it fires
  cfg.threshold = ev0.score.combined + (1.0 - ev0.score.combined) / 2.0;
  Monitor above(rig.scorer, cfg);
  CHECK(above.process_query(q, "s0").first.alert);

  // a corpus row scored under its own id is excluded from its neighbors
  const std::string self = rig.corpus.id(0);
  const NeighborList nbs = probe.process_query(rig.corpus.row(0), self).second;
  for (const Neighbor& n : nbs) CHECK(n.id != self);
}

TEST_CASE("expand-k widens the served list for alerted queries") {
  const Rig rig;
  const Vec q = rig.query(2);

  MonitorConfig cfg;
  cfg.threshold = 0.99;
  cfg.policy = AdaptivePolicy::kExpandK;
  Monitor m(rig.scorer, cfg);
  const auto [ev, nb] = m.process_query(q, "s0");
  REQUIRE(ev.alert);
  CHECK(ev.expanded_k == 10);
  CHECK(action_label(ev) == "expanded-k(10)");
  REQUIRE(nb.size() == 10);

  const NeighborList base = search_exact(rig.ix, q, 5, "s0");
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(nb[i].id == base[i].id);
    CHECK(nb[i].sq_dist == base[i].sq_dist);
  }
  const NeighborList fresh = search_exact(rig.ix, q, 10, "s0");
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    CHECK(nb[i].id == fresh[i].id);
  }

  cfg.expand_cap = 7;
  Monitor capped(rig.scorer, cfg);
  const auto [ev7, nb7] = capped.process_query(q, "s0");
  CHECK(ev7.expanded_k == 7);
  CHECK(nb7.size() == 7);

  cfg = MonitorConfig{};
  cfg.threshold = 0.99;
  cfg.policy = AdaptivePolicy::kNone;
  Monitor none(rig.scorer, cfg);
  const auto [evn, nbn] = none.process_query(q, "s0");
  CHECK(evn.alert);
  CHECK(evn.expanded_k == 0);
  CHECK(nbn.size() == 5);
}

TEST_CASE("stream statistics aggregate in order") {
  const Rig rig;
  MonitorConfig cfg;
  cfg.threshold = 0.6;
  cfg.window = 2;
  Monitor m(rig.scorer, cfg);
  CHECK_THROWS_AS(m.drain_stats(), EmptyInputError);

  std::vector<double> combined;
  std::vector<bool> alerts;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const MonitorEvent ev =
        m.process_query(rig.query(10 + i), "s" + std::to_string(i)).first;
    combined.push_back(ev.score.combined);
    alerts.push_back(ev.alert);
    CHECK(ev.alert == (ev.score.combined < cfg.threshold));

    // trailing window covers the last <= window events
    const std::size_t start = combined.size() > 2 ? combined.size() - 2 : 0;
    double acc = 0.0;
    for (std::size_t j = start; j < combined.size(); ++j) acc += combined[j];
    CHECK(ev.window_stats.mean_combined ==
          Catch::Approx(acc / static_cast<double>(combined.size() - start)));
  }

  const Monitor::Summary s = m.drain_stats();
  CHECK(s.total == 5);
  std::size_t expect_alerts = 0;
  double mean = 0.0, lo = combined[0], hi = combined[0];
  for (std::size_t i = 0; i < 5; ++i) {
    if (alerts[i]) ++expect_alerts;
    mean += combined[i];
    lo = std::min(lo, combined[i]);
    hi = std::max(hi, combined[i]);
  }
  CHECK(s.alerts == expect_alerts);
  CHECK(s.alert_rate == Catch::Approx(expect_alerts / 5.0));
  CHECK(s.mean_combined == Catch::Approx(mean / 5.0));
  CHECK(s.min_combined == lo);
  CHECK(s.max_combined == hi);

  REQUIRE(s.windows.size() == 3);  // tumbling windows of 2, 2, 1
  CHECK(s.windows[0].mean_combined ==
        Catch::Approx((combined[0] + combined[1]) / 2.0));
  CHECK(s.windows[1].mean_combined ==
        Catch::Approx((combined[2] + combined[3]) / 2.0));
  CHECK(s.windows[2].mean_combined == Catch::Approx(combined[4]));
}

TEST_CASE("policy names round trip") {
  CHECK(to_string(AdaptivePolicy::kNone) == "none");
  CHECK(to_string(AdaptivePolicy::kExpandK) == "expand-k");
  CHECK(adaptive_policy_from_string("none") == AdaptivePolicy::kNone);
  CHECK(adaptive_policy_from_string("expand-k") == AdaptivePolicy::kExpandK);
  CHECK_THROWS_AS(adaptive_policy_from_string("widen"), ConfigError);
}
