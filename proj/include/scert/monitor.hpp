#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scert/certainty.hpp"
#include "scert/error.hpp"
#include "scert/knn.hpp"

namespace scert {

enum class AdaptivePolicy { kNone, kExpandK };

inline std::string to_string(AdaptivePolicy p) {
  return p == AdaptivePolicy::kNone ? "none" : "expand-k";
}

inline AdaptivePolicy adaptive_policy_from_string(const std::string& s) {
  if (s == "none") return AdaptivePolicy::kNone;
  if (s == "expand-k") return AdaptivePolicy::kExpandK;
  throw ConfigError("unknown adaptive policy: " + s);
}

struct MonitorConfig {
  double threshold = 0.5;
  AdaptivePolicy policy = AdaptivePolicy::kNone;
  std::size_t expand_factor = 2;
  std::size_t expand_cap = 100;
  std::size_t window = 10;
};

struct WindowStats {
  double mean_combined = 0.0;
  double alert_rate = 0.0;
};

struct MonitorEvent {
  std::string query_id;
  CertaintyScore score;
  bool alert = false;
  // 0 means no action; otherwise the K the retrieval was expanded to.
  std::size_t expanded_k = 0;
  WindowStats window_stats;
};

inline std::string action_label(const MonitorEvent& ev) {
  if (ev.expanded_k == 0) return "none";
  return "expanded-k(" + std::to_string(ev.expanded_k) + ")";
}

// Consumes an ordered query stream; statistics are updated in stream order,
// so replaying the same stream yields the same summary.
class Monitor {
 public:
  Monitor() = default;

  Monitor(const Scorer& scorer, MonitorConfig cfg)
      : scorer_(&scorer), cfg_(cfg) {
    // Threshold 0 is allowed and disables alerting outright, since the
    // alert condition is strict less-than.
    if (!(cfg.threshold >= 0.0) || !(cfg.threshold < 1.0)) {
      throw ConfigError("monitor threshold must lie in [0, 1)");
    }
    if (cfg.window < 1) throw ConfigError("monitor window must be >= 1");
    if (cfg.policy == AdaptivePolicy::kExpandK) {
      if (cfg.expand_factor < 2) {
        throw ConfigError("expand-k factor must be >= 2");
      }
      if (cfg.expand_cap < scorer.config().k) {
        throw ConfigError("expand-k cap must be >= base K");
      }
    }
  }

  const MonitorConfig& config() const { return cfg_; }

  std::pair<MonitorEvent, NeighborList> process_query(
      VecView q, const std::string& query_id) {
    if (scorer_ == nullptr) throw StateError("monitor has no scorer attached");
    const std::size_t base_k = scorer_->config().k;
    NeighborList neighbors =
        search_exact(scorer_->index(), q, base_k, query_id);

    MonitorEvent ev;
    ev.query_id = query_id;
    ev.score = scorer_->assess_with_neighbors(q, query_id, neighbors);
    ev.alert = ev.score.combined < cfg_.threshold;
    if (ev.alert && cfg_.policy == AdaptivePolicy::kExpandK) {
      const std::size_t expanded =
          std::min(base_k * cfg_.expand_factor, cfg_.expand_cap);
      neighbors = search_exact(scorer_->index(), q, expanded, query_id);
      ev.expanded_k = expanded;
    }

    combined_.push_back(ev.score.combined);
    alerts_.push_back(ev.alert);
    ev.window_stats = trailing_window();
    return {std::move(ev), std::move(neighbors)};
  }

  struct Summary {
    std::size_t total = 0;
    std::size_t alerts = 0;
    double alert_rate = 0.0;
    double mean_combined = 0.0;
    double min_combined = 0.0;
    double max_combined = 0.0;
    std::vector<WindowStats> windows;
  };

  Summary drain_stats() const {
    if (combined_.empty()) {
      throw EmptyInputError("monitor has processed no queries");
    }
    Summary s;
    s.total = combined_.size();
    s.min_combined = combined_.front();
    s.max_combined = combined_.front();
    double acc = 0.0;
    for (std::size_t i = 0; i < combined_.size(); ++i) {
      acc += combined_[i];
      s.min_combined = std::min(s.min_combined, combined_[i]);
      s.max_combined = std::max(s.max_combined, combined_[i]);
      if (alerts_[i]) ++s.alerts;
    }
    s.mean_combined = acc / static_cast<double>(s.total);
    s.alert_rate = static_cast<double>(s.alerts) / static_cast<double>(s.total);
    for (std::size_t start = 0; start < s.total; start += cfg_.window) {
      const std::size_t end = std::min(start + cfg_.window, s.total);
      s.windows.push_back(window_over(start, end));
    }
    return s;
  }

 private:
  WindowStats trailing_window() const {
    const std::size_t end = combined_.size();
    const std::size_t start = end > cfg_.window ? end - cfg_.window : 0;
    return window_over(start, end);
  }

  WindowStats window_over(std::size_t start, std::size_t end) const {
    WindowStats w;
    std::size_t alert_count = 0;
    for (std::size_t i = start; i < end; ++i) {
      w.mean_combined += combined_[i];
      if (alerts_[i]) ++alert_count;
    }
    const double n = static_cast<double>(end - start);
    w.mean_combined /= n;
    w.alert_rate = static_cast<double>(alert_count) / n;
    return w;
  }

  const Scorer* scorer_ = nullptr;
  MonitorConfig cfg_;
  std::vector<double> combined_;
  std::vector<bool> alerts_;
};

}  // namespace scert
