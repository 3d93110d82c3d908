#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scert/certainty.hpp"
#include "scert/core.hpp"
#include "scert/error.hpp"
#include "scert/eval.hpp"
#include "scert/gravity.hpp"
#include "scert/io.hpp"
#include "scert/knn.hpp"
#include "scert/monitor.hpp"
#include "scert/pq.hpp"
#include "scert/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string iso_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

nlohmann::json::json_pointer ptr_of(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (char& c : p) {
    if (c == '.') c = '/';
  }
  return nlohmann::json::json_pointer(p);
}

// Config files may only set keys that exist in the defaults tree.
void check_known_keys(const ordered_json& user, const ordered_json& schema,
                      const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) {
      throw scert::ConfigError("unknown config key: " + dotted);
    }
    const ordered_json& def = schema.at(key);
    if (def.is_object() != value.is_object()) {
      throw scert::ConfigError("config key has wrong shape: " + dotted);
    }
    if (def.is_object()) check_known_keys(value, def, dotted);
  }
}

void merge_config(ordered_json& cfg, const ordered_json& user) {
  for (const auto& [key, value] : user.items()) {
    if (value.is_object()) {
      merge_config(cfg.at(key), value);
    } else {
      cfg.at(key) = value;
    }
  }
}

std::uint64_t get_u64(const ordered_json& cfg, const std::string& dotted) {
  const ordered_json& v = cfg.at(ptr_of(dotted));
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw scert::ConfigError(dotted + " must be a non-negative integer");
  }
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
    throw scert::ConfigError(dotted + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const ordered_json& cfg, const std::string& dotted) {
  const ordered_json& v = cfg.at(ptr_of(dotted));
  if (!v.is_number()) throw scert::ConfigError(dotted + " must be a number");
  return v.get<double>();
}

std::string get_string(const ordered_json& cfg, const std::string& dotted) {
  const ordered_json& v = cfg.at(ptr_of(dotted));
  if (!v.is_string()) throw scert::ConfigError(dotted + " must be a string");
  return v.get<std::string>();
}

bool get_bool(const ordered_json& cfg, const std::string& dotted) {
  const ordered_json& v = cfg.at(ptr_of(dotted));
  if (!v.is_boolean()) throw scert::ConfigError(dotted + " must be a boolean");
  return v.get<bool>();
}

std::string require_path(const ordered_json& cfg, const std::string& dotted) {
  const std::string p = get_string(cfg, dotted);
  if (p.empty()) throw scert::ConfigError(dotted + " is required");
  if (!fs::exists(p)) {
    throw scert::ConfigError(dotted + " does not exist: " + p);
  }
  return p;
}

// One subcommand: its defaults tree plus flag overrides for every field.
struct SubCmd {
  CLI::App* app = nullptr;
  ordered_json defaults;
  std::string config_path;
  bool quiet = false;
  std::vector<std::function<void(ordered_json&)>> appliers;

  SubCmd(CLI::App& parent, const std::string& name, const std::string& desc,
         ordered_json def)
      : app(parent.add_subcommand(name, desc)), defaults(std::move(def)) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_flag("--quiet", quiet, "suppress progress output");
    opt_u64("seed");
    opt_str("out");
  }

  void opt_u64(const std::string& dotted) {
    auto val = std::make_shared<std::uint64_t>(0);
    CLI::Option* opt = app->add_option("--" + dotted, *val);
    appliers.push_back([dotted, val, opt](ordered_json& cfg) {
      if (opt->count() > 0) cfg.at(ptr_of(dotted)) = *val;
    });
  }

  void opt_dbl(const std::string& dotted) {
    auto val = std::make_shared<double>(0.0);
    CLI::Option* opt = app->add_option("--" + dotted, *val);
    appliers.push_back([dotted, val, opt](ordered_json& cfg) {
      if (opt->count() > 0) cfg.at(ptr_of(dotted)) = *val;
    });
  }

  void opt_str(const std::string& dotted) {
    auto val = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option("--" + dotted, *val);
    appliers.push_back([dotted, val, opt](ordered_json& cfg) {
      if (opt->count() > 0) cfg.at(ptr_of(dotted)) = *val;
    });
  }

  void opt_bool(const std::string& dotted) {
    auto val = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option("--" + dotted, *val)
                           ->check(CLI::IsMember({"true", "false"}));
    appliers.push_back([dotted, val, opt](ordered_json& cfg) {
      if (opt->count() > 0) cfg.at(ptr_of(dotted)) = (*val == "true");
    });
  }

  ordered_json finalize() const {
    ordered_json cfg = defaults;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw scert::IOError("cannot read config: " + config_path);
      ordered_json user;
      try {
        in >> user;
      } catch (const nlohmann::json::exception& e) {
        throw scert::ConfigError("config parse error: " +
                                 std::string(e.what()));
      }
      if (!user.is_object()) {
        throw scert::ConfigError("config must be a JSON object");
      }
      check_known_keys(user, cfg, "");
      merge_config(cfg, user);
    }
    for (const auto& apply : appliers) apply(cfg);
    return cfg;
  }
};

struct LockFile {
  std::string path;
  int fd = -1;

  explicit LockFile(const std::string& dir) : path(dir + "/.scert.lock") {
    fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw scert::StateError("output directory is locked by another run: " +
                              dir);
    }
  }
  ~LockFile() {
    if (fd >= 0) {
      ::close(fd);
      ::unlink(path.c_str());
    }
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;
};

struct Manifest {
  std::string command;
  std::string started = iso_now();
  ordered_json config;
  ordered_json inputs = ordered_json::object();
  std::vector<std::string> outputs;

  Manifest(std::string cmd, ordered_json cfg)
      : command(std::move(cmd)), config(std::move(cfg)) {}

  void add_input(const std::string& path) {
    inputs[path] = scert::file_digest(path);
  }

  void write(const std::string& out_dir) const {
    ordered_json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["started"] = started;
    j["finished"] = iso_now();
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    const fs::path p = fs::path(out_dir) / (command + ".manifest.json");
    std::ofstream os(p);
    if (!os) throw scert::IOError("cannot write " + p.string());
    os << j.dump(2) << '\n';
  }
};

scert::ScorerConfig scorer_config_from(const ordered_json& cfg) {
  scert::ScorerConfig sc;
  sc.k = get_u64(cfg, "score.k");
  sc.epsilon = get_double(cfg, "score.epsilon");
  sc.sigma_mode = scert::sigma_mode_from_string(get_string(cfg, "score.sigma_mode"));
  sc.combiner = scert::combiner_from_string(get_string(cfg, "score.combiner"));
  sc.alpha = get_double(cfg, "score.alpha");
  sc.beta = get_double(cfg, "score.beta");
  sc.calibration_sample = get_u64(cfg, "score.calibration_sample");
  sc.seed = get_u64(cfg, "seed");
  return sc;
}

ordered_json score_defaults() {
  return {{"k", 10},
          {"epsilon", 1e-6},
          {"sigma_mode", "global-calibration"},
          {"combiner", "harmonic"},
          {"alpha", 0.6},
          {"beta", 0.4},
          {"calibration_sample", 2048}};
}

void add_score_opts(SubCmd& sc) {
  sc.opt_u64("score.k");
  sc.opt_dbl("score.epsilon");
  sc.opt_str("score.sigma_mode");
  sc.opt_str("score.combiner");
  sc.opt_dbl("score.alpha");
  sc.opt_dbl("score.beta");
  sc.opt_u64("score.calibration_sample");
}

int cmd_train_pq(const SubCmd& sc) {
  const ordered_json cfg = sc.finalize();
  const std::string corpus_path = require_path(cfg, "paths.corpus");
  scert::PQConfig pqcfg;
  pqcfg.num_subspaces = static_cast<std::uint32_t>(get_u64(cfg, "pq.num_subspaces"));
  pqcfg.centroids_per_subspace =
      static_cast<std::uint32_t>(get_u64(cfg, "pq.centroids"));
  pqcfg.kmeans_iters = static_cast<std::uint32_t>(get_u64(cfg, "pq.iters"));
  pqcfg.seed = get_u64(cfg, "seed");
  const std::string out = get_string(cfg, "out");

  fs::create_directories(out);
  const LockFile lock(out);
  Manifest man("train-pq", cfg);
  const scert::EmbeddingSet corpus = scert::load_embeddings(corpus_path);
  man.add_input(corpus_path);
  const scert::PQCodebook cb = scert::train_codebook(corpus, pqcfg);
  scert::save_codebook(cb, out + "/codebook.scpq");
  man.outputs.push_back("codebook.scpq");
  man.write(out);
  if (!sc.quiet) {
    std::printf("trained codebook: m=%u k=%u sub_dim=%u rows=%zu\n",
                cb.num_subspaces(), cb.centroids_per_subspace(), cb.sub_dim(),
                corpus.size());
  }
  return 0;
}

ordered_json score_line(const scert::CertaintyScore& s) {
  ordered_json j;
  j["query_id"] = s.query_id;
  j["stability"] = s.stability;
  j["raw_density"] = s.raw_density;
  j["norm_density"] = s.norm_density;
  j["combined"] = s.combined;
  j["combiner"] = scert::to_string(s.combiner);
  j["params"] = {{"alpha", s.params.alpha},
                 {"beta", s.params.beta},
                 {"epsilon", s.params.epsilon},
                 {"k", s.params.k}};
  return j;
}

int cmd_score(const SubCmd& sc) {
  const ordered_json cfg = sc.finalize();
  const std::string corpus_path = require_path(cfg, "paths.corpus");
  const std::string queries_path = require_path(cfg, "paths.queries");
  const std::string codebook_path = require_path(cfg, "paths.codebook");
  const scert::ScorerConfig scfg = scorer_config_from(cfg);
  const std::string out = get_string(cfg, "out");

  fs::create_directories(out);
  const LockFile lock(out);
  Manifest man("score", cfg);
  const scert::EmbeddingSet queries = scert::load_embeddings(queries_path);
  const scert::PQCodebook cb = scert::load_codebook(codebook_path);
  const scert::Index ix = scert::build_index(scert::load_embeddings(corpus_path));
  man.add_input(corpus_path);
  man.add_input(queries_path);
  man.add_input(codebook_path);

  const scert::Scorer scorer(ix, cb, scfg);
  const fs::path out_file = fs::path(out) / "scores.jsonl";
  std::ofstream os(out_file);
  if (!os) throw scert::IOError("cannot write " + out_file.string());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const scert::CertaintyScore s = scorer.assess(queries.row(i), queries.id(i));
    os << score_line(s).dump() << '\n';
  }
  os.close();
  man.outputs.push_back("scores.jsonl");
  man.write(out);
  if (!sc.quiet) std::printf("scored %zu queries\n", queries.size());
  return 0;
}

int cmd_search(const SubCmd& sc) {
  const ordered_json cfg = sc.finalize();
  const std::string corpus_path = require_path(cfg, "paths.corpus");
  const std::string queries_path = require_path(cfg, "paths.queries");
  const std::string mode = get_string(cfg, "search.mode");
  if (mode != "exact" && mode != "adc") {
    throw scert::ConfigError("search.mode must be exact or adc");
  }
  const std::size_t K = get_u64(cfg, "search.k");
  const std::string tag = get_string(cfg, "search.tag");
  const std::string out = get_string(cfg, "out");
  std::string codebook_path;
  if (mode == "adc") codebook_path = require_path(cfg, "paths.codebook");

  fs::create_directories(out);
  const LockFile lock(out);
  Manifest man("search", cfg);
  const scert::EmbeddingSet queries = scert::load_embeddings(queries_path);
  std::optional<scert::PQCodebook> cb;
  if (mode == "adc") {
    cb = scert::load_codebook(codebook_path);
    man.add_input(codebook_path);
  }
  const scert::Index ix =
      scert::build_index(scert::load_embeddings(corpus_path), std::move(cb));
  man.add_input(corpus_path);
  man.add_input(queries_path);

  const fs::path out_file = fs::path(out) / "run.txt";
  std::ofstream os(out_file);
  if (!os) throw scert::IOError("cannot write " + out_file.string());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const scert::NeighborList nb =
        mode == "adc" ? scert::search_adc(ix, queries.row(i), K, queries.id(i))
                      : scert::search_exact(ix, queries.row(i), K, queries.id(i));
    scert::append_run_lines(os, queries.id(i), nb, tag);
  }
  os.close();
  man.outputs.push_back("run.txt");
  man.write(out);
  if (!sc.quiet) {
    std::printf("searched %zu queries (%s, K=%zu)\n", queries.size(),
                mode.c_str(), K);
  }
  return 0;
}

int cmd_simulate(const SubCmd& sc) {
  const ordered_json cfg = sc.finalize();
  scert::GravityConfig gcfg;
  gcfg.num_wells = get_u64(cfg, "simulate.num_wells");
  gcfg.docs_per_well = get_u64(cfg, "simulate.docs_per_well");
  gcfg.queries_per_well = get_u64(cfg, "simulate.queries_per_well");
  gcfg.dim = get_u64(cfg, "simulate.dim");
  gcfg.bands.deep = get_double(cfg, "simulate.deep_variance");
  gcfg.bands.medium = get_double(cfg, "simulate.medium_variance");
  gcfg.bands.shallow = get_double(cfg, "simulate.shallow_variance");
  gcfg.placement_attempts = get_u64(cfg, "simulate.placement_attempts");
  gcfg.spacing_jitter = get_double(cfg, "simulate.spacing_jitter");
  gcfg.seed = get_u64(cfg, "seed");
  const std::string out = get_string(cfg, "out");

  fs::create_directories(out);
  const LockFile lock(out);
  Manifest man("simulate", cfg);
  const scert::SyntheticInstance inst = scert::generate_instance(gcfg);
  for (const std::string& written : scert::save_instance(inst, out)) {
    man.outputs.push_back(fs::path(written).filename().string());
  }
  man.write(out);
  if (!sc.quiet) {
    std::printf("wrote instance: %zu wells, %zu docs, %zu queries, dim=%zu\n",
                inst.wells.size(), inst.corpus.size(), inst.queries.size(),
                gcfg.dim);
  }
  return 0;
}

int cmd_eval(const SubCmd& sc) {
  const ordered_json cfg = sc.finalize();
  const std::string corpus_path = require_path(cfg, "paths.corpus");
  const std::string queries_path = require_path(cfg, "paths.queries");
  const std::string qrels_path = require_path(cfg, "paths.qrels");
  const std::string codebook_path = require_path(cfg, "paths.codebook");
  scert::EvalConfig ecfg;
  ecfg.scorer = scorer_config_from(cfg);
  ecfg.gate.tau = get_double(cfg, "eval.gate_tau");
  ecfg.gate.expand_factor = get_u64(cfg, "eval.gate_factor");
  ecfg.gate.expand_cap = get_u64(cfg, "eval.gate_cap");
  ecfg.retrieval = scert::retrieval_mode_from_string(get_string(cfg, "eval.retrieval"));
  ecfg.bootstrap_resamples = get_u64(cfg, "eval.bootstrap_resamples");
  ecfg.with_ablation = get_bool(cfg, "eval.with_ablation");
  ecfg.seed = get_u64(cfg, "seed");
  const bool with_timings = get_bool(cfg, "eval.with_timings");
  const std::size_t timing_reps = get_u64(cfg, "eval.timing_repetitions");
  const std::string out = get_string(cfg, "out");

  fs::create_directories(out);
  const LockFile lock(out);
  Manifest man("eval", cfg);
  const scert::EmbeddingSet queries = scert::load_embeddings(queries_path);
  const scert::QrelSet qrels = scert::load_qrels(qrels_path);
  const scert::PQCodebook cb = scert::load_codebook(codebook_path);
  const scert::Index ix = scert::build_index(scert::load_embeddings(corpus_path));
  man.add_input(corpus_path);
  man.add_input(queries_path);
  man.add_input(qrels_path);
  man.add_input(codebook_path);

  scert::EvalReport report = scert::evaluate(ix, cb, queries, qrels, ecfg);
  if (with_timings) {
    report.timings = scert::measure_overhead(queries, ix, cb, ecfg.scorer.k,
                                             timing_reps, ecfg.scorer);
  }
  {
    const fs::path p = fs::path(out) / "report.json";
    std::ofstream os(p);
    if (!os) throw scert::IOError("cannot write " + p.string());
    os << scert::report_to_json(report).dump(2) << '\n';
  }
  {
    const fs::path p = fs::path(out) / "report.txt";
    std::ofstream os(p);
    if (!os) throw scert::IOError("cannot write " + p.string());
    os << scert::render_report(report);
  }
  man.outputs.push_back("report.json");
  man.outputs.push_back("report.txt");
  man.write(out);
  if (!sc.quiet) {
    std::printf("eval: mean recall %.4f, spearman %.4f over %zu queries\n",
                report.mean_recall, report.spearman,
                report.per_query_recall.size());
  }
  return 0;
}

int cmd_monitor(const SubCmd& sc) {
  const ordered_json cfg = sc.finalize();
  const std::string corpus_path = require_path(cfg, "paths.corpus");
  const std::string queries_path = require_path(cfg, "paths.queries");
  const std::string codebook_path = require_path(cfg, "paths.codebook");
  const scert::ScorerConfig scfg = scorer_config_from(cfg);
  scert::MonitorConfig mcfg;
  mcfg.threshold = get_double(cfg, "monitor.threshold");
  mcfg.policy = scert::adaptive_policy_from_string(get_string(cfg, "monitor.policy"));
  mcfg.expand_factor = get_u64(cfg, "monitor.expand_factor");
  mcfg.expand_cap = get_u64(cfg, "monitor.expand_cap");
  mcfg.window = get_u64(cfg, "monitor.window");
  const double max_alert_rate = get_double(cfg, "monitor.max_alert_rate");
  const std::string out = get_string(cfg, "out");

  fs::create_directories(out);
  const LockFile lock(out);
  Manifest man("monitor", cfg);
  const scert::EmbeddingSet queries = scert::load_embeddings(queries_path);
  const scert::PQCodebook cb = scert::load_codebook(codebook_path);
  const scert::Index ix = scert::build_index(scert::load_embeddings(corpus_path));
  man.add_input(corpus_path);
  man.add_input(queries_path);
  man.add_input(codebook_path);

  const scert::Scorer scorer(ix, cb, scfg);
  scert::Monitor monitor(scorer, mcfg);
  const fs::path events_file = fs::path(out) / "events.jsonl";
  std::ofstream os(events_file);
  if (!os) throw scert::IOError("cannot write " + events_file.string());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto [event, neighbors] =
        monitor.process_query(queries.row(i), queries.id(i));
    ordered_json line;
    line["query_id"] = event.query_id;
    line["combined"] = event.score.combined;
    line["alert"] = event.alert;
    line["action"] = scert::action_label(event);
    line["window_mean"] = event.window_stats.mean_combined;
    os << line.dump() << '\n';
  }
  os.close();
  man.outputs.push_back("events.jsonl");

  ordered_json summary;
  double alert_rate = 0.0;
  if (queries.empty()) {
    summary = {{"total", 0},          {"alerts", 0},
               {"alert_rate", 0.0},   {"mean_combined", nullptr},
               {"min_combined", nullptr}, {"max_combined", nullptr},
               {"windows", ordered_json::array()}};
  } else {
    const scert::Monitor::Summary s = monitor.drain_stats();
    alert_rate = s.alert_rate;
    summary["total"] = s.total;
    summary["alerts"] = s.alerts;
    summary["alert_rate"] = s.alert_rate;
    summary["mean_combined"] = s.mean_combined;
    summary["min_combined"] = s.min_combined;
    summary["max_combined"] = s.max_combined;
    summary["windows"] = ordered_json::array();
    for (const scert::WindowStats& w : s.windows) {
      summary["windows"].push_back(
          {{"mean_combined", w.mean_combined}, {"alert_rate", w.alert_rate}});
    }
  }
  {
    const fs::path p = fs::path(out) / "summary.json";
    std::ofstream sos(p);
    if (!sos) throw scert::IOError("cannot write " + p.string());
    sos << summary.dump(2) << '\n';
  }
  man.outputs.push_back("summary.json");
  man.write(out);
  if (!sc.quiet) {
    std::printf("monitored %zu queries, alert rate %.4f\n", queries.size(),
                alert_rate);
  }
  if (max_alert_rate >= 0.0 && alert_rate > max_alert_rate) {
    std::fprintf(stderr, "alert rate %.4f exceeds budget %.4f\n", alert_rate,
                 max_alert_rate);
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic certainty toolkit for quantized retrieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SubCmd train(app, "train-pq", "train a product quantization codebook",
               {{"seed", 1},
                {"out", "out"},
                {"paths", {{"corpus", ""}}},
                {"pq", {{"num_subspaces", 0}, {"centroids", 256}, {"iters", 25}}}});
  train.opt_str("paths.corpus");
  train.opt_u64("pq.num_subspaces");
  train.opt_u64("pq.centroids");
  train.opt_u64("pq.iters");

  SubCmd score(app, "score", "batch certainty scoring to JSONL",
               {{"seed", 1},
                {"out", "out"},
                {"paths", {{"corpus", ""}, {"queries", ""}, {"codebook", ""}}},
                {"score", score_defaults()}});
  score.opt_str("paths.corpus");
  score.opt_str("paths.queries");
  score.opt_str("paths.codebook");
  add_score_opts(score);

  SubCmd search(app, "search", "top-K retrieval to a TREC run file",
                {{"seed", 1},
                 {"out", "out"},
                 {"paths", {{"corpus", ""}, {"queries", ""}, {"codebook", ""}}},
                 {"search", {{"k", 10}, {"mode", "exact"}, {"tag", "scert"}}}});
  search.opt_str("paths.corpus");
  search.opt_str("paths.queries");
  search.opt_str("paths.codebook");
  search.opt_u64("search.k");
  search.opt_str("search.mode");
  search.opt_str("search.tag");

  SubCmd simulate(app, "simulate", "generate a synthetic gravity-well instance",
                  {{"seed", 1},
                   {"out", "out"},
                   {"simulate",
                    {{"num_wells", 30},
                     {"docs_per_well", 200},
                     {"queries_per_well", 20},
                     {"dim", 64},
                     {"deep_variance", 0.05},
                     {"medium_variance", 0.25},
                     {"shallow_variance", 1.0},
                     {"placement_attempts", 256},
                     {"spacing_jitter", 0.05}}}});
  simulate.opt_u64("simulate.num_wells");
  simulate.opt_u64("simulate.docs_per_well");
  simulate.opt_u64("simulate.queries_per_well");
  simulate.opt_u64("simulate.dim");
  simulate.opt_dbl("simulate.deep_variance");
  simulate.opt_dbl("simulate.medium_variance");
  simulate.opt_dbl("simulate.shallow_variance");
  simulate.opt_u64("simulate.placement_attempts");
  simulate.opt_dbl("simulate.spacing_jitter");

  SubCmd eval(app, "eval", "recall, correlation, and ablation report",
              {{"seed", 1},
               {"out", "out"},
               {"paths",
                {{"corpus", ""}, {"queries", ""}, {"qrels", ""}, {"codebook", ""}}},
               {"score", score_defaults()},
               {"eval",
                {{"retrieval", "adc"},
                 {"bootstrap_resamples", 1000},
                 {"with_ablation", true},
                 {"with_timings", false},
                 {"timing_repetitions", 5},
                 {"gate_tau", 0.5},
                 {"gate_factor", 2},
                 {"gate_cap", 100}}}});
  eval.opt_str("paths.corpus");
  eval.opt_str("paths.queries");
  eval.opt_str("paths.qrels");
  eval.opt_str("paths.codebook");
  add_score_opts(eval);
  eval.opt_str("eval.retrieval");
  eval.opt_u64("eval.bootstrap_resamples");
  eval.opt_bool("eval.with_ablation");
  eval.opt_bool("eval.with_timings");
  eval.opt_u64("eval.timing_repetitions");
  eval.opt_dbl("eval.gate_tau");
  eval.opt_u64("eval.gate_factor");
  eval.opt_u64("eval.gate_cap");

  SubCmd monitor(app, "monitor", "stream queries through the quality monitor",
                 {{"seed", 1},
                  {"out", "out"},
                  {"paths", {{"corpus", ""}, {"queries", ""}, {"codebook", ""}}},
                  {"score", score_defaults()},
                  {"monitor",
                   {{"threshold", 0.5},
                    {"policy", "none"},
                    {"expand_factor", 2},
                    {"expand_cap", 100},
                    {"window", 10},
                    {"max_alert_rate", -1.0}}}});
  monitor.opt_str("paths.corpus");
  monitor.opt_str("paths.queries");
  monitor.opt_str("paths.codebook");
  add_score_opts(monitor);
  monitor.opt_dbl("monitor.threshold");
  monitor.opt_str("monitor.policy");
  monitor.opt_u64("monitor.expand_factor");
  monitor.opt_u64("monitor.expand_cap");
  monitor.opt_u64("monitor.window");
  monitor.opt_dbl("monitor.max_alert_rate");
  auto budget = std::make_shared<double>(0.0);
  CLI::Option* budget_opt = monitor.app->add_option(
      "--max-alert-rate", *budget, "exit 2 if the alert rate exceeds this");
  monitor.appliers.push_back([budget, budget_opt](ordered_json& cfg) {
    if (budget_opt->count() > 0) cfg["monitor"]["max_alert_rate"] = *budget;
  });

  try {
    app.parse(argc, argv);
    if (train.app->parsed()) return cmd_train_pq(train);
    if (score.app->parsed()) return cmd_score(score);
    if (search.app->parsed()) return cmd_search(search);
    if (simulate.app->parsed()) return cmd_simulate(simulate);
    if (eval.app->parsed()) return cmd_eval(eval);
    if (monitor.app->parsed()) return cmd_monitor(monitor);
    return 3;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  } catch (const scert::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const scert::DimensionError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const scert::RangeError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const scert::IOError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const scert::EmptyInputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const scert::InsufficientDataError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const scert::JoinError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const scert::DegenerateError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
