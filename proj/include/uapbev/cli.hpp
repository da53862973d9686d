#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/config.hpp"
#include "uapbev/occupancy.hpp"
#include "uapbev/sim/episode.hpp"
#include "uapbev/sim/scenario.hpp"
#include "uapbev/uncertainty_mmd.hpp"

namespace uapbev::cli {

namespace fs = std::filesystem;

// ---- logging -------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel parse_log_level(const char* v) {
  if (v == nullptr) return LogLevel::Warn;
  const std::string s(v);
  if (s == "error") return LogLevel::Error;
  if (s == "warn" || s.empty()) return LogLevel::Warn;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  throw ConfigError("UAPBEV_LOG must be one of error, warn, info, debug: '" + s + "'");
}

class Logger {
 public:
  explicit Logger(LogLevel level = LogLevel::Warn, std::ostream* out = &std::cerr) : level_(level), out_(out) {}

  static Logger from_env() { return Logger(parse_log_level(std::getenv("UAPBEV_LOG"))); }

  void log(LogLevel lvl, const std::string& msg) {
    if (lvl > level_ || out_ == nullptr) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu_);
    *out_ << "uapbev: " << names[static_cast<int>(lvl)] << ": " << msg << '\n';
  }
  void info(const std::string& msg) { log(LogLevel::Info, msg); }
  void debug(const std::string& msg) { log(LogLevel::Debug, msg); }
  void warn(const std::string& msg) { log(LogLevel::Warn, msg); }

 private:
  LogLevel level_;
  std::ostream* out_;
  std::mutex mu_;
};

// ---- manifest ------------------------------------------------------------

struct RunManifest {
  std::vector<std::string> scenarios;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::string out;
  int jobs = 1;
  std::vector<std::string> overrides;
  bool write_traces = true;

  void validate() const {
    if (scenarios.empty()) throw ConfigError("no scenario given");
    if (variants.empty()) throw ConfigError("no variant given (expected uap, deterministic or single-pass)");
    if (seeds.empty()) throw ConfigError("no seeds given");
    if (out.empty()) throw ConfigError("no output directory given");
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    for (const auto& v : variants) sim::parse_variant(v);
    for (const auto& s : scenarios) {
      if (!fs::is_regular_file(s)) throw ConfigError("scenario file not found: " + s);
    }
  }
};

// "1-20", "3", "1,4,9" or any comma-separated mix.
inline std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(spec);
  std::string part;
  auto num = [&](const std::string& t) {
    const double v = parse_double(t, "seed '" + t + "'");
    if (v < 0.0 || v != std::floor(v)) throw ConfigError("seeds must be non-negative integers: '" + t + "'");
    return static_cast<std::uint64_t>(v);
  };
  while (std::getline(ss, part, ',')) {
    if (part.empty()) throw ConfigError("empty entry in seed list '" + spec + "'");
    const auto dash = part.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(num(part));
    } else {
      const auto lo = num(part.substr(0, dash));
      const auto hi = num(part.substr(dash + 1));
      if (hi < lo) throw ConfigError("descending seed range '" + part + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

// ---- episode fan-out -----------------------------------------------------

struct EpisodeJob {
  std::size_t scenario = 0;
  sim::Variant variant = sim::Variant::Uap;
  std::uint64_t seed = 0;
  std::string label;  // configuration label within the suite
  PlannerConfig config;
};

struct EpisodeOutcome {
  EpisodeJob job;
  sim::EpisodeResult result;
};

// Runs jobs on up to `jobs` threads. Results come back in job order; `collect`
// is called from one thread at a time, in job order.
template <typename Collect>
void run_jobs(const std::vector<sim::Scenario>& scenarios, const std::vector<EpisodeJob>& jobs, int threads,
              Logger& log, Collect&& collect) {
  std::vector<std::optional<sim::EpisodeResult>> slots(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t emitted = 0;
  std::exception_ptr failure;

  auto flush = [&] {
    while (emitted < jobs.size() && slots[emitted]) {
      collect(EpisodeOutcome{jobs[emitted], std::move(*slots[emitted])});
      slots[emitted].reset();
      ++emitted;
    }
  };
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const auto& j = jobs[i];
      try {
        auto r = sim::run_episode(scenarios[j.scenario], j.config, j.variant, j.seed);
        log.info(scenarios[j.scenario].name + " " + j.label + " seed " + std::to_string(j.seed) + ": " +
                 r.metrics.termination);
        std::lock_guard<std::mutex> lock(mu);
        slots[i] = std::move(r);
        if (!failure) flush();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// ---- reporting -----------------------------------------------------------

struct MetricsRow {
  std::string scenario;
  std::string label;
  std::uint64_t seed = 0;
  sim::EpisodeMetrics m;
};

inline std::string fmt(double v) { return format_double(v); }

inline void write_metrics_header(std::ostream& out) {
  out << "scenario,variant,seed,termination,collisions,collisions_per_km,route_completed,route_completion,"
         "duration,smoothness,min_gap,mean_cost,distance,plans\n";
}

inline void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  const auto& m = r.m;
  out << r.scenario << ',' << r.label << ',' << r.seed << ',' << m.termination << ',' << m.collisions << ','
      << fmt(m.collisions_per_km) << ',' << (m.route_completed ? 1 : 0) << ',' << fmt(m.route_completion) << ','
      << fmt(m.duration) << ',' << fmt(m.smoothness) << ',' << fmt(m.min_gap) << ',' << fmt(m.mean_cost) << ','
      << fmt(m.distance) << ',' << m.plans << '\n';
}

// Aggregate over the episodes of one (scenario, configuration) cell.
struct SummaryRow {
  std::string scenario;
  std::string label;
  int episodes = 0;
  int collision_episodes = 0;
  double collisions_per_km = 0.0;  // all collisions over all distance
  double route_completion = 0.0;   // mean percent
  int completed = 0;
  double duration = std::numeric_limits<double>::quiet_NaN();  // mean over completed
  double smoothness = 0.0;                                      // mean
  double min_gap = std::numeric_limits<double>::quiet_NaN();    // minimum
  double mean_cost = std::numeric_limits<double>::quiet_NaN();  // mean of episode means
};

inline std::vector<SummaryRow> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<SummaryRow> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<double> km, dur_sum, cost_sum;
  std::vector<int> cost_n, collisions;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.scenario, r.label);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({});
      out.back().scenario = r.scenario;
      out.back().label = r.label;
      km.push_back(0.0);
      dur_sum.push_back(0.0);
      cost_sum.push_back(0.0);
      cost_n.push_back(0);
      collisions.push_back(0);
    }
    const std::size_t i = it->second;
    auto& s = out[i];
    const auto& m = r.m;
    ++s.episodes;
    s.collision_episodes += m.collisions > 0 ? 1 : 0;
    collisions[i] += m.collisions;
    km[i] += std::max(m.distance, 1.0) / 1000.0;
    s.route_completion += m.route_completion;
    s.smoothness += m.smoothness;
    if (m.route_completed) {
      ++s.completed;
      dur_sum[i] += m.duration;
    }
    if (!std::isnan(m.min_gap) && (std::isnan(s.min_gap) || m.min_gap < s.min_gap)) s.min_gap = m.min_gap;
    if (!std::isnan(m.mean_cost)) {
      cost_sum[i] += m.mean_cost;
      ++cost_n[i];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    s.collisions_per_km = collisions[i] / km[i];
    s.route_completion /= s.episodes;
    s.smoothness /= s.episodes;
    if (s.completed > 0) s.duration = dur_sum[i] / s.completed;
    if (cost_n[i] > 0) s.mean_cost = cost_sum[i] / cost_n[i];
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "scenario,variant,episodes,collision_episodes,collisions_per_km,route_completion,completed,duration,"
         "smoothness,min_gap,mean_cost\n";
  for (const auto& s : rows) {
    out << s.scenario << ',' << s.label << ',' << s.episodes << ',' << s.collision_episodes << ','
        << fmt(s.collisions_per_km) << ',' << fmt(s.route_completion) << ',' << s.completed << ','
        << fmt(s.duration) << ',' << fmt(s.smoothness) << ',' << fmt(s.min_gap) << ',' << fmt(s.mean_cost)
        << '\n';
  }
}

inline std::string fixed(double v, int prec) {
  if (std::isnan(v)) return "-";
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

inline void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows) {
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::size_t w0 = 8, w1 = 7;
  for (const auto& s : rows) {
    w0 = std::max(w0, s.scenario.size());
    w1 = std::max(w1, s.label.size());
  }
  out << pad("scenario", w0 + 2) << pad("variant", w1 + 2)
      << "episodes  coll.eps  coll/km    RC(%)  duration(s)  jerk(m/s^3)  min_gap(m)\n";
  for (const auto& s : rows) {
    out << pad(s.scenario, w0 + 2) << pad(s.label, w1 + 2) << pad(std::to_string(s.episodes), 10)
        << pad(std::to_string(s.collision_episodes), 10) << pad(fixed(s.collisions_per_km, 2), 11)
        << pad(fixed(s.route_completion, 1), 7) << pad(fixed(s.duration, 2), 13) << pad(fixed(s.smoothness, 3), 13)
        << fixed(s.min_gap, 2) << '\n';
  }
}

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("write failed: " + path.string());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

// ---- commands ------------------------------------------------------------

struct SuiteCell {
  std::string label;
  sim::Variant variant;
  std::vector<std::string> extra;  // overrides on top of the manifest's
};

struct SuiteResult {
  std::vector<MetricsRow> rows;
  std::vector<SummaryRow> summary;
};

// Loads scenarios, resolves each cell's config, runs everything and writes
// metrics.csv, summary.{txt,csv}, traces/ and effective_config/ under `out`.
inline SuiteResult run_suite(const RunManifest& man, const std::vector<SuiteCell>& cells, Logger& log) {
  man.validate();
  std::vector<sim::Scenario> scenarios;
  for (const auto& path : man.scenarios) scenarios.push_back(sim::load_scenario(path));
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (scenarios[i].name == scenarios[j].name) {
        throw ConfigError("duplicate scenario name '" + scenarios[i].name + "'");
      }
    }
  }

  const fs::path out(man.out);
  ensure_dir(out);
  ensure_dir(out / "effective_config");
  if (man.write_traces) ensure_dir(out / "traces");

  std::vector<EpisodeJob> jobs;
  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    for (const auto& cell : cells) {
      std::vector<std::string> ov = cell.extra;
      ov.insert(ov.end(), man.overrides.begin(), man.overrides.end());
      const PlannerConfig cfg = sim::effective_config(PlannerConfig{}, scenarios[si], ov);
      std::ostringstream echo;
      write_config(echo, cfg);
      write_file(out / "effective_config" / (scenarios[si].name + "__" + cell.label + ".txt"), echo.str());
      for (auto seed : man.seeds) jobs.push_back({si, cell.variant, seed, cell.label, cfg});
    }
  }
  log.info("running " + std::to_string(jobs.size()) + " episodes on " + std::to_string(man.jobs) + " threads");

  SuiteResult res;
  std::ostringstream metrics;
  write_metrics_header(metrics);
  run_jobs(scenarios, jobs, man.jobs, log, [&](EpisodeOutcome&& o) {
    const auto& sc = scenarios[o.job.scenario];
    MetricsRow row{sc.name, o.job.label, o.job.seed, o.result.metrics};
    write_metrics_row(metrics, row);
    if (man.write_traces) {
      std::ostringstream t;
      sim::write_trace(t, o.result.trace);
      write_file(out / "traces" / (sc.name + "__" + o.job.label + "__" + std::to_string(o.job.seed) + ".jsonl"),
                 t.str());
    }
    if (!o.result.trace.failure.empty()) log.warn(sc.name + " seed " + std::to_string(o.job.seed) + ": " +
                                                  o.result.trace.failure);
    res.rows.push_back(std::move(row));
  });
  write_file(out / "metrics.csv", metrics.str());
  res.summary = summarize(res.rows);
  std::ostringstream csv, txt;
  write_summary_csv(csv, res.summary);
  write_summary_text(txt, res.summary);
  write_file(out / "summary.csv", csv.str());
  write_file(out / "summary.txt", txt.str());
  return res;
}

inline SuiteResult cmd_run(const RunManifest& man, Logger& log) {
  man.validate();
  std::vector<SuiteCell> cells;
  for (const auto& v : man.variants) cells.push_back({v, sim::parse_variant(v), {}});
  return run_suite(man, cells, log);
}

// {uncertainty on/off} x {barrier on/off}; uncertainty off is the
// deterministic-distance variant.
inline SuiteResult cmd_ablate_barrier(RunManifest man, Logger& log) {
  if (man.variants.empty()) man.variants = {"uap"};
  man.validate();
  for (const auto& path : man.scenarios) {
    if (sim::load_scenario(path).mode != sim::DrivingMode::Inlane) {
      throw ConfigError("ablate-barrier needs inlane scenarios: " + path);
    }
  }
  const std::vector<SuiteCell> cells = {
      {"uap+barrier", sim::Variant::Uap, {"planner.longitudinal_barrier=true"}},
      {"uap-barrier", sim::Variant::Uap, {"planner.longitudinal_barrier=false"}},
      {"det+barrier", sim::Variant::Deterministic, {"planner.longitudinal_barrier=true"}},
      {"det-barrier", sim::Variant::Deterministic, {"planner.longitudinal_barrier=false"}},
  };
  SuiteResult res = run_suite(man, cells, log);

  // Table over all scenarios, one row per configuration.
  std::vector<MetricsRow> pooled = res.rows;
  for (auto& r : pooled) r.scenario = "all";
  const auto table = summarize(pooled);
  std::ostringstream csv, txt;
  csv << "uncertainty,barrier,episodes,collision_episodes,collisions_per_km,route_completion,completed,duration,"
         "min_gap\n";
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  txt << "uncertainty  barrier  episodes  coll/km    RC(%)  duration(s)  min_gap(m)\n";
  for (const auto& s : table) {
    const std::string unc = s.label.rfind("uap", 0) == 0 ? "on" : "off";
    const std::string bar = s.label.find('+') != std::string::npos ? "on" : "off";
    csv << unc << ',' << bar << ',' << s.episodes << ',' << s.collision_episodes << ','
        << fmt(s.collisions_per_km) << ',' << fmt(s.route_completion) << ',' << s.completed << ','
        << fmt(s.duration) << ',' << fmt(s.min_gap) << '\n';
    txt << pad(unc, 13) << pad(bar, 9) << pad(std::to_string(s.episodes), 10) << pad(fixed(s.collisions_per_km, 2), 11)
        << pad(fixed(s.route_completion, 1), 7) << pad(fixed(s.duration, 2), 13) << fixed(s.min_gap, 2) << '\n';
  }
  write_file(fs::path(man.out) / "ablation.csv", csv.str());
  write_file(fs::path(man.out) / "ablation.txt", txt.str());
  return res;
}

struct CalibrationResult {
  ErrorModel model;
  std::vector<std::size_t> counts;
};

// Fits the per-frame error model from the (d_pred, d_gt) pairs of the given
// traces; writes error_model.txt, residuals.txt (empirical) and fig3.csv.
inline CalibrationResult cmd_calibrate_noise(const std::vector<std::string>& traces, const std::string& out_dir,
                                             ErrorModelMode mode, Logger& log) {
  if (traces.empty()) throw ConfigError("no trace files given");
  std::vector<DistanceObservation> obs;
  for (const auto& path : traces) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace file: " + path);
    const auto trace = sim::read_trace(in, path);
    const auto o = sim::trace_observations(trace);
    obs.insert(obs.end(), o.begin(), o.end());
  }
  log.info("calibrating from " + std::to_string(obs.size()) + " observations");
  CalibrationResult res;
  try {
    res.model = fit_error_model(obs, mode);
  } catch (const Error& e) {
    throw ConfigError(std::string("insufficient observations: ") + e.what());
  }
  res.counts.assign(res.model.frame_count(), 0);
  for (const auto& o : obs) ++res.counts[o.k];

  const fs::path out(out_dir);
  ensure_dir(out);
  std::ostringstream model, fig;
  write_error_model(model, res.model);
  write_file(out / "error_model.txt", model.str());
  if (mode == ErrorModelMode::Empirical) {
    std::ostringstream bank;
    write_residual_bank(bank, res.model);
    write_file(out / "residuals.txt", bank.str());
  }
  fig << "k,mean,std,count\n";
  for (int k = 0; k < res.model.frame_count(); ++k) {
    fig << k << ',' << fmt(res.model.mu[k]) << ',' << fmt(res.model.sigma[k]) << ',' << res.counts[k] << '\n';
  }
  write_file(out / "fig3.csv", fig.str());
  return res;
}

// Resolves the effective config (defaults < scenario < overrides) and prints it.
inline PlannerConfig cmd_validate_config(const std::vector<std::string>& scenario_paths,
                                         const std::vector<std::string>& overrides, std::ostream& out) {
  PlannerConfig cfg;
  if (scenario_paths.empty()) {
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    cfg.load_error_model();
    write_config(out, cfg);
    return cfg;
  }
  for (const auto& path : scenario_paths) {
    const auto sc = sim::load_scenario(path);
    cfg = sim::effective_config(PlannerConfig{}, sc, overrides);
    cfg.load_error_model();
    if (scenario_paths.size() > 1) out << "# " << sc.name << '\n';
    write_config(out, cfg);
  }
  return cfg;
}

}  // namespace uapbev::cli
