#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegline/errors.hpp"
#include "eegline/formats.hpp"
#include "eegline/nn.hpp"
#include "eegline/rng.hpp"

namespace eegline::hyper {

using json = nlohmann::json;

struct IntRange {
  int lo = 1, hi = 1;
};
struct RealRange {
  double lo = 0.0, hi = 1.0;
};

struct SearchSpace {
  IntRange num_layers{1, 4};
  // canonical order: conv, pool, fc, dropout
  std::vector<std::string> layer_types{"conv", "pool", "fc", "dropout"};
  IntRange filters{1, 256};
  IntRange filter_size{1, 11};  // square kernels
  IntRange pool_size{2, 5};
  IntRange pool_stride{1, 3};
  IntRange fc_units{2, 2304};
  RealRange keep_prob{0.5, 0.95};
  RealRange learning_rate{1e-4, 1e-2};  // log-uniform
};

inline void validate_space(const SearchSpace& s) {
  auto ok_int = [](const IntRange& r) { return r.lo >= 1 && r.lo <= r.hi; };
  if (!ok_int(s.num_layers) || !ok_int(s.filters) || !ok_int(s.filter_size) ||
      !ok_int(s.pool_size) || !ok_int(s.pool_stride) || !ok_int(s.fc_units))
    fail(errc::empty_space, "integer bounds must satisfy 1 <= lo <= hi");
  if (s.layer_types.empty())
    fail(errc::empty_space, "no layer types to choose from");
  for (const std::string& t : s.layer_types)
    if (t != "conv" && t != "pool" && t != "fc" && t != "dropout")
      fail(errc::empty_space, "unknown layer type '" + t + "'");
  if (!(s.keep_prob.lo > 0.0) || s.keep_prob.hi > 1.0 ||
      s.keep_prob.lo > s.keep_prob.hi)
    fail(errc::empty_space, "keep_prob bounds must be within (0, 1]");
  if (!(s.learning_rate.lo > 0.0) || s.learning_rate.lo > s.learning_rate.hi)
    fail(errc::empty_space, "learning_rate bounds must be positive");
}

inline json space_to_json(const SearchSpace& s) {
  return {{"num_layers", {s.num_layers.lo, s.num_layers.hi}},
          {"layer_types", s.layer_types},
          {"filters", {s.filters.lo, s.filters.hi}},
          {"filter_size", {s.filter_size.lo, s.filter_size.hi}},
          {"pool_size", {s.pool_size.lo, s.pool_size.hi}},
          {"pool_stride", {s.pool_stride.lo, s.pool_stride.hi}},
          {"fc_units", {s.fc_units.lo, s.fc_units.hi}},
          {"keep_prob", {s.keep_prob.lo, s.keep_prob.hi}},
          {"learning_rate", {s.learning_rate.lo, s.learning_rate.hi}}};
}

inline SearchSpace space_from_json(const json& j) {
  SearchSpace s;
  auto iget = [&](const char* key, IntRange dflt) {
    if (!j.contains(key)) return dflt;
    return IntRange{j.at(key).at(0).get<int>(), j.at(key).at(1).get<int>()};
  };
  auto rget = [&](const char* key, RealRange dflt) {
    if (!j.contains(key)) return dflt;
    return RealRange{j.at(key).at(0).get<double>(),
                     j.at(key).at(1).get<double>()};
  };
  s.num_layers = iget("num_layers", s.num_layers);
  if (j.contains("layer_types"))
    s.layer_types = j.at("layer_types").get<std::vector<std::string>>();
  s.filters = iget("filters", s.filters);
  s.filter_size = iget("filter_size", s.filter_size);
  s.pool_size = iget("pool_size", s.pool_size);
  s.pool_stride = iget("pool_stride", s.pool_stride);
  s.fc_units = iget("fc_units", s.fc_units);
  s.keep_prob = rget("keep_prob", s.keep_prob);
  s.learning_rate = rget("learning_rate", s.learning_rate);
  validate_space(s);
  return s;
}

inline SearchSpace load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path);
  return space_from_json(json::parse(in));
}

// Independent uniform draws within the declared bounds; no feasibility
// filtering here. Draw order is part of the reproducibility contract:
// layer count, then per layer its type and attributes, then learning rate.
inline nn::ModelConfig sample_config(const SearchSpace& space,
                                     std::mt19937_64& rng) {
  validate_space(space);
  // Types are chosen from the canonical order regardless of JSON order.
  std::vector<std::string> types;
  for (const char* t : {"conv", "pool", "fc", "dropout"})
    for (const std::string& have : space.layer_types)
      if (have == t) {
        types.push_back(t);
        break;
      }

  nn::ModelConfig config;
  const int layers = static_cast<int>(
      uniform_int(rng, space.num_layers.lo, space.num_layers.hi));
  for (int i = 0; i < layers; ++i) {
    const std::string& t = types[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(types.size()) - 1))];
    if (t == "conv") {
      const int filters =
          static_cast<int>(uniform_int(rng, space.filters.lo, space.filters.hi));
      const int k = static_cast<int>(
          uniform_int(rng, space.filter_size.lo, space.filter_size.hi));
      config.hidden_layers.push_back(nn::Conv{filters, k, k});
    } else if (t == "pool") {
      const int k = static_cast<int>(
          uniform_int(rng, space.pool_size.lo, space.pool_size.hi));
      const int stride = static_cast<int>(
          uniform_int(rng, space.pool_stride.lo, space.pool_stride.hi));
      config.hidden_layers.push_back(nn::Pool{k, k, stride});
    } else if (t == "fc") {
      const int units = static_cast<int>(
          uniform_int(rng, space.fc_units.lo, space.fc_units.hi));
      config.hidden_layers.push_back(nn::FC{units});
    } else {
      config.hidden_layers.push_back(nn::Dropout{
          uniform_range(rng, space.keep_prob.lo, space.keep_prob.hi)});
    }
  }
  config.learning_rate =
      space.learning_rate.lo == space.learning_rate.hi
          ? space.learning_rate.lo
          : std::exp(uniform_range(rng, std::log(space.learning_rate.lo),
                                   std::log(space.learning_rate.hi)));
  return config;
}

struct TrialRecord {
  std::uint64_t iteration = 0;  // 1-based
  nn::ModelConfig config;
  bool feasible = false;
  double accuracy = 0.0;  // 0 when infeasible
  double wall_time = 0.0;
  std::uint64_t seed = 0;
};

inline json record_to_json(const TrialRecord& r) {
  return {{"accuracy", r.accuracy},
          {"config", io::config_to_json(r.config)},
          {"iteration", r.iteration},
          {"seed", r.seed},
          {"status", r.feasible ? "feasible" : "infeasible"},
          {"wall_time", r.wall_time}};
}

inline TrialRecord record_from_json(const json& j) {
  TrialRecord r;
  r.accuracy = j.at("accuracy").get<double>();
  r.config = io::config_from_json(j.at("config"));
  r.iteration = j.at("iteration").get<std::uint64_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.feasible = j.at("status").get<std::string>() == "feasible";
  r.wall_time = j.at("wall_time").get<double>();
  return r;
}

struct Ledger {
  std::string search_id;
  SearchSpace space;
  std::vector<TrialRecord> records;

  std::vector<double> best_so_far() const {
    std::vector<double> out;
    double best = 0.0;
    for (const TrialRecord& r : records) {
      best = std::max(best, r.accuracy);
      out.push_back(best);
    }
    return out;
  }
};

// Reads an append-only ledger file (one record object per line). Blank lines
// are tolerated at the end of an interrupted write.
inline std::vector<TrialRecord> read_ledger_records(const std::string& path) {
  std::ifstream in(path);
  std::vector<TrialRecord> out;
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(json::parse(line)));
  }
  return out;
}

struct RunOptions {
  int epochs = 30;
  int batch_size = 64;
  // test/ops hooks
  std::uint64_t max_new_records = UINT64_MAX;  // simulate interruption
  std::function<double()> clock;               // seconds; nullptr = steady_clock
  std::function<void(std::uint64_t completed, std::uint64_t budget)> on_record;
};

// Bounded random search. Each iteration draws a config from seed
// base_seed ^ iteration, scores infeasible samples 0 without training, and
// appends one ledger line per iteration, flushed immediately so an
// interrupted run resumes by skipping completed iterations.
inline Ledger run_search(const SearchSpace& space, const nn::Dataset& train_set,
                         const nn::Dataset& val_set, std::uint64_t budget,
                         std::uint64_t base_seed, const std::string& ledger_path,
                         const RunOptions& options = {}) {
  validate_space(space);
  if (budget < 1) fail(errc::empty_space, "budget must be >= 1");

  Ledger ledger;
  char sid[32];
  std::snprintf(sid, sizeof sid, "search-%016llx",
                static_cast<unsigned long long>(base_seed));
  ledger.search_id = sid;
  ledger.space = space;
  ledger.records = read_ledger_records(ledger_path);
  for (std::size_t i = 0; i < ledger.records.size(); ++i) {
    if (ledger.records[i].iteration != i + 1)
      fail(errc::io_error, "ledger " + ledger_path + " is not contiguous");
  }

  std::function<double()> clock = options.clock;
  if (!clock) {
    clock = [] {
      return std::chrono::duration<double>(
                 std::chrono::steady_clock::now().time_since_epoch())
          .count();
    };
  }

  std::ofstream out(ledger_path, std::ios::app);
  if (!out) fail(errc::io_error, "cannot append to " + ledger_path);

  std::uint64_t fresh = 0;
  for (std::uint64_t iter = ledger.records.size() + 1;
       iter <= budget && fresh < options.max_new_records; ++iter, ++fresh) {
    const std::uint64_t seed = base_seed ^ iter;
    std::mt19937_64 rng(seed);

    TrialRecord rec;
    rec.iteration = iter;
    rec.seed = seed;
    rec.config = sample_config(space, rng);

    const double t0 = clock();
    const nn::ShapeCheck check =
        nn::infer_shapes(rec.config, train_set.sample_shape);
    if (check.feasible) {
      auto [model, report] =
          nn::train(rec.config, train_set, val_set, options.epochs,
                    options.batch_size, seed);
      rec.feasible = true;
      rec.accuracy = report.best_val_acc;
    } else {
      rec.feasible = false;
      rec.accuracy = 0.0;
    }
    rec.wall_time = clock() - t0;

    out << record_to_json(rec).dump() << "\n";
    out.flush();
    ledger.records.push_back(std::move(rec));
    if (options.on_record) options.on_record(iter, budget);
  }
  return ledger;
}

struct LeaderboardRow {
  int rank = 0;
  int hidden_layers = 0;
  std::string rendering;
  double accuracy = 0.0;
  std::uint64_t iteration = 0;
};

// Top-k by accuracy; ties go to the earlier iteration.
inline std::vector<LeaderboardRow> leaderboard(const Ledger& ledger,
                                               std::size_t k) {
  if (ledger.records.empty()) fail(errc::empty_ledger, "no records");
  std::vector<const TrialRecord*> ptrs;
  ptrs.reserve(ledger.records.size());
  for (const TrialRecord& r : ledger.records) ptrs.push_back(&r);
  std::stable_sort(ptrs.begin(), ptrs.end(),
                   [](const TrialRecord* a, const TrialRecord* b) {
                     if (a->accuracy != b->accuracy)
                       return a->accuracy > b->accuracy;
                     return a->iteration < b->iteration;
                   });
  std::vector<LeaderboardRow> rows;
  const std::size_t n = std::min(k, ptrs.size());
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back({static_cast<int>(i + 1),
                    static_cast<int>(ptrs[i]->config.hidden_layers.size()),
                    nn::render_config(ptrs[i]->config), ptrs[i]->accuracy,
                    ptrs[i]->iteration});
  }
  return rows;
}

struct TracePoint {
  std::uint64_t iteration = 0;
  double accuracy = 0.0;
  double best = 0.0;
};

inline std::vector<TracePoint> accuracy_trace(const Ledger& ledger) {
  std::vector<TracePoint> out;
  double best = 0.0;
  for (const TrialRecord& r : ledger.records) {
    best = std::max(best, r.accuracy);
    out.push_back({r.iteration, r.accuracy, best});
  }
  return out;
}

inline std::string trace_to_csv(const std::vector<TracePoint>& trace) {
  std::string out = "iteration,accuracy,best\n";
  char buf[80];
  for (const TracePoint& p : trace) {
    std::snprintf(buf, sizeof buf, "%llu,%.10g,%.10g\n",
                  static_cast<unsigned long long>(p.iteration), p.accuracy,
                  p.best);
    out += buf;
  }
  return out;
}

// Accuracy as a percentage with up to two decimals and trailing zeros
// trimmed, keeping at least one decimal: 0.634 -> "63.4", 0.62 -> "62.0".
inline std::string format_accuracy_percent(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", accuracy * 100.0);
  std::string s(buf);
  if (s.size() >= 2 && s.back() == '0' && s[s.size() - 2] != '.')
    s.pop_back();
  return s;
}

}  // namespace eegline::hyper
