#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eegline/edf.hpp"
#include "eegline/errors.hpp"
#include "eegline/rng.hpp"

namespace eegline::edf {

inline constexpr double kFs = 160.0;
inline constexpr int kChannels = 64;
inline constexpr double kTrialSeconds = 4.1;
inline constexpr int kTrialSamples = 656;  // 4.1 s * 160 Hz

enum class TaskKind { Baseline, RealMovement, ImaginedMovement };

// Runs 1-2 are eyes-open/closed baselines; of the 12 task runs, odd runs are
// performed movements and even runs imagined ones.
inline TaskKind classify_run(int run) {
  if (run < 1 || run > 14)
    fail(errc::out_of_range_run, "run " + std::to_string(run));
  if (run <= 2) return TaskKind::Baseline;
  return run % 2 == 1 ? TaskKind::RealMovement : TaskKind::ImaginedMovement;
}

enum class TrialClass : std::uint8_t { Real = 0, Imagined = 1 };

inline const char* trial_class_name(TrialClass c) {
  return c == TrialClass::Real ? "real" : "imagined";
}

struct Trial {
  std::string subject;
  int run = 0;
  std::string event_label;  // "T1" or "T2"
  TrialClass klass = TrialClass::Real;
  double onset = 0.0;             // seconds, provenance
  std::vector<double> data;       // kChannels * kTrialSamples, row-major

  double& at(int channel, int sample) {
    return data[static_cast<std::size_t>(channel) * kTrialSamples + sample];
  }
  double at(int channel, int sample) const {
    return data[static_cast<std::size_t>(channel) * kTrialSamples + sample];
  }
};

// Cuts one fixed-length trial per T1/T2 event. Rest events (T0) are skipped,
// and windows running past the end of the recording are dropped.
inline std::vector<Trial> segment_trials(const RawRecording& rec) {
  std::vector<Trial> out;
  TaskKind kind = classify_run(rec.run);
  if (kind == TaskKind::Baseline) return out;
  const std::size_t channels = rec.channels();
  const std::size_t total =
      channels == 0 ? 0 : rec.samples.front().size();
  for (const Annotation& a : rec.annotations) {
    if (a.label != "T1" && a.label != "T2") continue;
    const auto start = static_cast<std::size_t>(std::llround(a.onset * rec.fs));
    if (start + kTrialSamples > total) continue;
    Trial t;
    t.subject = rec.subject;
    t.run = rec.run;
    t.event_label = a.label;
    t.klass = kind == TaskKind::RealMovement ? TrialClass::Real
                                             : TrialClass::Imagined;
    t.onset = a.onset;
    t.data.resize(channels * kTrialSamples);
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(rec.samples[c].begin() + start, kTrialSamples,
                  t.data.begin() + c * kTrialSamples);
    out.push_back(std::move(t));
  }
  return out;
}

struct SubjectVerdict {
  bool accepted = true;
  std::string reason;  // machine-readable: "sampling-rate", "channel-count",
                       // "annotation-labels", "no-recordings"
};

// Rule-based acceptance across all of a subject's runs; the first violated
// rule wins.
inline SubjectVerdict validate_subject(const std::vector<RawRecording>& runs) {
  if (runs.empty()) return {false, "no-recordings"};
  for (const RawRecording& r : runs) {
    if (std::abs(r.fs - kFs) > 1e-9) return {false, "sampling-rate"};
    if (static_cast<int>(r.channels()) != kChannels)
      return {false, "channel-count"};
    for (const Annotation& a : r.annotations)
      if (a.label != "T0" && a.label != "T1" && a.label != "T2")
        return {false, "annotation-labels"};
  }
  return {true, ""};
}

// Inventory entry for one trial; enough to rebuild the trial from its source
// file and to audit the split.
struct TrialMeta {
  std::string subject;
  int run = 0;
  std::string event_label;
  TrialClass klass = TrialClass::Real;
  double onset = 0.0;
};

struct DatasetManifest {
  std::string data_dir;  // root the trials were cut from
  std::vector<std::string> included_subjects;
  std::vector<std::pair<std::string, std::string>> excluded_subjects;
  std::int64_t trial_count = 0;
  std::uint64_t split_seed = 0;
  double split_ratio = 0.7;
  std::vector<TrialMeta> trials;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// Deterministic shuffled split: the first floor(ratio*N) shuffled indices
// train, the rest test.
inline DatasetManifest make_manifest(const std::vector<TrialMeta>& trials,
                                     double ratio, std::uint64_t seed) {
  if (trials.empty()) fail(errc::empty_dataset, "no trials to split");
  DatasetManifest m;
  m.trials = trials;
  m.trial_count = static_cast<std::int64_t>(trials.size());
  m.split_seed = seed;
  m.split_ratio = ratio;
  std::vector<std::size_t> order(trials.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  shuffle_indices(order, rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(order.size())));
  m.train_indices.assign(order.begin(), order.begin() + n_train);
  m.test_indices.assign(order.begin() + n_train, order.end());
  return m;
}

inline std::vector<TrialMeta> trial_metas(const std::vector<Trial>& trials) {
  std::vector<TrialMeta> out;
  out.reserve(trials.size());
  for (const Trial& t : trials)
    out.push_back({t.subject, t.run, t.event_label, t.klass, t.onset});
  return out;
}

}  // namespace eegline::edf
