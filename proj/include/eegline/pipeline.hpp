#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegline/dataset.hpp"
#include "eegline/dsp.hpp"
#include "eegline/edf.hpp"
#include "eegline/errors.hpp"
#include "eegline/formats.hpp"
#include "eegline/nn.hpp"

namespace eegline::pipeline {

using json = nlohmann::json;

struct RunFile {
  std::string subject;
  int run = 0;
  std::string path;
};

// Finds S###R##.edf files under dir (flat or one directory per subject),
// sorted by subject then run.
inline std::vector<RunFile> scan_data_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  static const std::regex pattern(R"((S\d+)R(\d+)\.edf)",
                                  std::regex::icase);
  std::vector<RunFile> out;
  if (!fs::exists(dir)) fail(errc::io_error, "no such directory: " + dir);
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) continue;
    out.push_back({m[1].str(), std::stoi(m[2].str()), entry.path().string()});
  }
  std::sort(out.begin(), out.end(), [](const RunFile& a, const RunFile& b) {
    return a.subject != b.subject ? a.subject < b.subject : a.run < b.run;
  });
  return out;
}

inline edf::RawRecording parse_run_file(const RunFile& rf) {
  edf::RawRecording rec = edf::parse_edf(io::read_file(rf.path));
  rec.subject = rf.subject;
  rec.run = rf.run;
  return rec;
}

// Full ingest: parse every run, apply the per-subject acceptance rules,
// segment task runs into trials (in subject/run/onset order) and freeze the
// split. Rejected subjects land in the manifest with their reason.
inline edf::DatasetManifest ingest(const std::string& data_dir, double ratio,
                                   std::uint64_t seed) {
  const std::vector<RunFile> files = scan_data_dir(data_dir);
  if (files.empty()) fail(errc::empty_dataset, "no run files in " + data_dir);

  std::map<std::string, std::vector<RunFile>> by_subject;
  for (const RunFile& f : files) by_subject[f.subject].push_back(f);

  std::vector<std::string> included;
  std::vector<std::pair<std::string, std::string>> excluded;
  std::vector<edf::TrialMeta> metas;
  for (const auto& [subject, runs] : by_subject) {
    std::vector<edf::RawRecording> recs;
    recs.reserve(runs.size());
    for (const RunFile& rf : runs) recs.push_back(parse_run_file(rf));
    const edf::SubjectVerdict verdict = edf::validate_subject(recs);
    if (!verdict.accepted) {
      excluded.emplace_back(subject, verdict.reason);
      continue;
    }
    included.push_back(subject);
    for (const edf::RawRecording& rec : recs) {
      if (edf::classify_run(rec.run) == edf::TaskKind::Baseline) continue;
      for (const edf::Trial& t : edf::segment_trials(rec))
        metas.push_back({t.subject, t.run, t.event_label, t.klass, t.onset});
    }
  }
  if (metas.empty()) fail(errc::empty_dataset, "no trials after validation");

  edf::DatasetManifest manifest = edf::make_manifest(metas, ratio, seed);
  manifest.data_dir = data_dir;
  manifest.included_subjects = std::move(included);
  manifest.excluded_subjects = std::move(excluded);
  return manifest;
}

// Rebuilds every manifest trial from its source file and runs the feature
// pipeline. Cache record order equals manifest trial order; any drift
// between the manifest and the data on disk is an error.
inline io::FeatureCache build_cache(const edf::DatasetManifest& manifest,
                                    const std::string& data_dir) {
  const std::vector<RunFile> files = scan_data_dir(data_dir);
  std::map<std::pair<std::string, int>, const RunFile*> index;
  for (const RunFile& f : files) index[{f.subject, f.run}] = &f;

  io::FeatureCache cache;
  cache.records.reserve(manifest.trials.size());
  cache.values.reserve(manifest.trials.size() * io::kFeatureNumel);

  std::string loaded_key;
  std::vector<edf::Trial> trials;
  for (std::size_t i = 0; i < manifest.trials.size(); ++i) {
    const edf::TrialMeta& meta = manifest.trials[i];
    const std::string key = meta.subject + "/" + std::to_string(meta.run);
    if (key != loaded_key) {
      auto it = index.find({meta.subject, meta.run});
      if (it == index.end())
        fail(errc::io_error, "manifest trial " + std::to_string(i) +
                                 " has no source file for " + key);
      trials = edf::segment_trials(parse_run_file(*it->second));
      loaded_key = key;
    }
    const edf::Trial* match = nullptr;
    for (const edf::Trial& t : trials)
      if (std::abs(t.onset - meta.onset) < 1e-9 &&
          t.event_label == meta.event_label) {
        match = &t;
        break;
      }
    if (!match)
      fail(errc::io_error, "manifest trial " + std::to_string(i) + " (" + key +
                               " @" + std::to_string(meta.onset) +
                               "s) not found in the data");
    const dsp::FeatureTensor tensor = dsp::build_tensor(*match);
    cache.records.push_back({meta.subject, static_cast<std::uint8_t>(meta.run),
                             static_cast<std::uint8_t>(meta.klass)});
    for (double v : tensor.values)
      cache.values.push_back(static_cast<float>(v));
  }
  return cache;
}

// Train/test halves of a cache according to the manifest split; falls back
// to a fresh deterministic split when no manifest is given.
struct Split {
  nn::Dataset train;
  nn::Dataset test;
  std::string manifest_id;  // "adhoc-<seed>" when split locally
};

inline Split split_dataset(const io::FeatureCache& cache,
                           const edf::DatasetManifest* manifest,
                           double ratio = 0.7, std::uint64_t seed = 1) {
  const nn::Dataset all = cache.to_dataset();
  Split out;
  std::vector<std::size_t> train_idx, test_idx;
  if (manifest) {
    if (manifest->trials.size() != cache.size())
      fail(errc::shape_mismatch,
           "manifest lists " + std::to_string(manifest->trials.size()) +
               " trials but cache holds " + std::to_string(cache.size()));
    train_idx = manifest->train_indices;
    test_idx = manifest->test_indices;
    out.manifest_id = io::manifest_id(*manifest);
  } else {
    std::vector<edf::TrialMeta> metas(cache.size());
    const edf::DatasetManifest adhoc = edf::make_manifest(metas, ratio, seed);
    train_idx = adhoc.train_indices;
    test_idx = adhoc.test_indices;
    char buf[32];
    std::snprintf(buf, sizeof buf, "adhoc-%llu",
                  static_cast<unsigned long long>(seed));
    out.manifest_id = buf;
  }
  out.train = all.subset(train_idx);
  out.test = all.subset(test_idx);
  return out;
}

struct TrialPrediction {
  int index = 0;
  double onset = 0.0;
  edf::TrialClass predicted = edf::TrialClass::Real;
  double p_real = 0.0;
  double p_imagined = 0.0;
};

struct ClassificationReport {
  std::string model_id;
  std::vector<TrialPrediction> trials;
  std::size_t real_count = 0;
  std::size_t imagined_count = 0;
};

// Feature + forward pass for already segmented trials; probabilities are the
// softmax of the logits.
inline ClassificationReport classify_trials(const nn::Model& model,
                                            const std::vector<edf::Trial>& trials,
                                            const std::string& model_id) {
  ClassificationReport report;
  report.model_id = model_id;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const dsp::FeatureTensor tensor = dsp::build_tensor(trials[i]);
    nn::Tensor batch({1, tensor.channels, tensor.bands, tensor.frames});
    batch.v = tensor.values;
    const nn::Tensor logits = nn::forward(model, batch, false);
    const double mx = std::max(logits.v[0], logits.v[1]);
    const double e0 = std::exp(logits.v[0] - mx);
    const double e1 = std::exp(logits.v[1] - mx);
    TrialPrediction p;
    p.index = static_cast<int>(i);
    p.onset = trials[i].onset;
    p.p_real = e0 / (e0 + e1);
    p.p_imagined = e1 / (e0 + e1);
    p.predicted = p.p_imagined > p.p_real ? edf::TrialClass::Imagined
                                          : edf::TrialClass::Real;
    (p.predicted == edf::TrialClass::Real ? report.real_count
                                          : report.imagined_count)++;
    report.trials.push_back(p);
  }
  return report;
}

inline json classification_to_json(const ClassificationReport& report) {
  json trials = json::array();
  for (const TrialPrediction& p : report.trials) {
    trials.push_back({{"index", p.index},
                      {"onset", p.onset},
                      {"predicted", edf::trial_class_name(p.predicted)},
                      {"probabilities", {p.p_real, p.p_imagined}}});
  }
  return {{"model_id", report.model_id},
          {"trials", trials},
          {"summary",
           {{"real", report.real_count}, {"imagined", report.imagined_count}}}};
}

}  // namespace eegline::pipeline
