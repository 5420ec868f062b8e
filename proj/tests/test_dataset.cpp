#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "eegline/dataset.hpp"
#include "support.hpp"

using namespace eegline;
using edf::classify_run;
using edf::TaskKind;
using edf::TrialClass;

namespace {

edf::RawRecording task_recording(int run, std::size_t total_samples,
                                 std::vector<edf::Annotation> annotations,
                                 int channels = 64, double fs = 160.0) {
  edf::RawRecording rec;
  rec.subject = "S001";
  rec.run = run;
  rec.fs = fs;
  rec.annotations = std::move(annotations);
  rec.samples.assign(channels, std::vector<double>(total_samples, 0.0));
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < total_samples; ++i)
      rec.samples[c][i] = c + 0.001 * static_cast<double>(i);
  for (int c = 0; c < channels; ++c)
    rec.channel_labels.push_back("CH" + std::to_string(c));
  return rec;
}

}  // namespace

TEST_CASE("run-to-task mapping is frozen", "[dataset]") {
  CHECK(classify_run(1) == TaskKind::Baseline);
  CHECK(classify_run(2) == TaskKind::Baseline);
  CHECK(classify_run(3) == TaskKind::RealMovement);
  CHECK(classify_run(4) == TaskKind::ImaginedMovement);
  for (int run : {3, 5, 7, 9, 11, 13})
    CHECK(classify_run(run) == TaskKind::RealMovement);
  for (int run : {4, 6, 8, 10, 12, 14})
    CHECK(classify_run(run) == TaskKind::ImaginedMovement);
  CHECK_THROWS_AS(classify_run(0), Error);
  CHECK_THROWS_AS(classify_run(15), Error);
}

TEST_CASE("windows past the end of the recording are dropped", "[dataset]") {
  auto rec = task_recording(3, 600, {{0.0, 4.1, "T1"}});
  CHECK(edf::segment_trials(rec).empty());
}

TEST_CASE("each T1/T2 event yields one 64x656 trial", "[dataset]") {
  auto rec = task_recording(3, 2000, {{0.0, 4.1, "T1"}, {5.0, 4.1, "T2"}});
  auto trials = edf::segment_trials(rec);
  REQUIRE(trials.size() == 2);
  for (const edf::Trial& t : trials) {
    CHECK(t.data.size() == 64u * 656u);
    CHECK(t.klass == TrialClass::Real);
  }
  CHECK(trials[0].event_label == "T1");
  CHECK(trials[1].event_label == "T2");
  // second trial starts at sample 800
  CHECK(trials[1].at(0, 0) == rec.samples[0][800]);
}

TEST_CASE("rest events are not trials", "[dataset]") {
  auto rec = task_recording(3, 2000, {{0.0, 4.1, "T0"}});
  CHECK(edf::segment_trials(rec).empty());
}

TEST_CASE("trial class follows the run kind", "[dataset]") {
  for (int run = 3; run <= 14; ++run) {
    auto rec = task_recording(run, 1000, {{0.0, 4.1, "T1"}});
    auto trials = edf::segment_trials(rec);
    REQUIRE(trials.size() == 1);
    const TrialClass expected = classify_run(run) == TaskKind::RealMovement
                                    ? TrialClass::Real
                                    : TrialClass::Imagined;
    CHECK(trials[0].klass == expected);
  }
}

TEST_CASE("baseline runs never yield trials", "[dataset]") {
  auto rec = task_recording(1, 2000, {{0.0, 4.1, "T1"}});
  CHECK(edf::segment_trials(rec).empty());
}

TEST_CASE("subject validation is rule based", "[dataset]") {
  SECTION("conforming runs are accepted") {
    std::vector<edf::RawRecording> runs;
    runs.push_back(task_recording(3, 700, {{0.0, 4.1, "T1"}}));
    runs.push_back(task_recording(4, 700, {{0.0, 4.1, "T2"}}));
    const auto verdict = edf::validate_subject(runs);
    CHECK(verdict.accepted);
    CHECK(verdict.reason.empty());
    // purity: same input, same verdict
    CHECK(edf::validate_subject(runs).accepted == verdict.accepted);
  }
  SECTION("wrong sampling rate") {
    std::vector<edf::RawRecording> runs;
    runs.push_back(task_recording(3, 700, {{0.0, 4.1, "T1"}}, 64, 128.0));
    const auto verdict = edf::validate_subject(runs);
    CHECK_FALSE(verdict.accepted);
    CHECK(verdict.reason == "sampling-rate");
  }
  SECTION("wrong channel count") {
    std::vector<edf::RawRecording> runs;
    runs.push_back(task_recording(3, 700, {{0.0, 4.1, "T1"}}, 32));
    CHECK(edf::validate_subject(runs).reason == "channel-count");
  }
  SECTION("unknown annotation label") {
    std::vector<edf::RawRecording> runs;
    runs.push_back(task_recording(3, 700, {{0.0, 4.1, "T3"}}));
    CHECK(edf::validate_subject(runs).reason == "annotation-labels");
  }
}

TEST_CASE("manifest split is a deterministic 7:3 permutation", "[dataset]") {
  std::vector<edf::TrialMeta> metas(10);
  for (int i = 0; i < 10; ++i)
    metas[i] = {"S001", 3, "T1", TrialClass::Real, static_cast<double>(i)};

  const auto m = edf::make_manifest(metas, 0.7, 42);
  CHECK(m.train_indices.size() == 7);
  CHECK(m.test_indices.size() == 3);
  CHECK(m.trial_count == 10);

  std::set<std::size_t> all(m.train_indices.begin(), m.train_indices.end());
  for (std::size_t i : m.test_indices) {
    CHECK(all.count(i) == 0);  // disjoint
    all.insert(i);
  }
  CHECK(all.size() == 10);  // a permutation of 0..N-1
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);

  const auto again = edf::make_manifest(metas, 0.7, 42);
  CHECK(again.train_indices == m.train_indices);
  CHECK(again.test_indices == m.test_indices);

  const auto other_seed = edf::make_manifest(metas, 0.7, 43);
  CHECK(other_seed.train_indices != m.train_indices);
}

TEST_CASE("manifest of nothing is an error", "[dataset]") {
  CHECK_THROWS_AS(edf::make_manifest({}, 0.7, 1), Error);
}

TEST_CASE("split sizes follow the ratio for odd counts", "[dataset]") {
  std::vector<edf::TrialMeta> metas(17);
  const auto m = edf::make_manifest(metas, 0.7, 7);
  CHECK(m.train_indices.size() == 11);  // floor(0.7 * 17)
  CHECK(m.test_indices.size() == 6);
}
