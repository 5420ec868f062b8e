#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "eegline/dataset.hpp"
#include "eegline/edf_writer.hpp"
#include "eegline/formats.hpp"
#include "eegline/rng.hpp"

namespace eegline::synth {

// Two-class synthetic corpus: performed-movement runs carry bursts around
// `real_freq`, imagined runs around `imagined_freq`, on top of broadband
// noise. Useful for end-to-end checks and demos without the public dataset.
struct SynthSpec {
  int subjects = 10;
  int events_per_run = 20;
  std::vector<int> runs = {3, 4};  // one real, one imagined run per subject
  double real_freq = 10.0;         // Hz
  double imagined_freq = 20.0;     // Hz
  double burst_amplitude = 14.0;   // microvolts
  double noise_sigma = 5.0;        // microvolts
  std::uint64_t seed = 7;
};

namespace detail {

inline double gaussian(std::mt19937_64& rng) {
  // Box-Muller; the pair's second half is discarded for simplicity.
  double u1 = uniform_real(rng);
  while (u1 <= 1e-300) u1 = uniform_real(rng);
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

inline std::string subject_name(int subject) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03d", subject);
  return buf;
}

inline std::string run_file_name(int subject, int run) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "S%03dR%02d.edf", subject, run);
  return buf;
}

// One recording: events every 5 s starting at t=4 s, each 4.1 s long.
inline std::vector<std::uint8_t> make_run_edf(const SynthSpec& spec,
                                              int subject, int run) {
  const double fs = edf::kFs;
  const int spr = static_cast<int>(fs);  // 1 s records
  const long records = 4 + 5L * spec.events_per_run + 4;
  const std::size_t total = static_cast<std::size_t>(records) * spr;
  const bool real = edf::classify_run(run) == edf::TaskKind::RealMovement;
  const double freq = real ? spec.real_freq : spec.imagined_freq;

  std::vector<edf::Annotation> annotations;
  annotations.push_back({0.0, 4.0, "T0"});
  for (int e = 0; e < spec.events_per_run; ++e)
    annotations.push_back(
        {4.0 + 5.0 * e, edf::kTrialSeconds, e % 2 == 0 ? "T1" : "T2"});

  edf::WriteSpec ws;
  ws.header.patient_id = subject_name(subject);
  ws.header.recording_id = "synthetic " + run_file_name(subject, run);
  ws.header.reserved = "EDF+C";
  ws.header.num_records = records;
  ws.header.record_duration = 1.0;

  std::mt19937_64 rng(
      mix_seed(spec.seed, (static_cast<std::uint64_t>(subject) << 8) | run));
  for (int c = 0; c < edf::kChannels; ++c) {
    std::vector<double> x(total);
    for (double& v : x) v = spec.noise_sigma * detail::gaussian(rng);
    for (const edf::Annotation& a : annotations) {
      if (a.label == "T0") continue;
      const double amp =
          spec.burst_amplitude * (0.8 + 0.4 * uniform_real(rng));
      const double phase = 2.0 * std::numbers::pi * uniform_real(rng);
      const std::size_t start = static_cast<std::size_t>(a.onset * fs);
      for (int i = 0; i < edf::kTrialSamples; ++i) {
        const double frac = static_cast<double>(i) / edf::kTrialSamples;
        const double env =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * frac);
        x[start + i] += amp * env *
                        std::sin(2.0 * std::numbers::pi * freq * i / fs + phase);
      }
    }
    edf::WriteSignal sig;
    char label[20];
    std::snprintf(label, sizeof label, "EEG CH%02d", c + 1);
    sig.header.label = label;
    sig.header.transducer = "synthetic";
    sig.header.physical_dim = "uV";
    sig.header.phys_min = -200.0;
    sig.header.phys_max = 200.0;
    sig.header.dig_min = -2048;
    sig.header.dig_max = 2047;
    sig.header.samples_per_record = spr;
    sig.digital = edf::to_digital(sig.header, x);
    ws.signals.push_back(std::move(sig));
  }

  edf::WriteSignal ann;
  ann.header.label = edf::kAnnotationLabel;
  ann.header.phys_min = -1.0;
  ann.header.phys_max = 1.0;
  ann.header.dig_min = -32768;
  ann.header.dig_max = 32767;
  ann.header.samples_per_record = 40;  // 80 bytes of TAL space per record
  ann.digital = edf::make_annotation_signal(annotations, records, 1.0,
                                            ann.header.samples_per_record);
  ws.signals.push_back(std::move(ann));

  return edf::write_edf(ws);
}

// Writes dir/S001/S001R03.edf, ... in the public dataset's layout.
inline void write_corpus(const SynthSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  for (int s = 1; s <= spec.subjects; ++s) {
    const fs::path sub = fs::path(dir) / subject_name(s);
    fs::create_directories(sub);
    for (int run : spec.runs)
      io::write_file((sub / run_file_name(s, run)).string(),
                     make_run_edf(spec, s, run));
  }
}

// One in-memory trial, bypassing the EDF layer; handy for unit tests.
inline edf::Trial make_trial(edf::TrialClass klass, std::uint64_t seed,
                             const SynthSpec& spec = {}) {
  const double freq =
      klass == edf::TrialClass::Real ? spec.real_freq : spec.imagined_freq;
  edf::Trial t;
  t.subject = "SYN";
  t.run = klass == edf::TrialClass::Real ? 3 : 4;
  t.event_label = "T1";
  t.klass = klass;
  t.data.resize(static_cast<std::size_t>(edf::kChannels) * edf::kTrialSamples);
  std::mt19937_64 rng(seed);
  for (int c = 0; c < edf::kChannels; ++c) {
    const double amp = spec.burst_amplitude * (0.8 + 0.4 * uniform_real(rng));
    const double phase = 2.0 * std::numbers::pi * uniform_real(rng);
    for (int i = 0; i < edf::kTrialSamples; ++i) {
      const double frac = static_cast<double>(i) / edf::kTrialSamples;
      const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * frac);
      t.at(c, i) = spec.noise_sigma * detail::gaussian(rng) +
                   amp * env *
                       std::sin(2.0 * std::numbers::pi * freq * i / edf::kFs +
                                phase);
    }
  }
  return t;
}

}  // namespace eegline::synth
