#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "eegline/edf.hpp"
#include "eegline/errors.hpp"

namespace eegline::edf {

// Input description for write_edf. Digital samples are given per signal as
// one flat array of num_records * samples_per_record values.
struct WriteSignal {
  SignalHeader header;
  std::vector<std::int16_t> digital;
};

struct WriteSpec {
  EdfHeader header;  // header_bytes / num_signals are recomputed on write
  std::vector<WriteSignal> signals;
};

namespace detail {

inline void put_field(std::vector<std::uint8_t>& out, const std::string& text,
                      std::size_t width) {
  if (text.size() > width)
    fail(errc::io_error, "header field '" + text + "' exceeds " +
                             std::to_string(width) + " bytes");
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), width - text.size(), ' ');
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  std::string s(buf);
  if (s.size() > 8) {
    std::snprintf(buf, sizeof buf, "%.3g", v);
    s = buf;
  }
  return s;
}

}  // namespace detail

// Serializes TALs for `num_records` records of `record_duration` seconds.
// Each record starts with its timekeeping TAL; events fall into the record
// containing their onset. Returns the digital samples of the annotation
// signal (bytes packed little-endian into int16 slots, zero padded).
inline std::vector<std::int16_t> make_annotation_signal(
    const std::vector<Annotation>& annotations, long num_records,
    double record_duration, int samples_per_record) {
  std::vector<std::int16_t> out;
  out.reserve(static_cast<std::size_t>(num_records) * samples_per_record);
  for (long r = 0; r < num_records; ++r) {
    std::string chunk = "+" + detail::format_number(r * record_duration);
    chunk += '\x14';
    chunk += '\x14';
    chunk += '\x00';
    for (const Annotation& a : annotations) {
      double lo = r * record_duration, hi = (r + 1) * record_duration;
      if (a.onset < lo || a.onset >= hi) continue;
      chunk += "+" + detail::format_number(a.onset);
      if (a.duration > 0) {
        chunk += '\x15';
        chunk += detail::format_number(a.duration);
      }
      chunk += '\x14';
      chunk += a.label;
      chunk += '\x14';
      chunk += '\x00';
    }
    std::size_t capacity = static_cast<std::size_t>(samples_per_record) * 2;
    if (chunk.size() > capacity)
      fail(errc::io_error, "annotation record overflows its signal slot");
    chunk.resize(capacity, '\x00');
    for (std::size_t i = 0; i < capacity; i += 2) {
      out.push_back(static_cast<std::int16_t>(
          static_cast<std::uint16_t>(static_cast<std::uint8_t>(chunk[i])) |
          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(chunk[i + 1]))
           << 8)));
    }
  }
  return out;
}

inline std::vector<std::uint8_t> write_edf(const WriteSpec& spec) {
  const int ns = static_cast<int>(spec.signals.size());
  if (ns == 0) fail(errc::io_error, "no signals to write");
  long num_records = spec.header.num_records;
  for (const WriteSignal& s : spec.signals) {
    if (s.header.samples_per_record <= 0)
      fail(errc::io_error, "samples_per_record must be positive");
    if (s.digital.size() !=
        static_cast<std::size_t>(num_records) * s.header.samples_per_record)
      fail(errc::io_error, "digital sample count does not match record count");
  }

  std::vector<std::uint8_t> out;
  using detail::put_field;
  put_field(out, spec.header.version.empty() ? "0" : spec.header.version, 8);
  put_field(out, spec.header.patient_id, 80);
  put_field(out, spec.header.recording_id, 80);
  put_field(out, spec.header.start_date.empty() ? "01.01.00" : spec.header.start_date, 8);
  put_field(out, spec.header.start_time.empty() ? "00.00.00" : spec.header.start_time, 8);
  put_field(out, std::to_string(kMainHeaderBytes + kPerSignalHeaderBytes * ns), 8);
  put_field(out, spec.header.reserved, 44);
  put_field(out, std::to_string(num_records), 8);
  put_field(out, detail::format_number(spec.header.record_duration), 8);
  put_field(out, std::to_string(ns), 4);

  auto each = [&](std::size_t width, auto&& render) {
    for (const WriteSignal& s : spec.signals) put_field(out, render(s.header), width);
  };
  each(16, [](const SignalHeader& h) { return h.label; });
  each(80, [](const SignalHeader& h) { return h.transducer; });
  each(8, [](const SignalHeader& h) { return h.physical_dim; });
  each(8, [](const SignalHeader& h) { return detail::format_number(h.phys_min); });
  each(8, [](const SignalHeader& h) { return detail::format_number(h.phys_max); });
  each(8, [](const SignalHeader& h) { return std::to_string(h.dig_min); });
  each(8, [](const SignalHeader& h) { return std::to_string(h.dig_max); });
  each(80, [](const SignalHeader& h) { return h.prefiltering; });
  each(8, [](const SignalHeader& h) { return std::to_string(h.samples_per_record); });
  each(32, [](const SignalHeader&) { return std::string(); });

  for (long r = 0; r < num_records; ++r) {
    for (const WriteSignal& s : spec.signals) {
      const int n = s.header.samples_per_record;
      for (int i = 0; i < n; ++i) {
        std::uint16_t d = static_cast<std::uint16_t>(
            s.digital[static_cast<std::size_t>(r) * n + i]);
        out.push_back(static_cast<std::uint8_t>(d & 0xFF));
        out.push_back(static_cast<std::uint8_t>(d >> 8));
      }
    }
  }
  return out;
}

// Quantizes a physical-unit series into the digital range of `h`, clamping
// values outside [phys_min, phys_max].
inline std::vector<std::int16_t> to_digital(const SignalHeader& h,
                                            const std::vector<double>& phys) {
  std::vector<std::int16_t> out;
  out.reserve(phys.size());
  const double scale = (static_cast<double>(h.dig_max) - h.dig_min) /
                       (h.phys_max - h.phys_min);
  for (double v : phys) {
    double d = std::round((v - h.phys_min) * scale + h.dig_min);
    d = std::min(static_cast<double>(h.dig_max),
                 std::max(static_cast<double>(h.dig_min), d));
    out.push_back(static_cast<std::int16_t>(d));
  }
  return out;
}

}  // namespace eegline::edf
