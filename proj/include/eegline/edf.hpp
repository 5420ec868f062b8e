#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eegline/errors.hpp"

namespace eegline::edf {

inline constexpr char kAnnotationLabel[] = "EDF Annotations";
inline constexpr std::size_t kMainHeaderBytes = 256;
inline constexpr std::size_t kPerSignalHeaderBytes = 256;

struct EdfHeader {
  std::string version;       // text(8)
  std::string patient_id;    // text(80)
  std::string recording_id;  // text(80)
  std::string start_date;    // text(8), dd.mm.yy
  std::string start_time;    // text(8), hh.mm.ss
  long header_bytes = 0;
  std::string reserved;      // text(44); "EDF+C" marks a continuous EDF+ file
  long num_records = 0;
  double record_duration = 0.0;  // seconds
  int num_signals = 0;
};

struct SignalHeader {
  std::string label;         // text(16)
  std::string transducer;    // text(80)
  std::string physical_dim;  // text(8)
  double phys_min = 0.0;
  double phys_max = 0.0;
  int dig_min = 0;
  int dig_max = 0;
  std::string prefiltering;  // text(80)
  int samples_per_record = 0;

  bool is_annotation() const { return label == kAnnotationLabel; }
};

struct Annotation {
  double onset = 0.0;     // seconds from recording start
  double duration = 0.0;  // seconds, >= 0
  std::string label;      // e.g. "T0", "T1", "T2"
};

// One decoded recording. `subject` and `run` are not part of the wire format
// (the public motor-imagery files carry them only in the file name); callers
// fill them in after parsing.
struct RawRecording {
  std::string subject;
  int run = 0;
  EdfHeader header;
  std::vector<SignalHeader> signal_headers;  // all signals, file order
  std::vector<std::string> channel_labels;   // data signals only
  double fs = 0.0;                           // Hz, data signals
  std::vector<std::vector<double>> samples;  // [channel][sample], physical units
  std::vector<Annotation> annotations;

  std::size_t channels() const { return samples.size(); }
};

namespace detail {

inline std::string trim_field(std::string_view raw) {
  std::size_t b = raw.find_first_not_of(' ');
  if (b == std::string_view::npos) return {};
  std::size_t e = raw.find_last_not_of(' ');
  return std::string(raw.substr(b, e - b + 1));
}

inline std::string_view field(std::span<const std::uint8_t> bytes,
                              std::size_t offset, std::size_t len) {
  return std::string_view(reinterpret_cast<const char*>(bytes.data()) + offset,
                          len);
}

inline long parse_long(std::string_view raw, const char* what) {
  std::string t = trim_field(raw);
  if (t.empty()) fail(errc::malformed_header, std::string("empty ") + what);
  char* end = nullptr;
  long v = std::strtol(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    fail(errc::malformed_header,
         std::string("non-numeric ") + what + " '" + t + "'");
  return v;
}

inline double parse_double(std::string_view raw, const char* what) {
  std::string t = trim_field(raw);
  if (t.empty()) fail(errc::malformed_header, std::string("empty ") + what);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    fail(errc::malformed_header,
         std::string("non-numeric ") + what + " '" + t + "'");
  return v;
}

// Strict decimal used by the TAL grammar: [+-]?digits[.digits]?
inline double parse_tal_number(std::string_view t) {
  if (t.empty()) fail(errc::malformed_tal, "empty number");
  std::size_t i = 0;
  if (t[i] == '+' || t[i] == '-') ++i;
  std::size_t digits = 0, dots = 0;
  for (; i < t.size(); ++i) {
    if (t[i] >= '0' && t[i] <= '9') {
      ++digits;
    } else if (t[i] == '.') {
      ++dots;
    } else {
      fail(errc::malformed_tal, "non-numeric onset/duration");
    }
  }
  if (digits == 0 || dots > 1) fail(errc::malformed_tal, "bad onset/duration");
  return std::strtod(std::string(t).c_str(), nullptr);
}

}  // namespace detail

// Decodes a byte stream of Time-stamped Annotation Lists. The input may span
// several data records; zero padding between and after TALs is skipped, and
// timekeeping TALs (empty label) are dropped. Throws Error(malformed_tal) on
// any grammar violation.
inline std::vector<Annotation> parse_annotations(
    std::span<const std::uint8_t> tal) {
  constexpr std::uint8_t kSep = 0x14, kDur = 0x15, kEnd = 0x00;
  std::vector<Annotation> out;
  std::size_t i = 0;
  while (i < tal.size()) {
    if (tal[i] == kEnd) {  // padding between TALs
      ++i;
      continue;
    }
    if (tal[i] != '+' && tal[i] != '-')
      fail(errc::malformed_tal, "TAL must start with '+' or '-'");
    // onset, optionally followed by \x15 duration, terminated by \x14
    std::size_t j = i;
    while (j < tal.size() && tal[j] != kSep && tal[j] != kDur && tal[j] != kEnd)
      ++j;
    if (j >= tal.size() || tal[j] == kEnd)
      fail(errc::malformed_tal, "missing 0x14 after onset");
    double onset = detail::parse_tal_number(
        std::string_view(reinterpret_cast<const char*>(tal.data()) + i, j - i));
    double duration = 0.0;
    if (tal[j] == kDur) {
      std::size_t k = ++j;
      while (j < tal.size() && tal[j] != kSep && tal[j] != kEnd) ++j;
      if (j >= tal.size() || tal[j] == kEnd)
        fail(errc::malformed_tal, "missing 0x14 after duration");
      duration = detail::parse_tal_number(std::string_view(
          reinterpret_cast<const char*>(tal.data()) + k, j - k));
      if (duration < 0) fail(errc::malformed_tal, "negative duration");
    }
    ++j;  // past the header 0x14
    // labels: text terminated by \x14, repeated; TAL terminated by \x00
    bool closed = false;
    while (j < tal.size()) {
      if (tal[j] == kEnd) {
        closed = true;
        ++j;
        break;
      }
      std::size_t k = j;
      while (j < tal.size() && tal[j] != kSep && tal[j] != kEnd) ++j;
      if (j >= tal.size() || tal[j] == kEnd)
        fail(errc::malformed_tal, "unterminated label");
      std::string label(reinterpret_cast<const char*>(tal.data()) + k, j - k);
      ++j;
      if (!label.empty()) out.push_back({onset, duration, label});
    }
    if (!closed) fail(errc::malformed_tal, "unterminated TAL");
    i = j;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Annotation& a, const Annotation& b) {
                     return a.onset < b.onset;
                   });
  return out;
}

// Parses a complete EDF or EDF+C file. Samples are scaled to physical units;
// the annotation signal, when present, is decoded into `annotations` and not
// included among the data channels.
inline RawRecording parse_edf(std::span<const std::uint8_t> bytes) {
  using namespace detail;
  if (bytes.size() < kMainHeaderBytes)
    fail(errc::truncated_file, "file shorter than the 256-byte header");
  if (bytes[0] == 0xFF)
    fail(errc::unsupported_variant, "BDF magic byte");

  RawRecording rec;
  EdfHeader& h = rec.header;
  h.version = trim_field(field(bytes, 0, 8));
  if (h.version != "0")
    fail(errc::unsupported_variant, "unknown version '" + h.version + "'");
  h.patient_id = trim_field(field(bytes, 8, 80));
  h.recording_id = trim_field(field(bytes, 88, 80));
  h.start_date = trim_field(field(bytes, 168, 8));
  h.start_time = trim_field(field(bytes, 176, 8));
  h.header_bytes = parse_long(field(bytes, 184, 8), "header_bytes");
  h.reserved = trim_field(field(bytes, 192, 44));
  if (h.reserved.starts_with("EDF+D"))
    fail(errc::unsupported_variant, "discontinuous EDF+D");
  h.num_records = parse_long(field(bytes, 236, 8), "num_records");
  h.record_duration = parse_double(field(bytes, 244, 8), "record_duration");
  h.num_signals = static_cast<int>(parse_long(field(bytes, 252, 4), "num_signals"));

  if (h.num_signals < 1 || h.num_signals > 4096)
    fail(errc::malformed_header,
         "implausible signal count " + std::to_string(h.num_signals));
  if (h.header_bytes !=
      static_cast<long>(kMainHeaderBytes + kPerSignalHeaderBytes * h.num_signals))
    fail(errc::malformed_header, "header_bytes does not match signal count");
  if (bytes.size() < static_cast<std::size_t>(h.header_bytes))
    fail(errc::truncated_file, "file shorter than declared header");
  if (h.num_records < -1)
    fail(errc::malformed_header, "negative record count");

  // Signal headers are grouped by field, not by signal.
  const int ns = h.num_signals;
  rec.signal_headers.resize(ns);
  std::size_t off = kMainHeaderBytes;
  auto each = [&](std::size_t len, auto&& assign) {
    for (int s = 0; s < ns; ++s, off += len)
      assign(rec.signal_headers[s], field(bytes, off, len));
  };
  each(16, [](SignalHeader& sh, std::string_view f) { sh.label = trim_field(f); });
  each(80, [](SignalHeader& sh, std::string_view f) { sh.transducer = trim_field(f); });
  each(8, [](SignalHeader& sh, std::string_view f) { sh.physical_dim = trim_field(f); });
  each(8, [](SignalHeader& sh, std::string_view f) { sh.phys_min = parse_double(f, "phys_min"); });
  each(8, [](SignalHeader& sh, std::string_view f) { sh.phys_max = parse_double(f, "phys_max"); });
  each(8, [](SignalHeader& sh, std::string_view f) { sh.dig_min = static_cast<int>(parse_long(f, "dig_min")); });
  each(8, [](SignalHeader& sh, std::string_view f) { sh.dig_max = static_cast<int>(parse_long(f, "dig_max")); });
  each(80, [](SignalHeader& sh, std::string_view f) { sh.prefiltering = trim_field(f); });
  each(8, [](SignalHeader& sh, std::string_view f) { sh.samples_per_record = static_cast<int>(parse_long(f, "samples_per_record")); });
  each(32, [](SignalHeader&, std::string_view) {});  // reserved

  bool any_data_signal = false;
  std::size_t record_bytes = 0;
  for (const SignalHeader& sh : rec.signal_headers) {
    if (sh.samples_per_record <= 0)
      fail(errc::malformed_header, "samples_per_record must be positive");
    if (!sh.is_annotation()) {
      any_data_signal = true;
      if (sh.dig_min >= sh.dig_max)
        fail(errc::malformed_header, "dig_min >= dig_max for '" + sh.label + "'");
      if (sh.phys_min == sh.phys_max)
        fail(errc::malformed_header, "phys_min == phys_max for '" + sh.label + "'");
    }
    record_bytes += static_cast<std::size_t>(sh.samples_per_record) * 2;
  }
  if (any_data_signal && h.record_duration <= 0)
    fail(errc::malformed_header, "record_duration must be positive");

  std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(h.header_bytes);
  long num_records = h.num_records;
  if (num_records == -1) {  // unknown count: derive from the payload
    if (record_bytes == 0 || data_bytes % record_bytes != 0)
      fail(errc::truncated_file, "trailing partial data record");
    num_records = static_cast<long>(data_bytes / record_bytes);
  }
  if (data_bytes < static_cast<std::size_t>(num_records) * record_bytes)
    fail(errc::truncated_file, "fewer data records than declared");

  // Decode records: interleaved per-signal blocks of 16-bit LE samples.
  std::vector<int> data_index(ns, -1);
  for (int s = 0; s < ns; ++s) {
    if (!rec.signal_headers[s].is_annotation()) {
      data_index[s] = static_cast<int>(rec.channel_labels.size());
      rec.channel_labels.push_back(rec.signal_headers[s].label);
    }
  }
  rec.samples.resize(rec.channel_labels.size());
  for (int s = 0; s < ns; ++s) {
    if (data_index[s] >= 0) {
      rec.samples[data_index[s]].reserve(
          static_cast<std::size_t>(num_records) *
          rec.signal_headers[s].samples_per_record);
    }
  }

  std::vector<std::uint8_t> tal_bytes;
  const std::uint8_t* p = bytes.data() + h.header_bytes;
  for (long r = 0; r < num_records; ++r) {
    for (int s = 0; s < ns; ++s) {
      const SignalHeader& sh = rec.signal_headers[s];
      const std::size_t n = static_cast<std::size_t>(sh.samples_per_record);
      if (data_index[s] < 0) {
        tal_bytes.insert(tal_bytes.end(), p, p + 2 * n);
      } else {
        std::vector<double>& chan = rec.samples[data_index[s]];
        const double scale = (sh.phys_max - sh.phys_min) /
                             (static_cast<double>(sh.dig_max) - sh.dig_min);
        for (std::size_t i = 0; i < n; ++i) {
          std::int16_t d = static_cast<std::int16_t>(
              static_cast<std::uint16_t>(p[2 * i]) |
              (static_cast<std::uint16_t>(p[2 * i + 1]) << 8));
          chan.push_back((d - sh.dig_min) * scale + sh.phys_min);
        }
      }
      p += 2 * n;
    }
  }

  if (!tal_bytes.empty()) rec.annotations = parse_annotations(tal_bytes);

  for (const SignalHeader& sh : rec.signal_headers) {
    if (!sh.is_annotation() && h.record_duration > 0) {
      rec.fs = sh.samples_per_record / h.record_duration;
      break;
    }
  }
  return rec;
}

inline RawRecording parse_edf(const std::vector<std::uint8_t>& bytes) {
  return parse_edf(std::span<const std::uint8_t>(bytes));
}

}  // namespace eegline::edf
