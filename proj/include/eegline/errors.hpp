#pragma once

#include <stdexcept>
#include <string>

namespace eegline {

// Machine-readable failure kinds. Error::name() yields the stable string
// used in CLI diagnostics and HTTP error bodies.
enum class errc {
  truncated_file,
  malformed_header,
  unsupported_variant,
  malformed_tal,
  out_of_range_run,
  empty_dataset,
  invalid_band,
  signal_too_short,
  incompatible_band_width,
  degenerate_frame,
  shape_mismatch,
  infeasible_config,
  empty_space,
  empty_ledger,
  single_class,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::truncated_file: return "TruncatedFile";
    case errc::malformed_header: return "MalformedHeader";
    case errc::unsupported_variant: return "UnsupportedVariant";
    case errc::malformed_tal: return "MalformedTal";
    case errc::out_of_range_run: return "OutOfRangeRun";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::invalid_band: return "InvalidBand";
    case errc::signal_too_short: return "SignalTooShort";
    case errc::incompatible_band_width: return "IncompatibleBandWidth";
    case errc::degenerate_frame: return "DegenerateFrame";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::infeasible_config: return "InfeasibleConfig";
    case errc::empty_space: return "EmptySpace";
    case errc::empty_ledger: return "EmptyLedger";
    case errc::single_class: return "SingleClass";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}

  errc code() const noexcept { return code_; }
  const char* name() const noexcept { return errc_name(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace eegline
