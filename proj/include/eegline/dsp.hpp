#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "eegline/dataset.hpp"
#include "eegline/errors.hpp"

namespace eegline::dsp {

inline constexpr double kLogEpsilon = 1e-12;

struct FilterSpec {
  double low_cut = 3.0;   // Hz
  double high_cut = 30.0; // Hz
  double fs = 160.0;      // Hz
  int order = 4;          // analog prototype order
};

// One second-order section; a0 is normalized to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

using Sos = std::vector<Biquad>;

// |H(e^{j2*pi*f/fs})| of a biquad cascade.
inline double sos_magnitude(const Sos& sos, double f, double fs) {
  const std::complex<double> zi =
      std::exp(std::complex<double>(0.0, -2.0 * std::numbers::pi * f / fs));
  std::complex<double> h = 1.0;
  for (const Biquad& s : sos) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) /
         (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  return std::abs(h);
}

// Butterworth bandpass via the analog prototype, lowpass-to-bandpass
// transform and bilinear mapping. `spec.order` is the prototype order; the
// result has 2*order poles in `order` cascaded sections, each carrying one
// zero at DC and one at Nyquist. Gain is normalized to 1 at the geometric
// mid-band frequency.
inline Sos design_bandpass(const FilterSpec& spec) {
  if (!(spec.low_cut > 0.0) || !(spec.low_cut < spec.high_cut) ||
      !(spec.high_cut < spec.fs / 2.0) || spec.order < 1)
    fail(errc::invalid_band,
         "need 0 < low < high < fs/2 and order >= 1, got [" +
             std::to_string(spec.low_cut) + ", " + std::to_string(spec.high_cut) +
             "] at fs " + std::to_string(spec.fs));

  using cd = std::complex<double>;
  const double K = 2.0 * spec.fs;  // bilinear constant
  const double wl = K * std::tan(std::numbers::pi * spec.low_cut / spec.fs);
  const double wh = K * std::tan(std::numbers::pi * spec.high_cut / spec.fs);
  const double w0sq = wl * wh;
  const double bw = wh - wl;

  // Prototype poles on the unit circle, left half plane.
  std::vector<cd> zpoles;
  for (int k = 0; k < spec.order; ++k) {
    const double theta =
        std::numbers::pi * (2.0 * k + spec.order + 1.0) / (2.0 * spec.order);
    const cd p(std::cos(theta), std::sin(theta));
    const cd pb = p * bw;
    const cd disc = std::sqrt(pb * pb - 4.0 * w0sq);
    for (const cd s : {(pb + disc) / 2.0, (pb - disc) / 2.0})
      zpoles.push_back((K + s) / (K - s));
  }

  constexpr double kRealEps = 1e-10;
  std::vector<double> reals;
  std::vector<cd> uppers;
  for (const cd& z : zpoles) {
    if (std::abs(z.imag()) <= kRealEps)
      reals.push_back(z.real());
    else if (z.imag() > 0.0)
      uppers.push_back(z);
  }
  std::sort(reals.begin(), reals.end());
  std::sort(uppers.begin(), uppers.end(),
            [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });

  Sos sos;
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2)
    sos.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]),
                   reals[i] * reals[i + 1]});
  for (const cd& z : uppers)
    sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  std::sort(sos.begin(), sos.end(),
            [](const Biquad& x, const Biquad& y) { return x.a2 < y.a2; });

  const double fc = std::sqrt(spec.low_cut * spec.high_cut);
  const double g = sos_magnitude(sos, fc, spec.fs);
  sos.front().b0 /= g;
  sos.front().b2 /= g;
  return sos;
}

// Causal cascade run, direct form II transposed, zero initial state.
inline void sosfilt_inplace(const Sos& sos, std::vector<double>& x) {
  for (const Biquad& s : sos) {
    double s1 = 0.0, s2 = 0.0;
    for (double& v : x) {
      const double y = s.b0 * v + s1;
      s1 = s.b1 * v - s.a1 * y + s2;
      s2 = s.b2 * v - s.a2 * y;
      v = y;
    }
  }
}

// Zero-phase run: mirror-pad by 3*order samples each side, filter forward,
// filter the reverse, trim. Amplitude response is |H|^2.
inline std::vector<double> apply_filter(std::span<const double> signal,
                                        const Sos& sos, int order = 4) {
  const std::size_t n = signal.size();
  const std::size_t pad = static_cast<std::size_t>(3 * order);
  if (n <= pad)
    fail(errc::signal_too_short,
         std::to_string(n) + " samples, need > " + std::to_string(pad));

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(signal[n - 1 - i]);

  sosfilt_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::span<double> re, std::span<double> im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    fail(errc::shape_mismatch, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

struct SpectrogramSpec {
  int window_len = 128;  // 0.8 s at 160 Hz, Hann
  int hop = 8;           // 0.05 s
  int nfft = 128;
};

struct Spectrogram {
  int bins = 0;    // nfft/2 + 1
  int frames = 0;
  double bin_hz = 0.0;
  std::vector<double> power;  // [bin][frame], row-major, nonnegative

  double at(int bin, int frame) const {
    return power[static_cast<std::size_t>(bin) * frames + frame];
  }
};

inline int frame_count(std::size_t signal_len, const SpectrogramSpec& spec) {
  return static_cast<int>((signal_len - spec.window_len) / spec.hop) + 1;
}

// Squared-magnitude short-time spectrum with a periodic Hann window.
// Frame t covers samples [t*hop, t*hop + window_len).
inline Spectrogram stft_power(std::span<const double> signal,
                              const SpectrogramSpec& spec, double fs = 160.0) {
  if (spec.window_len > spec.nfft || spec.hop < 1)
    fail(errc::shape_mismatch, "window_len must be <= nfft and hop >= 1");
  if (signal.size() < static_cast<std::size_t>(spec.window_len))
    fail(errc::signal_too_short,
         std::to_string(signal.size()) + " samples, window needs " +
             std::to_string(spec.window_len));

  std::vector<double> window(spec.window_len);
  for (int i = 0; i < spec.window_len; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i /
                                     static_cast<double>(spec.window_len));

  Spectrogram out;
  out.bins = spec.nfft / 2 + 1;
  out.frames = frame_count(signal.size(), spec);
  out.bin_hz = fs / spec.nfft;
  out.power.assign(static_cast<std::size_t>(out.bins) * out.frames, 0.0);

  std::vector<double> re(spec.nfft), im(spec.nfft);
  for (int t = 0; t < out.frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const std::size_t base = static_cast<std::size_t>(t) * spec.hop;
    for (int i = 0; i < spec.window_len; ++i)
      re[i] = signal[base + i] * window[i];
    fft_inplace(re, im);
    for (int b = 0; b < out.bins; ++b)
      out.power[static_cast<std::size_t>(b) * out.frames + t] =
          re[b] * re[b] + im[b] * im[b];
  }
  return out;
}

struct BandSpec {
  double band_width = 2.5;  // Hz
  int num_bands = 32;       // covers 0..fs/2
};

// Mean power per band of `band_width` Hz. The Nyquist bin does not fill a
// band of its own and is folded into the last band as an extra member, so
// band sums weighted by member count reproduce the bin total exactly.
inline std::vector<double> band_average(const Spectrogram& spec,
                                        const BandSpec& bands) {
  const double ratio = bands.band_width / spec.bin_hz;
  const int per_band = static_cast<int>(std::lround(ratio));
  if (per_band < 1 || std::abs(ratio - per_band) > 1e-9)
    fail(errc::incompatible_band_width,
         "band width " + std::to_string(bands.band_width) +
             " not a multiple of bin width " + std::to_string(spec.bin_hz));
  const int whole = bands.num_bands * per_band;
  if (spec.bins != whole && spec.bins != whole + 1)
    fail(errc::incompatible_band_width,
         std::to_string(spec.bins) + " bins cannot form " +
             std::to_string(bands.num_bands) + " bands of " +
             std::to_string(per_band));
  const bool fold_nyquist = spec.bins == whole + 1;

  std::vector<double> out(static_cast<std::size_t>(bands.num_bands) *
                          spec.frames);
  for (int band = 0; band < bands.num_bands; ++band) {
    const int lo = band * per_band;
    int hi = lo + per_band;  // exclusive
    if (fold_nyquist && band == bands.num_bands - 1) ++hi;
    for (int t = 0; t < spec.frames; ++t) {
      double sum = 0.0;
      for (int b = lo; b < hi; ++b) sum += spec.at(b, t);
      out[static_cast<std::size_t>(band) * spec.frames + t] =
          sum / static_cast<double>(hi - lo);
    }
  }
  return out;
}

// Log relative power per frame: ln(P_i / sum_j P_j + epsilon). A frame whose
// total power is at or below epsilon*num_bands marks a degenerate trial and
// is reported rather than passed through.
inline std::vector<double> relative_log_power(const std::vector<double>& banded,
                                              int num_bands, int frames) {
  if (banded.size() != static_cast<std::size_t>(num_bands) * frames)
    fail(errc::shape_mismatch, "banded matrix size mismatch");
  std::vector<double> out(banded.size());
  for (int t = 0; t < frames; ++t) {
    double total = 0.0;
    for (int band = 0; band < num_bands; ++band)
      total += banded[static_cast<std::size_t>(band) * frames + t];
    if (total <= kLogEpsilon * num_bands)
      fail(errc::degenerate_frame,
           "frame " + std::to_string(t) + " has no power");
    for (int band = 0; band < num_bands; ++band) {
      const std::size_t i = static_cast<std::size_t>(band) * frames + t;
      out[i] = std::log(banded[i] / total + kLogEpsilon);
    }
  }
  return out;
}

struct FeatureTensor {
  int channels = 0;
  int bands = 0;
  int frames = 0;
  std::vector<double> values;  // [channel][band][frame], row-major

  double at(int c, int b, int t) const {
    return values[(static_cast<std::size_t>(c) * bands + b) * frames + t];
  }
};

inline constexpr int kFeatureBands = 32;
inline constexpr int kFeatureFrames = 67;  // (656 - 128)/8 + 1

// Full per-trial feature pipeline: zero-phase bandpass, Hann spectrogram,
// 2.5 Hz band averaging, log relative power, stacked over channels.
inline FeatureTensor build_tensor(const edf::Trial& trial,
                                  const FilterSpec& filter = {},
                                  const SpectrogramSpec& stft = {},
                                  const BandSpec& bands = {}) {
  const Sos sos = design_bandpass(filter);
  const int channels = static_cast<int>(trial.data.size() / edf::kTrialSamples);
  FeatureTensor out;
  out.channels = channels;
  out.bands = bands.num_bands;
  out.values.reserve(static_cast<std::size_t>(channels) * bands.num_bands *
                     kFeatureFrames);
  for (int c = 0; c < channels; ++c) {
    std::span<const double> raw(trial.data.data() +
                                    static_cast<std::size_t>(c) *
                                        edf::kTrialSamples,
                                edf::kTrialSamples);
    const std::vector<double> filtered = apply_filter(raw, sos, filter.order);
    const Spectrogram spec = stft_power(filtered, stft, filter.fs);
    out.frames = spec.frames;
    const std::vector<double> banded = band_average(spec, bands);
    try {
      const std::vector<double> rlp =
          relative_log_power(banded, bands.num_bands, spec.frames);
      out.values.insert(out.values.end(), rlp.begin(), rlp.end());
    } catch (const Error& e) {
      if (e.code() == errc::degenerate_frame)
        fail(errc::degenerate_frame,
             "channel " + std::to_string(c) + ": " + e.what());
      throw;
    }
  }
  return out;
}

}  // namespace eegline::dsp
