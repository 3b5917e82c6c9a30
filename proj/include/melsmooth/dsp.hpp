#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "melsmooth/common.hpp"

namespace melsmooth::dsp {

struct StftConfig {
  int win_length = 1024;
  int hop_length = 256;
  int fft_size = 1024;
};

struct MelConfig {
  int n_mels = 100;
  double f_min_hz = 0.0;
  double f_max_hz = 12000.0;
  double db_floor_amp = 1e-5;
};

inline void validate(const StftConfig& cfg) {
  if (cfg.win_length <= 0 || cfg.hop_length <= 0 || cfg.fft_size <= 0)
    throw std::invalid_argument("stft config: all sizes must be positive");
  if (cfg.win_length > cfg.fft_size)
    throw std::invalid_argument("stft config: win_length must not exceed fft_size");
  if (cfg.hop_length >= cfg.win_length)
    throw std::invalid_argument("stft config: hop_length must be < win_length");
  if ((cfg.fft_size & (cfg.fft_size - 1)) != 0)
    throw std::invalid_argument("stft config: fft_size must be a power of two");
}

// Periodic Hann: w[k] = 0.5 * (1 - cos(2*pi*k / n)).
inline std::vector<double> hann_window(std::size_t n) {
  if (n == 0) throw std::invalid_argument("hann_window: n must be >= 1");
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k)
    w[k] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n)));
  return w;
}

namespace detail {

// In-place iterative radix-2 FFT, n a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Reflect-padding index (no edge duplication), valid for any i given n >= 2.
inline std::size_t mirror_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long p = 2 * (n - 1);
  long long k = ((i % p) + p) % p;
  return static_cast<std::size_t>(k < n ? k : p - k);
}

}  // namespace detail

using ComplexGrid = std::vector<std::vector<std::complex<double>>>;

// Center-padded STFT. Frame t is the window of win_length samples centered at
// sample t*hop_length; out-of-range samples are reflected. Produces
// floor(len/hop) + 1 frames of fft_size/2 + 1 bins.
inline ComplexGrid stft(const Waveform& w, const StftConfig& cfg) {
  validate(cfg);
  const long long len = static_cast<long long>(w.samples.size());
  if (len < 2) throw std::invalid_argument("stft: waveform must have at least 2 samples");

  const std::vector<double> window = hann_window(static_cast<std::size_t>(cfg.win_length));
  const std::size_t n_frames = static_cast<std::size_t>(len / cfg.hop_length) + 1;
  const std::size_t n_bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
  const long long half = cfg.win_length / 2;

  ComplexGrid out(n_frames, std::vector<std::complex<double>>(n_bins));
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (std::size_t t = 0; t < n_frames; ++t) {
    const long long center = static_cast<long long>(t) * cfg.hop_length;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (long long k = 0; k < cfg.win_length; ++k) {
      const long long src = center - half + k;
      buf[static_cast<std::size_t>(k)] =
          w.samples[detail::mirror_index(src, len)] * window[static_cast<std::size_t>(k)];
    }
    detail::fft_radix2(buf);
    for (std::size_t b = 0; b < n_bins; ++b) out[t][b] = buf[b];
  }
  return out;
}

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters with centers uniformly spaced on the mel scale.
// Rows are filters, columns FFT bins. Throws if any filter covers no bin.
inline Grid mel_filterbank(const MelConfig& cfg, int fft_size, int sample_rate) {
  if (cfg.n_mels < 1) throw std::invalid_argument("mel_filterbank: n_mels must be >= 1");
  if (cfg.f_min_hz < 0.0 || cfg.f_min_hz >= cfg.f_max_hz ||
      cfg.f_max_hz > sample_rate / 2.0)
    throw std::invalid_argument("mel_filterbank: require 0 <= f_min < f_max <= sample_rate/2");

  const std::size_t n_bins = static_cast<std::size_t>(fft_size) / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.f_min_hz);
  const double mel_hi = hz_to_mel(cfg.f_max_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_mels + 1));

  Grid fb(static_cast<std::size_t>(cfg.n_mels), n_bins);
  for (std::size_t m = 0; m < fb.rows; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / fft_size;
      double wgt = 0.0;
      if (f > lo && f < hi)
        wgt = (f <= center) ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
      fb.at(m, b) = std::max(0.0, wgt);
      any = any || fb.at(m, b) > 0.0;
    }
    if (!any)
      throw std::runtime_error("mel_filterbank: filter " + std::to_string(m) +
                               " covers no FFT bin; reduce n_mels or raise fft_size");
  }
  return fb;
}

// Magnitude mel-spectrogram in dB: 20*log10(max(filterbank * |STFT|, floor)).
inline MelSpectrogram mel_spectrogram(const Waveform& w, const StftConfig& stft_cfg,
                                      const MelConfig& mel_cfg) {
  const ComplexGrid spec = stft(w, stft_cfg);
  const Grid fb = mel_filterbank(mel_cfg, stft_cfg.fft_size, w.sample_rate_hz);
  const std::size_t n_bins = fb.cols;

  MelSpectrogram mel;
  mel.grid = Grid(spec.size(), fb.rows);
  std::vector<double> mag(n_bins);
  for (std::size_t t = 0; t < spec.size(); ++t) {
    for (std::size_t b = 0; b < n_bins; ++b) mag[b] = std::abs(spec[t][b]);
    for (std::size_t m = 0; m < fb.rows; ++m) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n_bins; ++b) acc += fb.at(m, b) * mag[b];
      mel.grid.at(t, m) = 20.0 * std::log10(std::max(acc, mel_cfg.db_floor_amp));
    }
  }
  return mel;
}

}  // namespace melsmooth::dsp
