#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "melsmooth/augment.hpp"
#include "melsmooth/common.hpp"

namespace melsmooth::metrics {

struct MsdResult {
  std::vector<double> per_frame;  // dB
  double utterance_mean = 0.0;

  std::size_t n_frames() const { return per_frame.size(); }
};

struct NormalizedHistogram {
  std::vector<double> bin_edges;  // ascending, uniform width
  std::vector<double> masses;     // normalized over in-range samples
  std::size_t in_range = 0;
  std::size_t out_of_range = 0;
  bool empty = false;

  double out_of_range_fraction() const {
    const std::size_t total = in_range + out_of_range;
    return total == 0 ? 0.0 : static_cast<double>(out_of_range) / static_cast<double>(total);
  }
};

// Per-frame L2 norm of the mel difference, in dB.
inline MsdResult msd(const MelSpectrogram& ref, const MelSpectrogram& other) {
  if (!ref.grid.same_shape(other.grid))
    throw std::invalid_argument(
        "msd: shape mismatch, ref is " + std::to_string(ref.n_frames()) + "x" +
        std::to_string(ref.n_mels()) + ", other is " + std::to_string(other.n_frames()) +
        "x" + std::to_string(other.n_mels()));
  MsdResult result;
  result.per_frame.resize(ref.n_frames());
  double total = 0.0;
  for (std::size_t t = 0; t < ref.n_frames(); ++t) {
    double acc = 0.0;
    for (std::size_t m = 0; m < ref.n_mels(); ++m) {
      const double d = ref.grid.at(t, m) - other.grid.at(t, m);
      acc += d * d;
    }
    result.per_frame[t] = std::sqrt(acc);
    total += result.per_frame[t];
  }
  result.utterance_mean = ref.n_frames() ? total / static_cast<double>(ref.n_frames()) : 0.0;
  return result;
}

inline NormalizedHistogram normalized_histogram(const std::vector<double>& values,
                                                std::size_t n_bins, double lo, double hi) {
  if (n_bins < 1) throw std::invalid_argument("normalized_histogram: n_bins must be >= 1");
  if (!(lo < hi)) throw std::invalid_argument("normalized_histogram: require lo < hi");

  NormalizedHistogram h;
  h.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
  h.masses.assign(n_bins, 0.0);

  std::vector<std::size_t> counts(n_bins, 0);
  for (double v : values) {
    if (v < lo || v > hi) {
      ++h.out_of_range;
      continue;
    }
    std::size_t bin = static_cast<std::size_t>((v - lo) / width);
    bin = std::min(bin, n_bins - 1);  // v == hi lands in the last bin
    ++counts[bin];
    ++h.in_range;
  }
  if (h.in_range == 0) {
    h.empty = true;
    return h;
  }
  for (std::size_t i = 0; i < n_bins; ++i)
    h.masses[i] = static_cast<double>(counts[i]) / static_cast<double>(h.in_range);
  return h;
}

struct SweepRow {
  std::size_t l_t = 1;
  std::size_t l_f = 1;
  double mean = 0.0;
  double stddev = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  NormalizedHistogram histogram;            // pooled per-frame MSD
  std::vector<double> per_utterance_means;  // in corpus order
};

struct SweepConfig {
  std::size_t n_bins = 50;
  double hist_lo = 0.0;
  double hist_hi = 25.0;
  // Frames whose reference max mel dB falls below this are excluded. NaN
  // disables the gate.
  double min_energy_db = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}

}  // namespace detail

// Smooths each corpus mel with each size pair and accumulates per-frame MSD
// against the original. Corpus order is the caller's (sort by id upstream for
// deterministic output).
inline std::vector<SweepRow> msd_sweep(const std::vector<MelSpectrogram>& corpus,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                       const SweepConfig& cfg = {}) {
  if (corpus.empty()) throw std::invalid_argument("msd_sweep: empty corpus");

  std::vector<SweepRow> rows;
  rows.reserve(sizes.size());
  for (const auto& [l_t, l_f] : sizes) {
    SweepRow row;
    row.l_t = l_t;
    row.l_f = l_f;
    const augment::TriangularKernel kernel = augment::make_kernel(l_t, l_f);
    std::vector<double> pooled;
    for (const MelSpectrogram& mel : corpus) {
      const MelSpectrogram smoothed = augment::smooth_mel(mel, kernel);
      const MsdResult r = msd(mel, smoothed);
      double utt_sum = 0.0;
      std::size_t utt_n = 0;
      for (std::size_t t = 0; t < r.n_frames(); ++t) {
        if (!std::isnan(cfg.min_energy_db)) {
          double peak = -std::numeric_limits<double>::infinity();
          for (std::size_t m = 0; m < mel.n_mels(); ++m)
            peak = std::max(peak, mel.grid.at(t, m));
          if (peak < cfg.min_energy_db) continue;
        }
        pooled.push_back(r.per_frame[t]);
        utt_sum += r.per_frame[t];
        ++utt_n;
      }
      row.per_utterance_means.push_back(utt_n ? utt_sum / static_cast<double>(utt_n) : 0.0);
    }

    double sum = 0.0;
    for (double v : pooled) sum += v;
    row.mean = pooled.empty() ? 0.0 : sum / static_cast<double>(pooled.size());
    double var = 0.0;
    for (double v : pooled) var += (v - row.mean) * (v - row.mean);
    row.stddev = pooled.empty() ? 0.0 : std::sqrt(var / static_cast<double>(pooled.size()));
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    row.p50 = detail::quantile(sorted, 0.5);
    row.p90 = detail::quantile(sorted, 0.9);
    row.histogram = normalized_histogram(pooled, cfg.n_bins, cfg.hist_lo, cfg.hist_hi);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace melsmooth::metrics
