#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "melsmooth/common.hpp"
#include "melsmooth/featureset.hpp"
#include "melsmooth/rng.hpp"

namespace melsmooth::augment {

// Separable l_t x l_f triangular low-pass kernel, unit mass.
struct TriangularKernel {
  std::size_t l_t = 1;
  std::size_t l_f = 1;
  std::vector<double> time_profile;
  std::vector<double> freq_profile;

  double weight(std::size_t t, std::size_t f) const {
    return time_profile[t] * freq_profile[f];
  }
};

// p(l; N): mass p_g at l=1, mass p_s at each of {3, 5, ..., 2N-1}.
struct FilterSizeDistribution {
  std::size_t n_candidates = 1;
  double p_g = 1.0;
  double p_s = 0.0;

  // Derives p_s from the unit-mass constraint p_g + (N-1)*p_s = 1.
  static FilterSizeDistribution from_pg(std::size_t n_candidates, double p_g) {
    if (n_candidates < 1)
      throw std::invalid_argument("filter size distribution: need at least one candidate");
    FilterSizeDistribution d;
    d.n_candidates = n_candidates;
    if (n_candidates == 1) {
      d.p_g = 1.0;
      d.p_s = 0.0;
      return d;
    }
    if (p_g < 0.0 || p_g > 1.0)
      throw std::invalid_argument("filter size distribution: p_g must lie in [0,1]");
    d.p_g = p_g;
    d.p_s = (1.0 - p_g) / static_cast<double>(n_candidates - 1);
    return d;
  }
};

struct SmoothingPolicy {
  std::size_t n_t = 6;
  std::size_t n_f = 3;
  double p_g = 2.0 / 3.0;
  double augment_start_fraction = 0.75;
  std::uint64_t base_seed = 0;
  // Draw one size pair per step instead of per (step, utterance).
  bool per_step_only = false;
  // Smooth in linear amplitude instead of the stored dB values.
  bool linear_domain = false;
};

// One separable factor of the triangular kernel:
// w[t] = (ceil(l/2) - |t - ceil(l/2)|) / ceil(l/2)^2 for t = 1..l.
inline std::vector<double> triangular_profile(std::size_t l) {
  if (l == 0 || l % 2 == 0)
    throw std::invalid_argument("triangular_profile: size must be odd and positive, got " +
                                std::to_string(l));
  const double c = std::ceil(static_cast<double>(l) / 2.0);
  std::vector<double> w(l);
  for (std::size_t t = 1; t <= l; ++t)
    w[t - 1] = (c - std::abs(static_cast<double>(t) - c)) / (c * c);
  return w;
}

inline TriangularKernel make_kernel(std::size_t l_t, std::size_t l_f) {
  TriangularKernel k;
  k.l_t = l_t;
  k.l_f = l_f;
  k.time_profile = triangular_profile(l_t);
  k.freq_profile = triangular_profile(l_f);
  return k;
}

// Draws an odd size from {1, 3, ..., 2N-1}: 1 with probability p_g, each
// smoothing size with probability p_s. Consumes one value from rng.
inline std::size_t sample_size(const FilterSizeDistribution& dist, rng::SplitMix64& rng) {
  const double u = rng.next_double();
  if (dist.n_candidates == 1 || u < dist.p_g) return 1;
  std::size_t idx =
      dist.p_s > 0.0 ? static_cast<std::size_t>((u - dist.p_g) / dist.p_s) : 0;
  idx = std::min(idx, dist.n_candidates - 2);
  return 3 + 2 * idx;
}

namespace detail {

// 1-D correlation along one axis with edge-replicate padding.
inline Grid smooth_axis(const Grid& in, const std::vector<double>& profile, bool along_rows) {
  const std::size_t l = profile.size();
  if (l == 1) return in;
  const long long half = static_cast<long long>(l) / 2;
  Grid out(in.rows, in.cols);
  const long long n = static_cast<long long>(along_rows ? in.rows : in.cols);
  auto clampi = [n](long long i) {
    return static_cast<std::size_t>(std::clamp<long long>(i, 0, n - 1));
  };
  for (std::size_t r = 0; r < in.rows; ++r) {
    for (std::size_t c = 0; c < in.cols; ++c) {
      const long long center = static_cast<long long>(along_rows ? r : c);
      double acc = 0.0;
      for (std::size_t k = 0; k < l; ++k) {
        const std::size_t i = clampi(center - half + static_cast<long long>(k));
        acc += profile[k] * (along_rows ? in.at(i, c) : in.at(r, i));
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

// 2-D correlation of the mel grid with the kernel, edge-replicate padding,
// computed as two sequential 1-D passes. Identity kernel is bit-exact
// pass-through.
inline MelSpectrogram smooth_mel(const MelSpectrogram& mel, const TriangularKernel& kernel) {
  if (mel.n_frames() == 0 || mel.n_mels() == 0)
    throw std::invalid_argument("smooth_mel: empty mel-spectrogram");
  if (kernel.l_t > 2 * mel.n_frames() + 1)
    throw std::invalid_argument("smooth_mel: kernel time size " + std::to_string(kernel.l_t) +
                                " exceeds 2*T+1 for T=" + std::to_string(mel.n_frames()));
  if (kernel.l_f > 2 * mel.n_mels() + 1)
    throw std::invalid_argument("smooth_mel: kernel frequency size " +
                                std::to_string(kernel.l_f) + " exceeds 2*F+1 for F=" +
                                std::to_string(mel.n_mels()));
  MelSpectrogram out;
  out.grid = detail::smooth_axis(detail::smooth_axis(mel.grid, kernel.time_profile, true),
                                 kernel.freq_profile, false);
  return out;
}

struct AugmentResult {
  featureset::AcousticFeature feature;
  std::size_t l_t = 1;
  std::size_t l_f = 1;
};

// Schedule-aware augmentation hook. Before the start fraction of training the
// input passes through unchanged; afterwards l_t and l_f are drawn
// independently from a stream seeded by (base_seed, step, utterance_id) and
// only the 100 mel columns are smoothed.
inline AugmentResult augment_step(const featureset::AcousticFeature& feat,
                                  const SmoothingPolicy& policy, std::uint64_t step,
                                  std::uint64_t total_steps,
                                  const std::string& utterance_id) {
  if (step >= total_steps)
    throw std::invalid_argument("augment_step: step must be < total_steps");

  AugmentResult result;
  result.feature = feat;
  if (static_cast<double>(step) <
      policy.augment_start_fraction * static_cast<double>(total_steps))
    return result;

  rng::SplitMix64 stream(rng::mix_seed(policy.base_seed, step,
                                       policy.per_step_only ? std::string_view{}
                                                            : std::string_view(utterance_id)));
  const auto dist_t = FilterSizeDistribution::from_pg(policy.n_t, policy.p_g);
  const auto dist_f = FilterSizeDistribution::from_pg(policy.n_f, policy.p_g);
  result.l_t = sample_size(dist_t, stream);
  result.l_f = sample_size(dist_f, stream);
  if (result.l_t == 1 && result.l_f == 1) return result;

  MelSpectrogram mel = featureset::mel_of(feat);
  if (policy.linear_domain)
    for (double& v : mel.grid.values) v = std::pow(10.0, v / 20.0);
  MelSpectrogram smoothed = smooth_mel(mel, make_kernel(result.l_t, result.l_f));
  if (policy.linear_domain)
    for (double& v : smoothed.grid.values) v = 20.0 * std::log10(std::max(v, 1e-12));
  for (std::size_t t = 0; t < feat.n_frames; ++t)
    for (std::size_t m = 0; m < featureset::kMelDims; ++m)
      result.feature.at(t, m) = static_cast<float>(smoothed.grid.at(t, m));
  return result;
}

}  // namespace melsmooth::augment
