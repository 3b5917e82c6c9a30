#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "melsmooth/common.hpp"
#include "melsmooth/pitch.hpp"

namespace melsmooth::featureset {

inline constexpr std::size_t kMelDims = 100;
inline constexpr std::size_t kFeatureDims = 102;  // mel | log-F0 | voicing
inline constexpr double kStdFloor = 1e-8;

// T x 102 float32 matrix, row-major. Columns [0,100) mel dB, 100 log-F0,
// 101 voicing flag.
struct AcousticFeature {
  std::uint32_t n_frames = 0;
  std::uint32_t n_dims = kFeatureDims;
  std::vector<float> values;
  std::string utterance_id;

  float& at(std::size_t t, std::size_t d) { return values[t * n_dims + d]; }
  float at(std::size_t t, std::size_t d) const { return values[t * n_dims + d]; }
};

inline AcousticFeature assemble(const MelSpectrogram& mel, const pitch::PitchTrack& track,
                                std::string utterance_id = {}) {
  if (mel.n_frames() != track.n_frames())
    throw std::invalid_argument("assemble: frame count mismatch, mel has " +
                                std::to_string(mel.n_frames()) + " frames, pitch has " +
                                std::to_string(track.n_frames()));
  if (mel.n_mels() != kMelDims)
    throw std::invalid_argument("assemble: expected 100 mel bins, got " +
                                std::to_string(mel.n_mels()));

  AcousticFeature feat;
  feat.n_frames = static_cast<std::uint32_t>(mel.n_frames());
  feat.values.resize(feat.n_frames * kFeatureDims);
  feat.utterance_id = std::move(utterance_id);
  for (std::size_t t = 0; t < mel.n_frames(); ++t) {
    for (std::size_t m = 0; m < kMelDims; ++m)
      feat.at(t, m) = static_cast<float>(mel.grid.at(t, m));
    feat.at(t, 100) = static_cast<float>(track.log_f0[t]);
    feat.at(t, 101) = static_cast<float>(track.voicing[t]);
  }
  return feat;
}

// Streaming mean/variance accumulator (Welford), mergeable via Chan's
// formula so parallel shards reduce to the same result in any fixed order.
struct NormStats {
  std::size_t dims = kFeatureDims;
  std::uint64_t count = 0;
  std::vector<double> mean = std::vector<double>(kFeatureDims, 0.0);
  std::vector<double> m2 = std::vector<double>(kFeatureDims, 0.0);

  void accumulate(const AcousticFeature& feat) {
    if (feat.n_dims != dims)
      throw std::invalid_argument("accumulate_stats: dimension mismatch");
    for (std::size_t t = 0; t < feat.n_frames; ++t) {
      ++count;
      for (std::size_t d = 0; d < dims; ++d) {
        const double x = feat.at(t, d);
        const double delta = x - mean[d];
        mean[d] += delta / static_cast<double>(count);
        m2[d] += delta * (x - mean[d]);
      }
    }
  }

  void merge(const NormStats& other) {
    if (other.dims != dims) throw std::invalid_argument("merge: dimension mismatch");
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count), nb = static_cast<double>(other.count);
    const double n = na + nb;
    for (std::size_t d = 0; d < dims; ++d) {
      const double delta = other.mean[d] - mean[d];
      mean[d] += delta * nb / n;
      m2[d] += other.m2[d] + delta * delta * na * nb / n;
    }
    count += other.count;
  }

  // Population standard deviation, floored.
  std::vector<double> std_dev() const {
    if (count < 2) throw std::runtime_error("stats: need at least 2 frames");
    std::vector<double> s(dims);
    for (std::size_t d = 0; d < dims; ++d)
      s[d] = std::max(std::sqrt(m2[d] / static_cast<double>(count)), kStdFloor);
    return s;
  }
};

// normalize_voicing=false leaves the voicing flag as raw {0,1}.
inline AcousticFeature normalize(const AcousticFeature& feat, const NormStats& stats,
                                 bool normalize_voicing = true) {
  const std::vector<double> sd = stats.std_dev();
  AcousticFeature out = feat;
  const std::size_t last = normalize_voicing ? stats.dims : stats.dims - 1;
  for (std::size_t t = 0; t < feat.n_frames; ++t)
    for (std::size_t d = 0; d < last; ++d)
      out.at(t, d) = static_cast<float>((feat.at(t, d) - stats.mean[d]) / sd[d]);
  return out;
}

inline AcousticFeature denormalize(const AcousticFeature& feat, const NormStats& stats,
                                   bool normalize_voicing = true) {
  const std::vector<double> sd = stats.std_dev();
  AcousticFeature out = feat;
  const std::size_t last = normalize_voicing ? stats.dims : stats.dims - 1;
  for (std::size_t t = 0; t < feat.n_frames; ++t)
    for (std::size_t d = 0; d < last; ++d)
      out.at(t, d) = static_cast<float>(feat.at(t, d) * sd[d] + stats.mean[d]);
  return out;
}

inline void save_stats(const NormStats& stats, const std::string& path) {
  nlohmann::json j;
  j["dims"] = stats.dims;
  j["count"] = stats.count;
  j["mean"] = stats.mean;
  j["std"] = stats.std_dev();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_stats: cannot open " + path);
  out << j.dump(2) << "\n";
}

inline NormStats load_stats(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_stats: cannot open " + path);
  nlohmann::json j;
  in >> j;
  NormStats stats;
  stats.dims = j.at("dims").get<std::size_t>();
  stats.count = j.at("count").get<std::uint64_t>();
  stats.mean = j.at("mean").get<std::vector<double>>();
  const std::vector<double> sd = j.at("std").get<std::vector<double>>();
  if (stats.mean.size() != stats.dims || sd.size() != stats.dims)
    throw std::runtime_error("load_stats: inconsistent dims in " + path);
  // Reconstruct m2 so std_dev() round-trips.
  stats.m2.assign(stats.dims, 0.0);
  for (std::size_t d = 0; d < stats.dims; ++d)
    stats.m2[d] = sd[d] * sd[d] * static_cast<double>(stats.count);
  return stats;
}

// --- AFV1 binary format -----------------------------------------------------
// magic "AFV1" | u32 version=1 | u32 n_frames | u32 n_dims | u8 dtype=0
// (float32 LE) | 3 reserved zero bytes | row-major float32 payload.

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline std::string encode_afv1(const AcousticFeature& feat) {
  if (feat.n_frames == 0)
    throw std::invalid_argument("write_afv1: refusing to write 0-frame feature");
  if (feat.values.size() != static_cast<std::size_t>(feat.n_frames) * feat.n_dims)
    throw std::invalid_argument("write_afv1: payload size does not match header");
  std::string buf;
  buf.reserve(20 + feat.values.size() * 4);
  buf.append("AFV1", 4);
  detail::put_le<std::uint32_t>(buf, 1);
  detail::put_le<std::uint32_t>(buf, feat.n_frames);
  detail::put_le<std::uint32_t>(buf, feat.n_dims);
  buf.push_back(0);  // dtype float32
  buf.append(3, '\0');
  static_assert(sizeof(float) == 4);
  for (float v : feat.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_le<std::uint32_t>(buf, bits);
  }
  return buf;
}

inline AcousticFeature decode_afv1(const std::string& buf, std::string utterance_id = {}) {
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 20) throw std::runtime_error("read_afv1: truncated header");
  if (std::memcmp(p, "AFV1", 4) != 0) throw std::runtime_error("read_afv1: bad magic");
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != 1)
    throw std::runtime_error("read_afv1: unsupported version " + std::to_string(version));
  AcousticFeature feat;
  feat.n_frames = detail::get_le<std::uint32_t>(p + 8);
  feat.n_dims = detail::get_le<std::uint32_t>(p + 12);
  if (p[16] != 0) throw std::runtime_error("read_afv1: unsupported dtype");
  const std::size_t expect = 20 + static_cast<std::size_t>(feat.n_frames) * feat.n_dims * 4;
  if (buf.size() < expect) throw std::runtime_error("read_afv1: truncated payload");
  feat.values.resize(static_cast<std::size_t>(feat.n_frames) * feat.n_dims);
  for (std::size_t i = 0; i < feat.values.size(); ++i) {
    const std::uint32_t bits = detail::get_le<std::uint32_t>(p + 20 + 4 * i);
    std::memcpy(&feat.values[i], &bits, 4);
  }
  feat.utterance_id = std::move(utterance_id);
  return feat;
}

inline void write_afv1(const AcousticFeature& feat, const std::string& path) {
  const std::string buf = encode_afv1(feat);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_afv1: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_afv1: write failed for " + path);
}

inline AcousticFeature read_afv1(const std::string& path, std::string utterance_id = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_afv1: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_afv1(buf, std::move(utterance_id));
}

// Mel columns of a feature, as a MelSpectrogram view copy.
inline MelSpectrogram mel_of(const AcousticFeature& feat) {
  MelSpectrogram mel;
  mel.grid = Grid(feat.n_frames, kMelDims);
  for (std::size_t t = 0; t < feat.n_frames; ++t)
    for (std::size_t m = 0; m < kMelDims; ++m) mel.grid.at(t, m) = feat.at(t, m);
  return mel;
}

}  // namespace melsmooth::featureset
