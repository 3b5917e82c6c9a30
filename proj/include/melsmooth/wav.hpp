#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "melsmooth/common.hpp"

namespace melsmooth::wav {

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Reads a mono 16-bit PCM RIFF/WAVE file. The expected sample rate is
// enforced; resampling is out of scope.
inline Waveform read_wav(const std::string& path, int expected_rate_hz = 24000) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  int channels = 0, bits = 0, rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t off = 12;
  while (off + 8 <= data.size()) {
    const std::size_t chunk_len = detail::read_u32(p + off + 4);
    const std::size_t body = off + 8;
    if (std::memcmp(p + off, "fmt ", 4) == 0 && body + 16 <= data.size()) {
      const int format = detail::read_u16(p + body);
      if (format != 1) throw std::runtime_error("read_wav: only PCM supported: " + path);
      channels = detail::read_u16(p + body + 2);
      rate = static_cast<int>(detail::read_u32(p + body + 4));
      bits = detail::read_u16(p + body + 14);
    } else if (std::memcmp(p + off, "data", 4) == 0) {
      data_off = body;
      data_len = std::min(chunk_len, data.size() - body);
    }
    off = body + chunk_len + (chunk_len & 1);
  }
  if (channels == 0 || data_off == 0) throw std::runtime_error("read_wav: missing fmt/data chunk: " + path);
  if (channels != 1) throw std::runtime_error("read_wav: channels " + std::to_string(channels) + " != 1");
  if (bits != 16) throw std::runtime_error("read_wav: bit depth " + std::to_string(bits) + " != 16");
  if (rate != expected_rate_hz)
    throw std::runtime_error("read_wav: sample rate " + std::to_string(rate) +
                             " != " + std::to_string(expected_rate_hz));

  Waveform w;
  w.sample_rate_hz = rate;
  const std::size_t n = data_len / 2;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(detail::read_u16(p + data_off + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

inline void write_wav(const Waveform& w, const std::string& path) {
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  std::string buf;
  buf.reserve(44 + data_bytes);
  auto put_u32 = [&buf](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto put_u16 = [&buf](std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  buf.append("RIFF", 4);
  put_u32(36 + data_bytes);
  buf.append("WAVEfmt ", 8);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(w.sample_rate_hz));
  put_u32(static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  put_u16(2);
  put_u16(16);
  buf.append("data", 4);
  put_u32(data_bytes);
  for (double s : w.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
    put_u16(static_cast<std::uint16_t>(q));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace melsmooth::wav
