#pragma once

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "melsmooth/common.hpp"
#include "melsmooth/rng.hpp"
#include "melsmooth/wav.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("melsmooth_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline melsmooth::Waveform sine(double freq_hz, double seconds, double amplitude = 0.5,
                                int sample_rate = 24000) {
  melsmooth::Waveform w;
  w.sample_rate_hz = sample_rate;
  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / sample_rate);
  return w;
}

inline melsmooth::Waveform silence(double seconds, int sample_rate = 24000) {
  melsmooth::Waveform w;
  w.sample_rate_hz = sample_rate;
  w.samples.assign(static_cast<std::size_t>(seconds * sample_rate), 0.0);
  return w;
}

inline melsmooth::Waveform white_noise(double seconds, std::uint64_t seed, double amplitude = 0.3,
                                       int sample_rate = 24000) {
  melsmooth::Waveform w;
  w.sample_rate_hz = sample_rate;
  melsmooth::rng::SplitMix64 rng(seed);
  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amplitude * (2.0 * rng.next_double() - 1.0);
  return w;
}

// Harmonic tone with a pitch glide and amplitude envelope, speech-ish enough
// for feature-pipeline tests.
inline melsmooth::Waveform harmonic_voice(double f0_hz, double seconds, std::uint64_t seed,
                                          int sample_rate = 24000) {
  melsmooth::Waveform w;
  w.sample_rate_hz = sample_rate;
  melsmooth::rng::SplitMix64 rng(seed);
  const double glide = 0.05 * (2.0 * rng.next_double() - 1.0);  // up to +-5%
  const std::array<double, 5> harmonic_amp = {1.0, 0.5, 0.3, 0.2, 0.1};
  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  w.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = f0_hz * (1.0 + glide * t / seconds);
    phase += 2.0 * M_PI * f0 / sample_rate;
    const double env = 0.5 * (1.0 + 0.3 * std::sin(2.0 * M_PI * 3.0 * t));
    double s = 0.0;
    for (std::size_t h = 0; h < harmonic_amp.size(); ++h)
      s += harmonic_amp[h] * std::sin(phase * static_cast<double>(h + 1));
    w.samples[i] = 0.25 * env * s + 0.002 * (2.0 * rng.next_double() - 1.0);
  }
  return w;
}

// Deterministic demo corpus: n voiced utterances with varied pitch, plus the
// matching JSON-lines manifest. Returns the manifest path.
inline fs::path write_demo_corpus(const fs::path& dir, std::size_t n = 20) {
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.jsonl";
  std::ofstream out(manifest);
  for (std::size_t i = 0; i < n; ++i) {
    const double f0 = 90.0 + 15.0 * static_cast<double>(i);
    const double seconds = 0.8 + 0.02 * static_cast<double>(i % 5);
    char id[32];
    std::snprintf(id, sizeof(id), "utt%03zu", i);
    const fs::path wav = dir / (std::string(id) + ".wav");
    melsmooth::wav::write_wav(harmonic_voice(f0, seconds, 1000 + i), wav.string());
    out << "{\"id\": \"" << id << "\", \"wav_path\": \"" << wav.string() << "\"}\n";
  }
  return manifest;
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

inline CliResult run_cli(const std::string& cli_path, const std::string& args) {
  const std::string cmd = cli_path + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  CliResult result;
  if (!pipe) return result;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

// Random mel grid with smooth structure, values roughly in mel-dB range.
inline melsmooth::MelSpectrogram random_mel(std::size_t frames, std::size_t mels,
                                            std::uint64_t seed) {
  melsmooth::MelSpectrogram mel;
  mel.grid = melsmooth::Grid(frames, mels);
  melsmooth::rng::SplitMix64 rng(seed);
  for (double& v : mel.grid.values) v = -100.0 + 90.0 * rng.next_double();
  return mel;
}

}  // namespace testsupport
