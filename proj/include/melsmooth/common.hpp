#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace melsmooth {

// Row-major T x F grid of doubles. Used for mel-spectrograms and other
// per-frame matrices throughout the library.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 24000;
};

// Mel-spectrogram in dB, frames as rows.
struct MelSpectrogram {
  Grid grid;  // n_frames x n_mels

  std::size_t n_frames() const { return grid.rows; }
  std::size_t n_mels() const { return grid.cols; }
};

}  // namespace melsmooth
