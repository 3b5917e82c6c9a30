#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "melsmooth/common.hpp"
#include "melsmooth/dsp.hpp"

namespace melsmooth::pitch {

struct PitchConfig {
  double f_min_hz = 50.0;
  double f_max_hz = 600.0;
  int yin_window = 2048;
  int hop_length = 256;
  std::vector<double> thresholds = default_thresholds();
  double switch_prob = 0.01;
  // Viterbi pitch grid resolution and transition spread, in cents.
  double cents_per_state = 10.0;
  double transition_sigma_cents = 100.0;
  double max_jump_cents = 600.0;

  static std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 19; ++i) t.push_back(0.05 * i);
    return t;
  }
};

struct PitchTrack {
  std::vector<double> f0_hz;    // 0 when unvoiced
  std::vector<double> log_f0;   // natural log; filled across gaps by interpolate_f0
  std::vector<double> voicing;  // 0.0 or 1.0
  bool interpolation_warning = false;

  std::size_t n_frames() const { return f0_hz.size(); }
};

struct CmndCurve {
  std::vector<double> values;  // indexed by lag, values[0] == 1
  std::size_t lag_min = 0;
  std::size_t lag_max = 0;
  bool degenerate = false;
};

namespace detail {

inline void validate(const PitchConfig& cfg, int sample_rate) {
  if (cfg.f_min_hz <= 0.0 || cfg.f_min_hz >= cfg.f_max_hz ||
      cfg.f_max_hz > sample_rate / 2.0)
    throw std::invalid_argument("pitch config: require 0 < f_min < f_max <= sample_rate/2");
  if (cfg.yin_window <= 2.0 * sample_rate / cfg.f_max_hz)
    throw std::invalid_argument("pitch config: yin_window must exceed 2*sample_rate/f_max");
  if (cfg.hop_length <= 0) throw std::invalid_argument("pitch config: hop_length must be positive");
  for (double t : cfg.thresholds)
    if (t <= 0.0 || t >= 1.0)
      throw std::invalid_argument("pitch config: thresholds must lie in (0,1)");
}

// Beta(2, 18) prior over YIN thresholds, normalized across the threshold list.
inline std::vector<double> threshold_prior(const std::vector<double>& thresholds) {
  std::vector<double> w(thresholds.size());
  double total = 0.0;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    w[i] = t * std::pow(1.0 - t, 17.0);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

struct Candidate {
  double f0_hz = 0.0;
  double prob = 0.0;
};

// Parabolic refinement of a CMND trough at integer lag tau.
inline double refine_lag(const std::vector<double>& d, std::size_t tau) {
  if (tau == 0 || tau + 1 >= d.size()) return static_cast<double>(tau);
  const double a = d[tau - 1], b = d[tau], c = d[tau + 1];
  const double denom = a - 2.0 * b + c;
  if (denom <= 0.0) return static_cast<double>(tau);
  const double shift = 0.5 * (a - c) / denom;
  return static_cast<double>(tau) + std::clamp(shift, -0.5, 0.5);
}

}  // namespace detail

// Cumulative mean normalized difference of one analysis frame. The difference
// function uses a fixed integration window so every lag sums the same number
// of terms.
inline CmndCurve yin_cmnd(const std::vector<double>& frame, const PitchConfig& cfg,
                          int sample_rate) {
  detail::validate(cfg, sample_rate);
  if (frame.size() != static_cast<std::size_t>(cfg.yin_window))
    throw std::invalid_argument("yin_cmnd: frame length must equal yin_window");

  CmndCurve curve;
  curve.lag_min = static_cast<std::size_t>(std::floor(sample_rate / cfg.f_max_hz));
  curve.lag_max = static_cast<std::size_t>(std::ceil(sample_rate / cfg.f_min_hz));
  if (curve.lag_max + 1 >= frame.size())
    throw std::invalid_argument("yin_cmnd: yin_window too short for f_min");

  double energy = 0.0;
  for (double s : frame) energy += s * s;
  if (energy < 1e-12) {
    curve.degenerate = true;
    curve.values.assign(curve.lag_max + 1, 1.0);
    curve.values[0] = 1.0;
    return curve;
  }

  const std::size_t n = frame.size() - curve.lag_max;  // integration length
  std::vector<double> diff(curve.lag_max + 1, 0.0);
  for (std::size_t tau = 1; tau <= curve.lag_max; ++tau) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = frame[j] - frame[j + tau];
      acc += d * d;
    }
    diff[tau] = acc;
  }

  curve.values.assign(curve.lag_max + 1, 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau <= curve.lag_max; ++tau) {
    running += diff[tau];
    curve.values[tau] =
        running > 0.0 ? diff[tau] * static_cast<double>(tau) / running : 1.0;
  }
  return curve;
}

// Multi-threshold candidate extraction for one frame. Each threshold selects
// the first CMND trough below it (YIN rule) and contributes its prior mass to
// that candidate; thresholds with no trough below them contribute to the
// unvoiced mass.
inline std::vector<detail::Candidate> frame_candidates(const CmndCurve& curve,
                                                       const PitchConfig& cfg,
                                                       int sample_rate,
                                                       double* voiced_prob_out = nullptr) {
  std::vector<detail::Candidate> candidates;
  double voiced_prob = 0.0;
  if (!curve.degenerate) {
    // Troughs of the CMND curve inside the lag search range.
    struct Trough {
      std::size_t lag;
      double value;
    };
    std::vector<Trough> troughs;
    for (std::size_t tau = std::max<std::size_t>(curve.lag_min, 2);
         tau + 1 <= curve.lag_max; ++tau) {
      if (curve.values[tau] < curve.values[tau - 1] &&
          curve.values[tau] <= curve.values[tau + 1])
        troughs.push_back({tau, curve.values[tau]});
    }
    const std::vector<double> prior = detail::threshold_prior(cfg.thresholds);
    for (std::size_t i = 0; i < cfg.thresholds.size(); ++i) {
      const Trough* pick = nullptr;
      for (const Trough& t : troughs)
        if (t.value < cfg.thresholds[i]) {
          pick = &t;
          break;
        }
      if (!pick) continue;
      const double lag = detail::refine_lag(curve.values, pick->lag);
      const double f0 = sample_rate / lag;
      if (f0 < cfg.f_min_hz || f0 > cfg.f_max_hz) continue;
      voiced_prob += prior[i];
      bool merged = false;
      for (auto& c : candidates)
        if (std::abs(c.f0_hz - f0) < 1e-9) {
          c.prob += prior[i];
          merged = true;
          break;
        }
      if (!merged) candidates.push_back({f0, prior[i]});
    }
  }
  if (voiced_prob_out) *voiced_prob_out = voiced_prob;
  return candidates;
}

// Viterbi decode over a 10-cent pitch grid plus one unvoiced state.
inline PitchTrack pyin_track(const Waveform& w, const PitchConfig& cfg) {
  detail::validate(cfg, w.sample_rate_hz);
  if (w.samples.empty()) throw std::invalid_argument("pyin_track: empty waveform");

  const long long len = static_cast<long long>(w.samples.size());
  const std::size_t n_frames = static_cast<std::size_t>(len / cfg.hop_length) + 1;
  const long long half = cfg.yin_window / 2;

  const int n_pitch = static_cast<int>(std::floor(
                          1200.0 * std::log2(cfg.f_max_hz / cfg.f_min_hz) /
                          cfg.cents_per_state)) +
                      1;
  const int unvoiced = n_pitch;  // extra state index
  const int n_states = n_pitch + 1;
  auto state_freq = [&](int i) {
    return cfg.f_min_hz * std::pow(2.0, i * cfg.cents_per_state / 1200.0);
  };
  auto freq_state = [&](double f) {
    const int i = static_cast<int>(std::lround(1200.0 * std::log2(f / cfg.f_min_hz) /
                                               cfg.cents_per_state));
    return std::clamp(i, 0, n_pitch - 1);
  };

  // Per-frame observations.
  std::vector<std::vector<double>> obs(n_frames, std::vector<double>(n_states, 0.0));
  std::vector<std::vector<double>> state_f0(n_frames, std::vector<double>(n_pitch, 0.0));
  std::vector<double> frame(static_cast<std::size_t>(cfg.yin_window));
  for (std::size_t t = 0; t < n_frames; ++t) {
    const long long center = static_cast<long long>(t) * cfg.hop_length;
    for (long long k = 0; k < cfg.yin_window; ++k)
      frame[static_cast<std::size_t>(k)] =
          w.samples[dsp::detail::mirror_index(center - half + k, len)];
    const CmndCurve curve = yin_cmnd(frame, cfg, w.sample_rate_hz);
    double voiced_prob = 0.0;
    for (const auto& c : frame_candidates(curve, cfg, w.sample_rate_hz, &voiced_prob)) {
      const int s = freq_state(c.f0_hz);
      obs[t][s] += c.prob;
      if (state_f0[t][s] == 0.0) state_f0[t][s] = c.f0_hz;
    }
    obs[t][unvoiced] = std::max(1.0 - voiced_prob, 1e-4);
  }

  // Transition weights by state distance, truncated at max_jump_cents.
  const int max_jump = std::max(1, static_cast<int>(cfg.max_jump_cents / cfg.cents_per_state));
  std::vector<double> log_jump(static_cast<std::size_t>(max_jump) + 1);
  {
    double total = 0.0;
    std::vector<double> jump(log_jump.size());
    for (std::size_t d = 0; d < jump.size(); ++d) {
      const double cents = static_cast<double>(d) * cfg.cents_per_state;
      jump[d] = std::exp(-cents / cfg.transition_sigma_cents);
      total += (d == 0 ? 1.0 : 2.0) * jump[d];
    }
    for (std::size_t d = 0; d < jump.size(); ++d) log_jump[d] = std::log(jump[d] / total);
  }
  const double log_stay = std::log(1.0 - cfg.switch_prob);
  const double log_switch = std::log(cfg.switch_prob);
  const double log_enter = log_switch - std::log(static_cast<double>(n_pitch));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto log_obs = [](double p) { return std::log(std::max(p, 1e-12)); };

  std::vector<double> delta(n_states), next(n_states);
  std::vector<std::vector<int>> back(n_frames, std::vector<int>(n_states, -1));
  for (int s = 0; s < n_states; ++s)
    delta[s] = log_obs(obs[0][s]) + (s == unvoiced ? std::log(0.5)
                                                   : std::log(0.5 / n_pitch));
  for (std::size_t t = 1; t < n_frames; ++t) {
    for (int s = 0; s < n_states; ++s) {
      double best = neg_inf;
      int arg = -1;
      if (s == unvoiced) {
        // From unvoiced: stay. From any voiced state: switch out.
        best = delta[unvoiced] + log_stay;
        arg = unvoiced;
        for (int j = 0; j < n_pitch; ++j) {
          const double v = delta[j] + log_switch;
          if (v > best) {
            best = v;
            arg = j;
          }
        }
      } else {
        const int lo = std::max(0, s - max_jump);
        const int hi = std::min(n_pitch - 1, s + max_jump);
        for (int j = lo; j <= hi; ++j) {
          const double v = delta[j] + log_stay + log_jump[static_cast<std::size_t>(std::abs(s - j))];
          if (v > best) {
            best = v;
            arg = j;
          }
        }
        const double v = delta[unvoiced] + log_enter;
        if (v > best) {
          best = v;
          arg = unvoiced;
        }
      }
      next[s] = best + log_obs(obs[t][s]);
      back[t][s] = arg;
    }
    delta.swap(next);
  }

  // Backtrace.
  std::vector<int> path(n_frames);
  path[n_frames - 1] = static_cast<int>(
      std::max_element(delta.begin(), delta.end()) - delta.begin());
  for (std::size_t t = n_frames - 1; t > 0; --t) path[t - 1] = back[t][path[t]];

  PitchTrack track;
  track.f0_hz.resize(n_frames, 0.0);
  track.log_f0.resize(n_frames, 0.0);
  track.voicing.resize(n_frames, 0.0);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const int s = path[t];
    if (s != unvoiced && obs[t][s] > 0.0) {
      const double f0 = state_f0[t][s] > 0.0 ? state_f0[t][s] : state_freq(s);
      track.f0_hz[t] = f0;
      track.log_f0[t] = std::log(f0);
      track.voicing[t] = 1.0;
    }
  }
  return track;
}

// Piecewise-linear fill of log-F0 across unvoiced gaps; edge gaps hold the
// nearest voiced value. A track with no voiced frame falls back to log(f_min)
// and sets interpolation_warning.
inline PitchTrack interpolate_f0(const PitchTrack& track, double f_min_hz = 50.0) {
  PitchTrack out = track;
  const std::size_t n = track.n_frames();
  std::vector<std::size_t> voiced;
  for (std::size_t t = 0; t < n; ++t)
    if (track.voicing[t] == 1.0) voiced.push_back(t);

  if (voiced.empty()) {
    std::fill(out.log_f0.begin(), out.log_f0.end(), std::log(f_min_hz));
    out.interpolation_warning = true;
    return out;
  }

  for (std::size_t t = 0; t < voiced.front(); ++t)
    out.log_f0[t] = track.log_f0[voiced.front()];
  for (std::size_t t = voiced.back() + 1; t < n; ++t)
    out.log_f0[t] = track.log_f0[voiced.back()];
  for (std::size_t i = 0; i + 1 < voiced.size(); ++i) {
    const std::size_t a = voiced[i], b = voiced[i + 1];
    const double ya = track.log_f0[a], yb = track.log_f0[b];
    for (std::size_t t = a + 1; t < b; ++t)
      out.log_f0[t] =
          ya + (yb - ya) * static_cast<double>(t - a) / static_cast<double>(b - a);
  }
  return out;
}

// Truncate or edge-pad a track to the mel frame count.
inline PitchTrack align_frames(const PitchTrack& track, std::size_t n_frames) {
  PitchTrack out = track;
  const auto resize_hold = [n_frames](std::vector<double>& v, double fallback) {
    const double last = v.empty() ? fallback : v.back();
    v.resize(n_frames, last);
  };
  resize_hold(out.f0_hz, 0.0);
  resize_hold(out.log_f0, 0.0);
  resize_hold(out.voicing, 0.0);
  return out;
}

}  // namespace melsmooth::pitch
