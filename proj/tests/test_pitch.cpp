#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "melsmooth/dsp.hpp"
#include "melsmooth/pitch.hpp"
#include "support.hpp"

using namespace melsmooth;

namespace {

std::vector<double> frame_at(const Waveform& w, std::size_t center, int window) {
  std::vector<double> frame(static_cast<std::size_t>(window));
  const long long len = static_cast<long long>(w.samples.size());
  for (long long k = 0; k < window; ++k)
    frame[static_cast<std::size_t>(k)] =
        w.samples[dsp::detail::mirror_index(static_cast<long long>(center) - window / 2 + k, len)];
  return frame;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? 0.0 : v[v.size() / 2];
}

}  // namespace

TEST_CASE("yin_cmnd") {
  pitch::PitchConfig cfg;

  SECTION("pure periodic frame has its CMND minimum at the period") {
    const double f0 = 200.0;  // period 120 samples
    const Waveform w = testsupport::sine(f0, 0.5);
    const auto frame = frame_at(w, 6000, cfg.yin_window);
    const auto curve = pitch::yin_cmnd(frame, cfg, 24000);
    CHECK_FALSE(curve.degenerate);
    // Brute-force oracle: period from the raw autocorrelation peak. The
    // search stops below 1.5 periods so the peak at 2P is not picked.
    const std::size_t n = frame.size() - curve.lag_max;
    std::size_t ac_peak = curve.lag_min;
    double best = -1.0;
    for (std::size_t tau = curve.lag_min; tau <= 180; ++tau) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += frame[j] * frame[j + tau];
      if (acc > best) {
        best = acc;
        ac_peak = tau;
      }
    }
    std::size_t cmnd_min = curve.lag_min;
    for (std::size_t tau = curve.lag_min; tau <= curve.lag_max; ++tau)
      if (curve.values[tau] < curve.values[cmnd_min]) cmnd_min = tau;
    CHECK(std::abs(static_cast<long long>(cmnd_min) - static_cast<long long>(ac_peak)) <= 1);
    CHECK(std::abs(static_cast<double>(cmnd_min) - 120.0) <= 1.0);
  }
  SECTION("conventions: d'(0)=1 and non-negative values") {
    const auto frame = frame_at(testsupport::white_noise(0.5, 3), 6000, cfg.yin_window);
    const auto curve = pitch::yin_cmnd(frame, cfg, 24000);
    CHECK(curve.values[0] == 1.0);
    for (double v : curve.values) CHECK(v >= 0.0);
    CHECK(curve.lag_min == 40);
    CHECK(curve.lag_max == 480);
  }
  SECTION("all-zero frame is degenerate") {
    const std::vector<double> frame(static_cast<std::size_t>(cfg.yin_window), 0.0);
    CHECK(pitch::yin_cmnd(frame, cfg, 24000).degenerate);
  }
  SECTION("white-noise frame has a high CMND floor (frozen seed)") {
    const auto frame = frame_at(testsupport::white_noise(0.5, 424242), 6000, cfg.yin_window);
    const auto curve = pitch::yin_cmnd(frame, cfg, 24000);
    double min_val = 1e9;
    for (std::size_t tau = curve.lag_min; tau <= curve.lag_max; ++tau)
      min_val = std::min(min_val, curve.values[tau]);
    CHECK(min_val > 0.3);
  }
  SECTION("wrong frame length rejected") {
    CHECK_THROWS_AS(pitch::yin_cmnd(std::vector<double>(100, 0.1), cfg, 24000),
                    std::invalid_argument);
  }
}

TEST_CASE("monotone threshold behavior pre-Viterbi") {
  pitch::PitchConfig cfg;
  const Waveform w = testsupport::harmonic_voice(150.0, 0.5, 77);
  int fired_low = 0, fired_high = 0;
  for (std::size_t center = 0; center < w.samples.size(); center += 2048) {
    const auto curve = pitch::yin_cmnd(frame_at(w, center, cfg.yin_window), cfg, 24000);
    pitch::PitchConfig low = cfg, high = cfg;
    for (double& t : low.thresholds) t = std::min(0.99, t + 0.0);  // original
    for (double& t : high.thresholds) t = std::min(0.99, t + 0.3);
    double v_low = 0.0, v_high = 0.0;
    pitch::frame_candidates(curve, low, 24000, &v_low);
    pitch::frame_candidates(curve, high, 24000, &v_high);
    if (v_low > 0.0) ++fired_low;
    if (v_high > 0.0) ++fired_high;
  }
  // Raising every threshold can only make more frames fire.
  CHECK(fired_high >= fired_low);
}

TEST_CASE("pyin_track") {
  pitch::PitchConfig cfg;

  SECTION("2 s sine at 220 Hz") {
    const Waveform w = testsupport::sine(220.0, 2.0);
    const auto track = pitch::pyin_track(w, cfg);
    REQUIRE(track.n_frames() == w.samples.size() / 256 + 1);
    std::vector<double> voiced_f0;
    std::size_t interior = 0, voiced = 0;
    for (std::size_t t = 4; t + 4 < track.n_frames(); ++t) {
      ++interior;
      if (track.voicing[t] == 1.0) {
        ++voiced;
        voiced_f0.push_back(track.f0_hz[t]);
      }
    }
    CHECK(static_cast<double>(voiced) / static_cast<double>(interior) >= 0.9);
    CHECK(median(voiced_f0) == Catch::Approx(220.0).epsilon(0.01));
  }
  SECTION("digital silence is fully unvoiced") {
    const auto track = pitch::pyin_track(testsupport::silence(0.5), cfg);
    for (double v : track.voicing) CHECK(v == 0.0);
  }
  SECTION("white noise is essentially unvoiced") {
    const auto track = pitch::pyin_track(testsupport::white_noise(1.0, 55), cfg);
    std::size_t unvoiced = 0;
    for (double v : track.voicing)
      if (v == 0.0) ++unvoiced;
    CHECK(static_cast<double>(unvoiced) / static_cast<double>(track.n_frames()) >= 0.99);
  }
  SECTION("octave sanity across 80-400 Hz tones") {
    for (double f0 : {80.0, 150.0, 250.0, 400.0}) {
      const auto track = pitch::pyin_track(testsupport::sine(f0, 0.8), cfg);
      std::size_t voiced = 0, good = 0;
      for (std::size_t t = 4; t + 4 < track.n_frames(); ++t) {
        if (track.voicing[t] != 1.0) continue;
        ++voiced;
        if (std::abs(track.f0_hz[t] - f0) / f0 <= 0.03) ++good;
      }
      INFO("f0=" << f0);
      REQUIRE(voiced > 0);
      CHECK(static_cast<double>(good) / static_cast<double>(voiced) >= 0.95);
    }
  }
  SECTION("sine with a silent gap: unvoiced inside, log-F0 interpolated across") {
    Waveform w = testsupport::sine(220.0, 1.5);
    const std::size_t gap_lo = 12000, gap_hi = 24000;  // 0.5 s gap
    for (std::size_t i = gap_lo; i < gap_hi; ++i) w.samples[i] = 0.0;
    auto track = pitch::pyin_track(w, cfg);
    std::size_t gap_voiced = 0, gap_frames = 0;
    for (std::size_t t = (gap_lo + 2048) / 256; t < (gap_hi - 2048) / 256; ++t) {
      ++gap_frames;
      if (track.voicing[t] == 1.0) ++gap_voiced;
    }
    REQUIRE(gap_frames > 0);
    CHECK(gap_voiced == 0);
    const auto filled = pitch::interpolate_f0(track);
    for (std::size_t t = (gap_lo + 2048) / 256; t < (gap_hi - 2048) / 256; ++t) {
      CHECK(filled.voicing[t] == 0.0);
      CHECK(filled.log_f0[t] == Catch::Approx(std::log(220.0)).margin(0.05));
    }
  }
}

TEST_CASE("interpolate_f0") {
  SECTION("closed-form interior fill") {
    pitch::PitchTrack t;
    t.f0_hz = {100.0, 0.0, 0.0, 200.0};
    t.log_f0 = {std::log(100.0), 0.0, 0.0, std::log(200.0)};
    t.voicing = {1.0, 0.0, 0.0, 1.0};
    const auto out = pitch::interpolate_f0(t);
    const double step = (std::log(200.0) - std::log(100.0)) / 3.0;
    CHECK(out.log_f0[1] == Catch::Approx(std::log(100.0) + step).margin(1e-12));
    CHECK(out.log_f0[2] == Catch::Approx(std::log(100.0) + 2.0 * step).margin(1e-12));
    CHECK(out.voicing == t.voicing);
  }
  SECTION("fully voiced track is unchanged") {
    pitch::PitchTrack t;
    t.f0_hz = {110.0, 120.0};
    t.log_f0 = {std::log(110.0), std::log(120.0)};
    t.voicing = {1.0, 1.0};
    CHECK(pitch::interpolate_f0(t).log_f0 == t.log_f0);
  }
  SECTION("fully unvoiced falls back to log(f_min) with a warning") {
    pitch::PitchTrack t;
    t.f0_hz = {0.0, 0.0, 0.0};
    t.log_f0 = {0.0, 0.0, 0.0};
    t.voicing = {0.0, 0.0, 0.0};
    const auto out = pitch::interpolate_f0(t, 50.0);
    CHECK(out.interpolation_warning);
    for (double v : out.log_f0) CHECK(v == Catch::Approx(std::log(50.0)).margin(1e-12));
  }
  SECTION("edge gaps hold the nearest voiced value") {
    pitch::PitchTrack t;
    t.f0_hz = {0.0, 150.0, 0.0};
    t.log_f0 = {0.0, std::log(150.0), 0.0};
    t.voicing = {0.0, 1.0, 0.0};
    const auto out = pitch::interpolate_f0(t);
    CHECK(out.log_f0[0] == Catch::Approx(std::log(150.0)).margin(1e-12));
    CHECK(out.log_f0[2] == Catch::Approx(std::log(150.0)).margin(1e-12));
  }
}

TEST_CASE("frame alignment with mel grid") {
  const Waveform w = testsupport::harmonic_voice(180.0, 0.63, 8);
  const auto mel = dsp::mel_spectrogram(w, dsp::StftConfig{}, dsp::MelConfig{});
  auto track = pitch::pyin_track(w, pitch::PitchConfig{});
  track = pitch::align_frames(track, mel.n_frames());
  CHECK(track.n_frames() == mel.n_frames());
}
