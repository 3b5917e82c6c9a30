#pragma once

#include <string>

#include "melsmooth/dsp.hpp"
#include "melsmooth/featureset.hpp"
#include "melsmooth/pitch.hpp"

namespace melsmooth::pipeline {

struct ExtractConfig {
  dsp::StftConfig stft;
  dsp::MelConfig mel;
  pitch::PitchConfig pitch;
};

// Full per-utterance feature extraction: mel-spectrogram, pitch track
// aligned to the mel frame grid, interpolated log-F0, 102-dim assembly.
inline featureset::AcousticFeature extract(const Waveform& w, const ExtractConfig& cfg,
                                           std::string utterance_id) {
  const MelSpectrogram mel = dsp::mel_spectrogram(w, cfg.stft, cfg.mel);
  pitch::PitchTrack track = pitch::pyin_track(w, cfg.pitch);
  track = pitch::align_frames(track, mel.n_frames());
  track = pitch::interpolate_f0(track, cfg.pitch.f_min_hz);
  return featureset::assemble(mel, track, std::move(utterance_id));
}

}  // namespace melsmooth::pipeline
