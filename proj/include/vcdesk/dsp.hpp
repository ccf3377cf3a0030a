// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_DSP_HPP_
#define VCDESK_DSP_HPP_

#include <complex>
#include <string>
#include <vector>

#include "vcdesk/common.hpp"

namespace vcdesk::dsp {

struct FeatureConfig {
  int sample_rate = 16000;
  int fft_size = 512;  // must be a power of two
  int hop = 160;
  int win_length = 400;
  std::string window = "hann";
  int n_mels = 80;
  double fmin = 80.0;
  double fmax = 7600.0;
  double log_floor = 1e-10;

  void Validate() const;
  // Canonical digest covering every field plus the mel formula and log base,
  // so features from mismatched configs can never be mixed.
  std::string Digest() const;
};

// Complex STFT, frames x (fft_size/2 + 1).
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<std::complex<double>> values;  // row-major
  std::string config_digest;

  std::complex<double>& at(int t, int k) { return values[size_t(t) * bins + k]; }
  const std::complex<double>& at(int t, int k) const {
    return values[size_t(t) * bins + k];
  }
};

// Natural-log mel power spectrogram, frames x n_mels.
struct MelSpectrogram {
  int frames = 0;
  int n_mels = 0;
  std::vector<float> values;  // row-major
  std::string config_digest;

  float& at(int t, int m) { return values[size_t(t) * n_mels + m]; }
  float at(int t, int m) const { return values[size_t(t) * n_mels + m]; }
};

// In-place iterative radix-2 FFT (inverse divides by n). n must be a power of 2.
void Fft(std::vector<std::complex<double>>& a, bool inverse);

// Centered frames with reflection padding; frame count = ceil(len / hop).
Spectrogram Stft(const Waveform& w, const FeatureConfig& cfg);

// Overlap-add inverse with window-square normalization. `length` < 0 means
// frames * hop. Rejects spectrograms produced under a different config.
Waveform Istft(const Spectrogram& spec, const FeatureConfig& cfg,
               int64_t length = -1);

// Triangular mel filterbank on the HTK scale, n_mels x bins, row-major,
// unnormalized triangle heights.
std::vector<double> MelFilterbank(const FeatureConfig& cfg);

// log(max(mel_filter * |stft|^2, log_floor)).
MelSpectrogram LogMel(const Waveform& w, const FeatureConfig& cfg);

// Mel pseudo-inverse magnitude estimate followed by iterative phase
// reconstruction. Debug/fallback inversion only.
Waveform GriffinLim(const MelSpectrogram& mel, const FeatureConfig& cfg,
                    int iterations, double pinv_clip = 0.0);

// Per-iteration spectral-convergence trace from the same procedure, for tests.
std::vector<double> GriffinLimConvergence(const MelSpectrogram& mel,
                                          const FeatureConfig& cfg,
                                          int iterations, double pinv_clip = 0.0);

// Band-limited polyphase resampling with a Blackman-windowed sinc kernel.
Waveform Resample(const Waveform& w, int target_rate);

}  // namespace vcdesk::dsp

#endif  // VCDESK_DSP_HPP_
