// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_FEATURES_HPP_
#define VCDESK_FEATURES_HPP_

#include <string>
#include <vector>

#include "vcdesk/corpus.hpp"
#include "vcdesk/dsp.hpp"
#include "vcdesk/nn/tensor.hpp"

namespace vcdesk {

// Per-dimension corpus statistics for mean/variance normalization. Stored in
// checkpoints as the non-trainable tensors "mvn.mean" / "mvn.istd".
struct MelStats {
  std::vector<float> mean;
  std::vector<float> istd;
};

inline nn::Mat<float> MelToMat(const dsp::MelSpectrogram& mel) {
  nn::Mat<float> m(mel.frames, mel.n_mels);
  m.d = mel.values;
  return m;
}

inline dsp::MelSpectrogram MatToMel(const nn::Mat<float>& m,
                                    const std::string& digest) {
  dsp::MelSpectrogram mel;
  mel.frames = static_cast<int>(m.rows);
  mel.n_mels = static_cast<int>(m.cols);
  mel.values = m.d;
  mel.config_digest = digest;
  return mel;
}

// Reads the record's audio and resamples to target_rate when needed.
Waveform ReadWavResampled(const corpus::CorpusManifest& manifest,
                          const corpus::ManifestRecord& record, int target_rate);

inline dsp::MelSpectrogram LoadUtteranceMel(const corpus::CorpusManifest& manifest,
                                            const corpus::ManifestRecord& record,
                                            const dsp::FeatureConfig& cfg) {
  Waveform w = ReadWavResampled(manifest, record, cfg.sample_rate);
  return dsp::LogMel(w, cfg);
}

inline MelStats ComputeMelStats(const std::vector<dsp::MelSpectrogram>& mels) {
  Require(!mels.empty(), "mel stats: empty corpus");
  const int dim = mels[0].n_mels;
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  int64_t frames = 0;
  for (const auto& mel : mels) {
    Require(mel.n_mels == dim, "mel stats: dimension mismatch");
    for (int t = 0; t < mel.frames; ++t) {
      for (int m = 0; m < dim; ++m) {
        const double v = mel.at(t, m);
        sum[m] += v;
        sq[m] += v * v;
      }
    }
    frames += mel.frames;
  }
  Require(frames > 0, "mel stats: no frames");
  MelStats stats;
  stats.mean.resize(dim);
  stats.istd.resize(dim);
  for (int m = 0; m < dim; ++m) {
    const double mu = sum[m] / static_cast<double>(frames);
    const double var = std::max(sq[m] / static_cast<double>(frames) - mu * mu, 1e-8);
    stats.mean[m] = static_cast<float>(mu);
    stats.istd[m] = static_cast<float>(1.0 / std::sqrt(var));
  }
  return stats;
}

inline nn::Mat<float> ApplyMvn(const dsp::MelSpectrogram& mel, const MelStats& stats) {
  Require(static_cast<size_t>(mel.n_mels) == stats.mean.size(),
          "mvn: dimension mismatch");
  nn::Mat<float> out(mel.frames, mel.n_mels);
  for (int t = 0; t < mel.frames; ++t) {
    for (int m = 0; m < mel.n_mels; ++m) {
      out.at(t, m) = (mel.at(t, m) - stats.mean[m]) * stats.istd[m];
    }
  }
  return out;
}

// Splices +-context neighbouring frames onto each frame (edge-clamped),
// giving local spectral context to per-frame encoders.
inline nn::Mat<float> SpliceFrames(const nn::Mat<float>& x, int context) {
  if (context <= 0) return x;
  const int64_t t_len = x.rows, dim = x.cols;
  nn::Mat<float> out(t_len, dim * (2 * context + 1));
  for (int64_t t = 0; t < t_len; ++t) {
    int64_t col = 0;
    for (int c = -context; c <= context; ++c) {
      const int64_t src = std::clamp<int64_t>(t + c, 0, t_len - 1);
      for (int64_t m = 0; m < dim; ++m) out.at(t, col++) = x.at(src, m);
    }
  }
  return out;
}

}  // namespace vcdesk

#endif  // VCDESK_FEATURES_HPP_
