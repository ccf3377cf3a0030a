// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/dsp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vcdesk::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool IsPow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Periodic Hann.
std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

// Reflection fold of an arbitrary index into [0, len).
int64_t Reflect(int64_t i, int64_t len) {
  if (len == 1) return 0;
  const int64_t period = 2 * (len - 1);
  i = ((i % period) + period) % period;
  return i < len ? i : period - i;
}

double HtkMel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double HtkMelInv(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

void FeatureConfig::Validate() const {
  Require(sample_rate > 0, "sample_rate must be positive");
  Require(IsPow2(fft_size), "fft_size must be a power of two");
  Require(hop > 0 && hop <= win_length && win_length <= fft_size,
          "need 0 < hop <= win_length <= fft_size");
  Require(window == "hann", "unsupported window: " + window);
  Require(n_mels >= 1, "n_mels must be >= 1");
  Require(fmin >= 0 && fmin < fmax && fmax <= sample_rate / 2.0,
          "need 0 <= fmin < fmax <= sample_rate/2");
  Require(log_floor > 0, "log_floor must be positive");
}

std::string FeatureConfig::Digest() const {
  std::ostringstream os;
  os << "sr=" << sample_rate << ";fft=" << fft_size << ";hop=" << hop
     << ";win=" << win_length << ";window=" << window << ";n_mels=" << n_mels
     << ";fmin=" << fmin << ";fmax=" << fmax << ";floor=" << log_floor
     << ";mel=htk;log=ln;spec=power";
  return HexDigest(Fnv1a(os.str()));
}

void Fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  Require(IsPow2(static_cast<int>(n)), "FFT size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1 : -1);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

Spectrogram Stft(const Waveform& w, const FeatureConfig& cfg) {
  cfg.Validate();
  Spectrogram spec;
  spec.bins = cfg.fft_size / 2 + 1;
  spec.config_digest = cfg.Digest();
  const int64_t len = static_cast<int64_t>(w.samples.size());
  if (len == 0) return spec;
  spec.frames = static_cast<int>((len + cfg.hop - 1) / cfg.hop);
  spec.values.resize(static_cast<size_t>(spec.frames) * spec.bins);

  const std::vector<double> win = HannWindow(cfg.win_length);
  const int pad = (cfg.fft_size - cfg.win_length) / 2;
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (int t = 0; t < spec.frames; ++t) {
    const int64_t center = static_cast<int64_t>(t) * cfg.hop + cfg.hop / 2;
    const int64_t start = center - cfg.win_length / 2;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < cfg.win_length; ++i) {
      const int64_t src = Reflect(start + i, len);
      buf[pad + i] = w.samples[src] * win[i];
    }
    Fft(buf, false);
    for (int k = 0; k < spec.bins; ++k) spec.at(t, k) = buf[k];
  }
  return spec;
}

Waveform Istft(const Spectrogram& spec, const FeatureConfig& cfg,
               int64_t length) {
  cfg.Validate();
  Require(spec.config_digest == cfg.Digest(),
          "spectrogram config digest does not match the given config");
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  if (spec.frames == 0) return out;
  Require(spec.bins == cfg.fft_size / 2 + 1, "bad spectrogram bin count");
  if (length < 0) length = static_cast<int64_t>(spec.frames) * cfg.hop;

  const std::vector<double> win = HannWindow(cfg.win_length);
  const int pad = (cfg.fft_size - cfg.win_length) / 2;
  std::vector<double> acc(length, 0.0);
  std::vector<double> norm(length, 0.0);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) buf[k] = spec.at(t, k);
    for (int k = spec.bins; k < cfg.fft_size; ++k)
      buf[k] = std::conj(spec.at(t, cfg.fft_size - k));
    Fft(buf, true);
    const int64_t center = static_cast<int64_t>(t) * cfg.hop + cfg.hop / 2;
    const int64_t start = center - cfg.win_length / 2;
    for (int i = 0; i < cfg.win_length; ++i) {
      const int64_t dst = start + i;
      if (dst < 0 || dst >= length) continue;
      acc[dst] += buf[pad + i].real() * win[i];
      norm[dst] += win[i] * win[i];
    }
  }
  out.samples.resize(length);
  for (int64_t i = 0; i < length; ++i) {
    out.samples[i] =
        norm[i] > 1e-10 ? static_cast<float>(acc[i] / norm[i]) : 0.0f;
  }
  return out;
}

std::vector<double> MelFilterbank(const FeatureConfig& cfg) {
  cfg.Validate();
  const int bins = cfg.fft_size / 2 + 1;
  std::vector<double> fb(static_cast<size_t>(cfg.n_mels) * bins, 0.0);
  const double mel_lo = HtkMel(cfg.fmin);
  const double mel_hi = HtkMel(cfg.fmax);
  std::vector<double> pts(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    pts[i] = HtkMelInv(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = pts[m], center = pts[m + 1], right = pts[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      double v = 0.0;
      if (f > left && f < center) {
        v = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        v = (right - f) / (right - center);
      }
      if (v > 0) fb[static_cast<size_t>(m) * bins + k] = v;
    }
  }
  return fb;
}

MelSpectrogram LogMel(const Waveform& w, const FeatureConfig& cfg) {
  cfg.Validate();
  Require(w.sample_rate == cfg.sample_rate,
          "waveform sample rate " + std::to_string(w.sample_rate) +
              " does not match config " + std::to_string(cfg.sample_rate));
  const Spectrogram spec = Stft(w, cfg);
  const std::vector<double> fb = MelFilterbank(cfg);
  const int bins = spec.bins;
  MelSpectrogram mel;
  mel.frames = spec.frames;
  mel.n_mels = cfg.n_mels;
  mel.config_digest = cfg.Digest();
  mel.values.resize(static_cast<size_t>(mel.frames) * mel.n_mels);
  std::vector<double> power(bins);
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spec.at(t, k));
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* row = fb.data() + static_cast<size_t>(m) * bins;
      double s = 0.0;
      for (int k = 0; k < bins; ++k) s += row[k] * power[k];
      mel.at(t, m) = static_cast<float>(std::log(std::max(s, cfg.log_floor)));
    }
  }
  return mel;
}

namespace {

// Shared Griffin-Lim core; records spectral convergence per iteration.
Waveform GriffinLimImpl(const MelSpectrogram& mel, const FeatureConfig& cfg,
                        int iterations, double pinv_clip,
                        std::vector<double>* trace) {
  cfg.Validate();
  Require(iterations >= 1, "iterations must be >= 1");
  Require(mel.config_digest == cfg.Digest(),
          "mel config digest does not match the given config");
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  if (mel.frames == 0) return out;

  const int bins = cfg.fft_size / 2 + 1;
  const std::vector<double> fb = MelFilterbank(cfg);
  using Mat = Eigen::MatrixXd;
  Eigen::Map<const Mat> fbm(fb.data(), bins, mel.n_mels);  // column-major view
  // Least-squares mel inversion: power = Fb^T (Fb Fb^T)^-1 exp(mel).
  Mat gram = fbm.transpose() * fbm;  // n_mels x n_mels
  Eigen::LLT<Mat> llt(gram +
                      1e-8 * Mat::Identity(mel.n_mels, mel.n_mels));
  Mat target(mel.frames, bins);
  for (int t = 0; t < mel.frames; ++t) {
    Eigen::VectorXd e(mel.n_mels);
    for (int m = 0; m < mel.n_mels; ++m) e[m] = std::exp(double(mel.at(t, m)));
    Eigen::VectorXd p = fbm * llt.solve(e);
    for (int k = 0; k < bins; ++k) {
      target(t, k) = std::sqrt(std::max(p[k], pinv_clip));
    }
  }
  double target_norm = std::max(target.norm(), 1e-20);

  Spectrogram s;
  s.frames = mel.frames;
  s.bins = bins;
  s.config_digest = cfg.Digest();
  s.values.resize(static_cast<size_t>(s.frames) * bins);
  for (int t = 0; t < s.frames; ++t)
    for (int k = 0; k < bins; ++k) s.at(t, k) = {target(t, k), 0.0};

  Waveform x;
  for (int it = 0; it < iterations; ++it) {
    x = Istft(s, cfg);
    Spectrogram rebuilt = Stft(x, cfg);
    if (trace) {
      double err = 0.0;
      for (int t = 0; t < s.frames && t < rebuilt.frames; ++t) {
        for (int k = 0; k < bins; ++k) {
          const double d = std::abs(rebuilt.at(t, k)) - target(t, k);
          err += d * d;
        }
      }
      trace->push_back(std::sqrt(err) / target_norm);
    }
    for (int t = 0; t < s.frames && t < rebuilt.frames; ++t) {
      for (int k = 0; k < bins; ++k) {
        const std::complex<double> z = rebuilt.at(t, k);
        const double mag = std::abs(z);
        s.at(t, k) = mag > 1e-20 ? z / mag * target(t, k)
                                 : std::complex<double>(target(t, k), 0.0);
      }
    }
  }
  return Istft(s, cfg);
}

}  // namespace

Waveform GriffinLim(const MelSpectrogram& mel, const FeatureConfig& cfg,
                    int iterations, double pinv_clip) {
  return GriffinLimImpl(mel, cfg, iterations, pinv_clip, nullptr);
}

std::vector<double> GriffinLimConvergence(const MelSpectrogram& mel,
                                          const FeatureConfig& cfg,
                                          int iterations, double pinv_clip) {
  std::vector<double> trace;
  GriffinLimImpl(mel, cfg, iterations, pinv_clip, &trace);
  return trace;
}

Waveform Resample(const Waveform& w, int target_rate) {
  Require(target_rate > 0, "target_rate must be positive");
  if (target_rate == w.sample_rate) return w;
  const int64_t g = std::gcd<int64_t>(w.sample_rate, target_rate);
  const int64_t up = target_rate / g;    // L
  const int64_t down = w.sample_rate / g;  // M
  const int64_t len = static_cast<int64_t>(w.samples.size());
  Waveform out;
  out.sample_rate = target_rate;
  if (len == 0) return out;
  const int64_t out_len = (len * up + down - 1) / down;
  out.samples.resize(out_len);

  // Blackman-windowed sinc on the upsampled grid, 32 zero crossings per side.
  const int64_t scale = std::max(up, down);
  const int64_t half = 32 * scale;
  std::vector<double> kernel(2 * half + 1);
  const double cutoff = 0.95 / static_cast<double>(scale);
  for (int64_t i = -half; i <= half; ++i) {
    const double t = static_cast<double>(i);
    double sinc = (i == 0) ? cutoff : std::sin(kPi * cutoff * t) / (kPi * t);
    const double u = (t + half) / (2.0 * half);
    const double win =
        0.42 - 0.5 * std::cos(2.0 * kPi * u) + 0.08 * std::cos(4.0 * kPi * u);
    kernel[i + half] = sinc * win;
  }
  const auto floor_div = [](int64_t a, int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
  };
  for (int64_t j = 0; j < out_len; ++j) {
    const int64_t p = j * down;  // output position on the upsampled grid
    int64_t k_lo = floor_div(p - half + up - 1, up);  // ceil((p-half)/up)
    int64_t k_hi = floor_div(p + half, up);
    k_lo = std::max<int64_t>(k_lo, 0);
    k_hi = std::min<int64_t>(k_hi, len - 1);
    double acc = 0.0;
    for (int64_t k = k_lo; k <= k_hi; ++k) {
      acc += static_cast<double>(w.samples[k]) * kernel[p - k * up + half];
    }
    out.samples[j] = static_cast<float>(acc * static_cast<double>(up));
  }
  return out;
}

}  // namespace vcdesk::dsp
