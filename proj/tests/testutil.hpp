// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Test-only oracles, kept independent of the library code they check.

#ifndef VCDESK_TESTS_TESTUTIL_HPP_
#define VCDESK_TESTS_TESTUTIL_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vcdesk/common.hpp"

namespace vcdesk::testutil {

inline Waveform MakeSine(double freq_hz, double seconds, int sample_rate,
                         double amp = 0.5) {
  Waveform w;
  w.sample_rate = sample_rate;
  const int64_t n = static_cast<int64_t>(seconds * sample_rate);
  w.samples.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(
        amp * std::sin(2.0 * 3.14159265358979323846 * freq_hz * i / sample_rate));
  }
  return w;
}

// Autocorrelation pitch estimate over the middle of the signal, searching
// lags for [fmin, fmax]. Parabolic interpolation around the peak lag.
inline double EstimatePitchHz(const Waveform& w, double fmin = 60.0,
                              double fmax = 420.0) {
  const int sr = w.sample_rate;
  const int64_t n = static_cast<int64_t>(w.samples.size());
  const int64_t lag_min = static_cast<int64_t>(sr / fmax);
  const int64_t lag_max = std::min<int64_t>(static_cast<int64_t>(sr / fmin), n / 2);
  if (lag_max <= lag_min + 2) return 0.0;
  const int64_t start = n / 4;
  const int64_t span = std::min<int64_t>(n / 2, 4 * lag_max);
  std::vector<double> ac(lag_max + 1, 0.0);
  for (int64_t lag = lag_min; lag <= lag_max; ++lag) {
    double s = 0.0;
    for (int64_t i = start; i < start + span && i + lag < n; ++i) {
      s += static_cast<double>(w.samples[i]) * w.samples[i + lag];
    }
    ac[lag] = s;
  }
  int64_t best = lag_min;
  for (int64_t lag = lag_min; lag <= lag_max; ++lag) {
    if (ac[lag] > ac[best]) best = lag;
  }
  double lag = static_cast<double>(best);
  if (best > lag_min && best < lag_max) {
    const double y0 = ac[best - 1], y1 = ac[best], y2 = ac[best + 1];
    const double denom = y0 - 2 * y1 + y2;
    if (std::abs(denom) > 1e-12) lag += 0.5 * (y0 - y2) / denom;
  }
  return lag > 0 ? sr / lag : 0.0;
}

inline double SnrDb(const std::vector<float>& ref, const std::vector<float>& test) {
  const size_t n = std::min(ref.size(), test.size());
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sig += static_cast<double>(ref[i]) * ref[i];
    const double d = static_cast<double>(ref[i]) - test[i];
    err += d * d;
  }
  if (err <= 0.0) return 300.0;
  return 10.0 * std::log10(sig / err);
}

// Brute-force CTC: enumerate every length-T path over V+1 symbols, keep the
// ones that collapse to `labels`, and sum their probabilities.
inline double BruteForceCtcLogProb(const std::vector<std::vector<double>>& logp,
                                   const std::vector<int>& labels, int blank) {
  const int frames = static_cast<int>(logp.size());
  const int vocab = static_cast<int>(logp[0].size());
  double total = 0.0;
  std::vector<int> path(frames, 0);
  const int64_t n_paths = static_cast<int64_t>(std::pow(vocab, frames));
  for (int64_t code = 0; code < n_paths; ++code) {
    int64_t c = code;
    for (int t = 0; t < frames; ++t) {
      path[t] = static_cast<int>(c % vocab);
      c /= vocab;
    }
    std::vector<int> collapsed;
    int prev = -1;
    for (int t = 0; t < frames; ++t) {
      if (path[t] != prev && path[t] != blank) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed != labels) continue;
    double lp = 0.0;
    for (int t = 0; t < frames; ++t) lp += logp[t][path[t]];
    total += std::exp(lp);
  }
  return std::log(total);
}

// Plain recursive Levenshtein distance (unit costs), for cross-checking.
inline int BruteForceEditDistance(const std::vector<std::string>& ref,
                                  const std::vector<std::string>& hyp,
                                  size_t i = 0, size_t j = 0) {
  if (i == ref.size()) return static_cast<int>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int>(ref.size() - i);
  if (ref[i] == hyp[j]) return BruteForceEditDistance(ref, hyp, i + 1, j + 1);
  const int sub = BruteForceEditDistance(ref, hyp, i + 1, j + 1);
  const int del = BruteForceEditDistance(ref, hyp, i + 1, j);
  const int ins = BruteForceEditDistance(ref, hyp, i, j + 1);
  return 1 + std::min({sub, del, ins});
}

}  // namespace vcdesk::testutil

#endif  // VCDESK_TESTS_TESTUTIL_HPP_
