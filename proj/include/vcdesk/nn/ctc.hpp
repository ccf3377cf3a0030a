// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_CTC_HPP_
#define VCDESK_NN_CTC_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vcdesk/nn/tensor.hpp"

namespace vcdesk::nn {

inline double LogSumExp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double LogSumExp(double a, double b, double c) {
  return LogSumExp(LogSumExp(a, b), c);
}

// Smallest frame count that admits a legal alignment for `labels`.
inline int CtcMinFrames(const std::vector<int>& labels) {
  int repeats = 0;
  for (size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++repeats;
  }
  return static_cast<int>(labels.size()) + repeats;
}

template <class T>
struct CtcResult {
  double loss = 0.0;   // -log P(labels | logprobs)
  Mat<T> grad;         // d loss / d logprobs, T x (V+1)
};

// Alignment-marginalizing loss over blank-augmented label paths, forward
// algorithm in log space. `logp` rows must be valid log-distributions over
// V symbols plus the blank in column `blank`. Gradient is computed from the
// state posteriors of the forward/backward pass.
template <class T>
CtcResult<T> CtcLoss(const Mat<T>& logp, const std::vector<int>& labels,
                     int blank) {
  const int frames = static_cast<int>(logp.rows);
  const int vocab = static_cast<int>(logp.cols);
  Require(frames >= 1, "ctc: need at least one frame");
  Require(blank >= 0 && blank < vocab, "ctc: blank id out of range");
  for (int u : labels) {
    Require(u >= 0 && u < vocab && u != blank,
            "ctc: label id out of range or equal to blank");
  }
  if (frames < CtcMinFrames(labels)) {
    throw ValidationError("ctc: no legal alignment, need at least " +
                          std::to_string(CtcMinFrames(labels)) +
                          " frames for " + std::to_string(labels.size()) +
                          " labels but got " + std::to_string(frames));
  }

  const int n_labels = static_cast<int>(labels.size());
  const int n_states = 2 * n_labels + 1;
  const double kNegInf = -std::numeric_limits<double>::infinity();
  auto sym = [&](int s) { return (s % 2 == 0) ? blank : labels[(s - 1) / 2]; };
  auto lp = [&](int t, int k) { return static_cast<double>(logp.at(t, k)); };

  // Forward. alpha includes the emission at t.
  std::vector<double> alpha(static_cast<size_t>(frames) * n_states, kNegInf);
  auto a = [&](int t, int s) -> double& {
    return alpha[static_cast<size_t>(t) * n_states + s];
  };
  a(0, 0) = lp(0, sym(0));
  if (n_states > 1) a(0, 1) = lp(0, sym(1));
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < n_states; ++s) {
      double v = a(t - 1, s);
      if (s >= 1) v = LogSumExp(v, a(t - 1, s - 1));
      if (s >= 2 && sym(s) != blank && sym(s) != sym(s - 2)) {
        v = LogSumExp(v, a(t - 1, s - 2));
      }
      a(t, s) = v + lp(t, sym(s));
    }
  }
  double log_p = a(frames - 1, n_states - 1);
  if (n_states > 1) log_p = LogSumExp(log_p, a(frames - 1, n_states - 2));

  // Backward. beta excludes the emission at t, so alpha + beta is the joint
  // log-probability of all paths through state s at time t.
  std::vector<double> beta(static_cast<size_t>(frames) * n_states, kNegInf);
  auto b = [&](int t, int s) -> double& {
    return beta[static_cast<size_t>(t) * n_states + s];
  };
  b(frames - 1, n_states - 1) = 0.0;
  if (n_states > 1) b(frames - 1, n_states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < n_states; ++s) {
      double v = b(t + 1, s) + lp(t + 1, sym(s));
      if (s + 1 < n_states) {
        v = LogSumExp(v, b(t + 1, s + 1) + lp(t + 1, sym(s + 1)));
      }
      if (s + 2 < n_states && sym(s + 2) != blank && sym(s + 2) != sym(s)) {
        v = LogSumExp(v, b(t + 1, s + 2) + lp(t + 1, sym(s + 2)));
      }
      b(t, s) = v;
    }
  }

  CtcResult<T> out;
  out.loss = -log_p;
  out.grad = Mat<T>::Zeros(frames, vocab);
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < n_states; ++s) {
      const double post = a(t, s) + b(t, s) - log_p;
      if (post == kNegInf) continue;
      out.grad.at(t, sym(s)) -= static_cast<T>(std::exp(post));
    }
  }
  return out;
}

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_CTC_HPP_
