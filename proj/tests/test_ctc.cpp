// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "vcdesk/nn/ctc.hpp"
#include "vcdesk/nn/gradcheck.hpp"
#include "vcdesk/nn/graph.hpp"

using namespace vcdesk;
using namespace vcdesk::nn;
using vcdesk::testutil::BruteForceCtcLogProb;

namespace {

// Random per-frame log-softmax rows.
Mat<double> RandomLogProbs(int frames, int vocab, Rng& rng) {
  Mat<double> m(frames, vocab);
  for (int t = 0; t < frames; ++t) {
    double lse = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < vocab; ++k) {
      m.at(t, k) = rng.uniform(-3.0, 1.0);
      lse = LogSumExp(lse, m.at(t, k));
    }
    for (int k = 0; k < vocab; ++k) m.at(t, k) -= lse;
  }
  return m;
}

std::vector<std::vector<double>> ToNested(const Mat<double>& m) {
  std::vector<std::vector<double>> out(m.rows, std::vector<double>(m.cols));
  for (int64_t t = 0; t < m.rows; ++t)
    for (int64_t k = 0; k < m.cols; ++k) out[t][k] = m.at(t, k);
  return out;
}

}  // namespace

TEST_CASE("ctc hand case: T=1, uniform over {a, blank}, label a -> ln 2") {
  Mat<double> logp(1, 2);
  logp.at(0, 0) = std::log(0.5);  // a
  logp.at(0, 1) = std::log(0.5);  // blank
  auto res = CtcLoss(logp, {0}, 1);
  CHECK(std::abs(res.loss - std::log(2.0)) < 1e-9);
}

TEST_CASE("ctc hand case: T=2 uniform, label a -> -ln 0.75") {
  // Legal paths: aa, a-, -a, each 0.25: P = 0.75.
  Mat<double> logp(2, 2);
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 2; ++k) logp.at(t, k) = std::log(0.5);
  auto res = CtcLoss(logp, {0}, 1);
  CHECK(std::abs(res.loss - (-std::log(0.75))) < 1e-9);
  CHECK(std::abs(res.loss - 0.287682) < 1e-6);
}

TEST_CASE("ctc equals brute-force path enumeration for all small shapes") {
  Rng rng(1234);
  for (int vocab_symbols = 1; vocab_symbols <= 3; ++vocab_symbols) {
    const int vocab = vocab_symbols + 1;  // + blank (last id)
    const int blank = vocab_symbols;
    for (int frames = 1; frames <= 6; ++frames) {
      for (int n_labels = 0; n_labels <= 3; ++n_labels) {
        for (int rep = 0; rep < 3; ++rep) {
          std::vector<int> labels(n_labels);
          for (auto& u : labels)
            u = static_cast<int>(rng.uniform_int(vocab_symbols));
          if (frames < CtcMinFrames(labels)) {
            Mat<double> logp = RandomLogProbs(frames, vocab, rng);
            CHECK_THROWS_AS(CtcLoss(logp, labels, blank), ValidationError);
            continue;
          }
          Mat<double> logp = RandomLogProbs(frames, vocab, rng);
          auto res = CtcLoss(logp, labels, blank);
          const double brute = -BruteForceCtcLogProb(ToNested(logp), labels, blank);
          CHECK(std::abs(res.loss - brute) / std::max(std::abs(brute), 1e-12) <
                1e-10);
        }
      }
    }
  }
}

TEST_CASE("ctc gradient matches finite differences") {
  Rng rng(77);
  Mat<double> logp = RandomLogProbs(5, 4, rng);
  const std::vector<int> labels = {0, 2, 0};
  auto res = CtcLoss(logp, labels, 3);
  auto f = [&](const std::vector<double>& x) {
    Mat<double> m(5, 4);
    m.d = x;
    return CtcLoss(m, labels, 3).loss;
  };
  CHECK(GradCheck(f, logp.d, res.grad.d) < 1e-6);
}

TEST_CASE("ctc per-frame posteriors sum to one") {
  Rng rng(88);
  Mat<double> logp = RandomLogProbs(6, 4, rng);
  auto res = CtcLoss(logp, {1, 0}, 3);
  for (int t = 0; t < 6; ++t) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s -= res.grad.at(t, k);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ctc: impossible alignment is a defined error") {
  Mat<double> logp(2, 3);
  for (auto& v : logp.d) v = std::log(1.0 / 3.0);
  CHECK_THROWS_WITH_AS(CtcLoss(logp, {0, 0}, 2),
                       doctest::Contains("no legal alignment"),
                       ValidationError);
  CHECK_THROWS_AS(CtcLoss(logp, {0, 1, 0}, 2), ValidationError);
}

TEST_CASE("ctc graph op chains through log-softmax") {
  Rng rng(99);
  Graph<double> g;
  Mat<double> logits(4, 3);
  for (auto& v : logits.d) v = rng.uniform(-1, 1);
  auto x = g.Leaf(logits);
  auto loss = g.Ctc(g.LogSoftmaxRows(x), {0, 1}, 2);
  g.Backward(loss);
  auto f = [&](const std::vector<double>& v) {
    Graph<double> h;
    Mat<double> m(4, 3);
    m.d = v;
    auto xv = h.Leaf(std::move(m));
    return h.Value(h.Ctc(h.LogSoftmaxRows(xv), {0, 1}, 2)).d[0];
  };
  CHECK(GradCheck(f, logits.d, g.Grad(x).d) < 1e-6);
}
