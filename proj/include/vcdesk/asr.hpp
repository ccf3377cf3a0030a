// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_ASR_HPP_
#define VCDESK_ASR_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vcdesk/corpus.hpp"
#include "vcdesk/features.hpp"
#include "vcdesk/nn/checkpoint.hpp"
#include "vcdesk/nn/transformer.hpp"

namespace vcdesk::asr {

// Speaker-independent recognizer trained with an interpolated CTC and
// attention-decoder objective, decoded by joint-score beam search.
struct AsrConfig {
  dsp::FeatureConfig features;
  std::vector<std::string> vocab;  // content tokens; defaults to the union inventory
  double ctc_weight = 0.3;         // loss interpolation, in [0, 1]
  nn::TransformerConfig encoder{2, 2, 64, 128, 0.0};
  nn::TransformerConfig decoder{2, 2, 64, 128, 0.0};
  int frame_stack = 2;  // time subsampling by stacking consecutive frames
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 1;

  void Validate() const;
  std::string Digest() const;
  std::string ToJson() const;
  static AsrConfig FromJson(const std::string& json_text);

  int blank_id() const { return static_cast<int>(vocab.size()); }
  int sos_id() const { return static_cast<int>(vocab.size()); }   // decoder input space
  int eos_id() const { return static_cast<int>(vocab.size()); }   // decoder output space
};

struct DecodeConfig {
  int beam_size = 5;
  double ctc_decode_weight = 0.3;  // in [0, 1]
  double lm_weight = 0.0;          // >= 0
  double max_output_ratio = 0.5;   // output cap = ratio * input mel frames

  void Validate() const;
};

// lambda * l_ctc + (1 - lambda) * l_att.
double HybridLoss(double l_ctc, double l_att, double lambda);

// Add-one-smoothed n-gram over content token ids, order 1..3. Contexts are
// padded with a BOS sentinel.
class NGramLm {
 public:
  NGramLm() = default;
  NGramLm(int order, int vocab_size);

  static NGramLm Train(const corpus::CorpusManifest& manifest,
                       const std::vector<std::string>& vocab, int order);

  void Add(const std::vector<int>& sequence);
  // log P(next | last order-1 tokens of prefix).
  double Score(const std::vector<int>& prefix, int next) const;

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }

  std::string ToJson() const;
  static NGramLm FromJson(const std::string& json_text);

 private:
  std::string ContextKey(const std::vector<int>& prefix) const;
  int order_ = 2;
  int vocab_size_ = 0;
  std::map<std::string, std::map<int, int64_t>> counts_;
  std::map<std::string, int64_t> totals_;
};

struct AsrTrainLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;  // NaN if no held-out set given
};

nn::Checkpoint TrainAsr(const corpus::CorpusManifest& train,
                        const AsrConfig& cfg,
                        const corpus::CorpusManifest* heldout = nullptr,
                        std::vector<AsrTrainLogEntry>* log = nullptr);

struct RecognitionResult {
  TokenSequence tokens;
  double score = 0.0;
};

// Loaded recognizer. Thread-compatible for concurrent const use.
class Recognizer {
 public:
  explicit Recognizer(const nn::Checkpoint& ckpt);

  RecognitionResult Recognize(const Waveform& w, const DecodeConfig& dcfg,
                              const NGramLm* lm = nullptr) const;
  RecognitionResult RecognizeMel(const dsp::MelSpectrogram& mel,
                                 const DecodeConfig& dcfg,
                                 const NGramLm* lm = nullptr) const;

  // Hybrid teacher-forced loss of a reference transcript, for validation.
  double ScoreUtterance(const dsp::MelSpectrogram& mel,
                        const std::vector<std::string>& tokens) const;

  const AsrConfig& config() const { return cfg_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  AsrConfig cfg_;
};

// Log-space CTC prefix scoring over a fixed log-prob grid (frames x vocab+1,
// blank last). Used for joint decoding and cross-checked against CtcLoss.
class CtcPrefixScorer {
 public:
  CtcPrefixScorer(const nn::Mat<float>& logprobs, int blank);

  struct State {
    std::vector<double> r_n;  // paths ending in the last label
    std::vector<double> r_b;  // paths ending in blank
    int last = -1;
    double prefix_logp = 0.0;  // log psi(prefix)
  };

  State Initial() const;
  State Extend(const State& state, int token) const;
  // log P_ctc(sequence == prefix), for hypothesis finalization.
  double FinalLogProb(const State& state) const;

  int frames() const { return frames_; }

 private:
  int frames_ = 0;
  int vocab_ = 0;
  int blank_ = 0;
  std::vector<double> logp_;  // frames x vocab
};

}  // namespace vcdesk::asr

#endif  // VCDESK_ASR_HPP_
