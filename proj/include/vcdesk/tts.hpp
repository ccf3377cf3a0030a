// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_TTS_HPP_
#define VCDESK_TTS_HPP_

#include <memory>
#include <string>
#include <vector>

#include "vcdesk/corpus.hpp"
#include "vcdesk/features.hpp"
#include "vcdesk/nn/checkpoint.hpp"
#include "vcdesk/nn/transformer.hpp"
#include "vcdesk/spkemb.hpp"

namespace vcdesk::tts {

// Speaker-conditioned sequence-to-mel model over one shared token-embedding
// table covering both language inventories. The table can be frozen during
// target-speaker finetuning.
struct TtsConfig {
  dsp::FeatureConfig features;
  std::vector<std::string> vocab;  // shared union; defaults to both inventories
  nn::TransformerConfig encoder{2, 2, 64, 128, 0.0};
  nn::TransformerConfig decoder{2, 2, 64, 128, 0.0};
  int spk_dim = 16;
  int prenet_dim = 64;
  int postnet_channels = 64;
  int postnet_layers = 3;
  int postnet_kernel = 5;
  double stop_weight = 5.0;              // BCE weight on the stop frame
  double guided_attention_weight = 1.0;  // 0 disables the diagonal prior
  double guided_attention_sigma = 0.2;
  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 1;
  bool freeze_embedding = false;  // meaningful at finetune time

  void Validate() const;
  std::string Digest() const;  // model structure only, not training hyper
  std::string ToJson() const;
  static TtsConfig FromJson(const std::string& json_text);
};

struct SynthesisConfig {
  double stop_threshold = 0.5;   // in (0, 1)
  int max_frames_per_token = 20;

  void Validate() const;
};

struct SynthesisResult {
  dsp::MelSpectrogram mel;  // de-normalized log-mel, feature digest attached
  int stop_frame = 0;       // frames emitted when the stop fired or cap hit
  bool stopped_by_cap = false;
};

struct TtsLossBreakdown {
  double mel_l1 = 0.0;       // post-net output L1 (normalized mel domain)
  double mel_l1_before = 0.0;
  double stop_bce = 0.0;
  double guided_attention = 0.0;
  double total = 0.0;
};

struct TtsTrainLogEntry {
  int epoch = 0;
  double train_total = 0.0;
  double heldout_mel_l1 = 0.0;  // NaN without a held-out set
};

class TtsModel {
 public:
  TtsModel(const TtsConfig& cfg, uint64_t init_seed);  // fresh parameters
  explicit TtsModel(const nn::Checkpoint& ckpt);

  nn::Checkpoint ToCheckpoint(const std::string& extra_log_json = "") const;

  // Teacher-forced losses of one utterance; shared verbatim by the training
  // loop and TeacherForcedEval.
  TtsLossBreakdown ForwardLosses(const dsp::MelSpectrogram& target_mel,
                                 const std::vector<std::string>& tokens,
                                 const std::vector<float>& spk_embedding,
                                 nn::Graph<float>* graph_out = nullptr,
                                 nn::Graph<float>::Var* loss_out = nullptr);

  SynthesisResult Synthesize(const std::vector<std::string>& tokens,
                             const std::vector<float>& spk_embedding,
                             const SynthesisConfig& scfg);

  const TtsConfig& config() const { return cfg_; }
  void set_mel_stats(const MelStats& stats);
  const MelStats& mel_stats() const { return stats_; }
  void set_freeze_embedding(bool freeze);
  const nn::Mat<float>& embedding_table() const;
  nn::ParamStore<float>& store();

 private:
  struct Net;
  TtsConfig cfg_;
  std::shared_ptr<Net> net_;
  MelStats stats_;
};

// Bilingual multi-speaker pretraining. Per-speaker conditioning embeddings
// are extracted from the manifest with the given speaker encoder checkpoint.
nn::Checkpoint PretrainTts(const corpus::CorpusManifest& manifest,
                           const nn::Checkpoint& spkemb_ckpt, const TtsConfig& cfg,
                           const corpus::CorpusManifest* heldout = nullptr,
                           std::vector<TtsTrainLogEntry>* log = nullptr);

struct FinetuneOptions {
  bool freeze_embedding = true;
  int epochs = 20;
  double lr = 1e-4;  // 0.1 x the pretrain default
  int batch_size = 8;
  uint64_t seed = 2;
};

// Target-speaker adaptation of a pretrained checkpoint. The manifest must be
// single-speaker; with freeze_embedding the token table is bit-identical
// before and after.
nn::Checkpoint FinetuneTts(const nn::Checkpoint& pretrained,
                           const corpus::CorpusManifest& target_manifest,
                           const std::vector<float>& spk_embedding,
                           const FinetuneOptions& opts,
                           std::vector<TtsTrainLogEntry>* log = nullptr);

struct UtteranceEval {
  std::string utt_id;
  double mel_l1 = 0.0;
  double stop_bce = 0.0;
};

// Teacher-forced losses per utterance, no sampling.
std::vector<UtteranceEval> TeacherForcedEval(
    const corpus::CorpusManifest& manifest, TtsModel& model,
    const std::vector<float>& spk_embedding);

// As above but with per-speaker embeddings from a speaker encoder.
std::vector<UtteranceEval> TeacherForcedEvalMultiSpeaker(
    const corpus::CorpusManifest& manifest, TtsModel& model,
    const spkemb::SpkembScorer& scorer);

}  // namespace vcdesk::tts

#endif  // VCDESK_TTS_HPP_
