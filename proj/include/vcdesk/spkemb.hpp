// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_SPKEMB_HPP_
#define VCDESK_SPKEMB_HPP_

#include <string>
#include <vector>

#include "vcdesk/corpus.hpp"
#include "vcdesk/features.hpp"
#include "vcdesk/nn/checkpoint.hpp"

namespace vcdesk::spkemb {

// Frame encoder -> mean+stddev pooling -> embedding layer. Trained with a
// speaker-classification softmax head that is dropped from the checkpoint.
struct SpkembConfig {
  dsp::FeatureConfig features;
  int context = 1;                       // spliced +-context frames
  std::vector<int> hidden = {64, 64, 64};  // frame-encoder layer widths
  int embed_dim = 16;
  int epochs = 8;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 1;

  void Validate() const;
  std::string Digest() const;
  std::string ToJson() const;
  static SpkembConfig FromJson(const std::string& json_text);
};

// Unit-L2-norm speaker vector plus the utterances it came from.
struct SpeakerEmbedding {
  std::vector<float> vector;
  std::vector<std::string> source_utt_ids;
};

struct TrainLogEntry {
  int epoch = 0;
  double loss = 0.0;
};

nn::Checkpoint TrainSpkemb(const corpus::CorpusManifest& manifest,
                           const SpkembConfig& cfg,
                           std::vector<TrainLogEntry>* log = nullptr);

// Inference-side model reconstructed from a checkpoint.
class SpkembScorer {
 public:
  explicit SpkembScorer(const nn::Checkpoint& ckpt);

  std::vector<float> EmbedWaveform(const Waveform& w) const;
  std::vector<float> EmbedMel(const dsp::MelSpectrogram& mel) const;
  const SpkembConfig& config() const { return cfg_; }

 private:
  SpkembConfig cfg_;
  mutable nn::ParamStore<float> store_;
  std::vector<nn::Param<float>*> weights_;
  std::vector<nn::Param<float>*> biases_;
  nn::Param<float>* embed_w_ = nullptr;
  nn::Param<float>* embed_b_ = nullptr;
  MelStats stats_;
};

// Mean of per-utterance embeddings, then L2-normalized.
SpeakerEmbedding ExtractEmbedding(const std::vector<Waveform>& waveforms,
                                  const SpkembScorer& scorer);

// Cosine similarity of unit-norm vectors (a plain dot product). Rejects
// zero vectors.
double Similarity(const std::vector<float>& e1, const std::vector<float>& e2);

std::vector<float> MeanEmbedding(const std::vector<std::vector<float>>& embs);

void SaveEmbeddingJson(const std::string& path, const SpeakerEmbedding& emb,
                       const std::string& speaker_id);
SpeakerEmbedding LoadEmbeddingJson(const std::string& path);

// Nearest-centroid speaker classification accuracy of test utterances
// against per-speaker centroids built from the train split.
double EvaluateSpeakerAccuracy(const SpkembScorer& scorer,
                               const corpus::CorpusManifest& train,
                               const corpus::CorpusManifest& test);

}  // namespace vcdesk::spkemb

#endif  // VCDESK_SPKEMB_HPP_
