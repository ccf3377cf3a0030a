// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/spkemb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "vcdesk/nn/adam.hpp"
#include "vcdesk/nn/graph.hpp"

namespace vcdesk::spkemb {

using nlohmann::json;
using nn::Graph;
using nn::Mat;
using nn::Param;
using nn::ParamStore;

namespace {

// Builds the shared part of the network (frame encoder + pooling + embedding
// projection) into `store`, in the exact order the checkpoint uses.
struct Net {
  std::vector<Param<float>*> weights;
  std::vector<Param<float>*> biases;
  Param<float>* embed_w = nullptr;
  Param<float>* embed_b = nullptr;
  Param<float>* mvn_mean = nullptr;
  Param<float>* mvn_istd = nullptr;
};

Net BuildNet(ParamStore<float>& store, const SpkembConfig& cfg, Rng* init_rng) {
  Net net;
  int64_t in_dim = static_cast<int64_t>(cfg.features.n_mels) *
                   (2 * cfg.context + 1);
  for (size_t i = 0; i < cfg.hidden.size(); ++i) {
    Param<float>& w =
        store.Create("enc.l" + std::to_string(i) + ".w", in_dim, cfg.hidden[i]);
    Param<float>& b =
        store.Create("enc.l" + std::to_string(i) + ".b", 1, cfg.hidden[i]);
    if (init_rng) nn::InitXavier(w.value, *init_rng);
    net.weights.push_back(&w);
    net.biases.push_back(&b);
    in_dim = cfg.hidden[i];
  }
  net.embed_w = &store.Create("embed.w", 2 * in_dim, cfg.embed_dim);
  net.embed_b = &store.Create("embed.b", 1, cfg.embed_dim);
  if (init_rng) nn::InitXavier(net.embed_w->value, *init_rng);
  net.mvn_mean = &store.Create("mvn.mean", 1, cfg.features.n_mels);
  net.mvn_istd = &store.Create("mvn.istd", 1, cfg.features.n_mels);
  net.mvn_mean->trainable = false;
  net.mvn_istd->trainable = false;
  return net;
}

Graph<float>::Var EmbedForward(Graph<float>& g, const Net& net,
                               const Mat<float>& spliced) {
  auto h = g.Input(spliced);
  for (size_t i = 0; i < net.weights.size(); ++i) {
    h = g.Relu(g.AddRow(g.MatMul(h, g.Parameter(*net.weights[i])),
                        g.Parameter(*net.biases[i])));
  }
  auto pooled = g.ConcatCols({g.MeanRows(h), g.StdRows(h)});
  return g.AddRow(g.MatMul(pooled, g.Parameter(*net.embed_w)),
                  g.Parameter(*net.embed_b));
}

}  // namespace

void SpkembConfig::Validate() const {
  features.Validate();
  Require(context >= 0, "context must be >= 0");
  Require(!hidden.empty(), "need at least one frame-encoder layer");
  Require(embed_dim >= 1, "embed_dim must be >= 1");
  Require(epochs >= 1 && batch_size >= 1 && lr > 0, "bad training hyper");
}

std::string SpkembConfig::Digest() const {
  std::ostringstream os;
  os << "spkemb;feat=" << features.Digest() << ";ctx=" << context << ";hidden=";
  for (int h : hidden) os << h << ",";
  os << ";d=" << embed_dim;
  return HexDigest(Fnv1a(os.str()));
}

std::string SpkembConfig::ToJson() const {
  json j;
  j["context"] = context;
  j["hidden"] = hidden;
  j["embed_dim"] = embed_dim;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["seed"] = seed;
  j["features"] = {{"sample_rate", features.sample_rate},
                   {"fft_size", features.fft_size},
                   {"hop", features.hop},
                   {"win_length", features.win_length},
                   {"n_mels", features.n_mels},
                   {"fmin", features.fmin},
                   {"fmax", features.fmax},
                   {"log_floor", features.log_floor}};
  return j.dump();
}

SpkembConfig SpkembConfig::FromJson(const std::string& json_text) {
  json j = json::parse(json_text);
  SpkembConfig cfg;
  cfg.context = j.at("context").get<int>();
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  const json& f = j.at("features");
  cfg.features.sample_rate = f.at("sample_rate").get<int>();
  cfg.features.fft_size = f.at("fft_size").get<int>();
  cfg.features.hop = f.at("hop").get<int>();
  cfg.features.win_length = f.at("win_length").get<int>();
  cfg.features.n_mels = f.at("n_mels").get<int>();
  cfg.features.fmin = f.at("fmin").get<double>();
  cfg.features.fmax = f.at("fmax").get<double>();
  cfg.features.log_floor = f.at("log_floor").get<double>();
  return cfg;
}

nn::Checkpoint TrainSpkemb(const corpus::CorpusManifest& manifest,
                           const SpkembConfig& cfg,
                           std::vector<TrainLogEntry>* log) {
  cfg.Validate();
  const std::vector<std::string> speakers = manifest.Speakers();
  Require(speakers.size() >= 2, "spkemb training needs at least 2 speakers");
  std::map<std::string, int> speaker_index;
  for (size_t i = 0; i < speakers.size(); ++i) {
    speaker_index[speakers[i]] = static_cast<int>(i);
  }

  // Features and corpus-level normalization.
  std::vector<dsp::MelSpectrogram> mels;
  mels.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    mels.push_back(LoadUtteranceMel(manifest, rec, cfg.features));
  }
  const MelStats stats = ComputeMelStats(mels);

  Rng rng(cfg.seed);
  ParamStore<float> store;
  Net net = BuildNet(store, cfg, &rng);
  std::copy(stats.mean.begin(), stats.mean.end(), net.mvn_mean->value.d.begin());
  std::copy(stats.istd.begin(), stats.istd.end(), net.mvn_istd->value.d.begin());
  Param<float>& head_w = store.Create(
      "head.w", cfg.embed_dim, static_cast<int64_t>(speakers.size()));
  Param<float>& head_b =
      store.Create("head.b", 1, static_cast<int64_t>(speakers.size()));
  nn::InitXavier(head_w.value, rng);

  std::vector<Mat<float>> inputs;
  std::vector<int> labels;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    inputs.push_back(SpliceFrames(ApplyMvn(mels[i], stats), cfg.context));
    labels.push_back(speaker_index.at(manifest.records[i].speaker_id));
  }

  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  nn::Adam<float> opt(acfg);
  std::vector<size_t> order(inputs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Deterministic shuffle.
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(i))]);
    }
    double epoch_loss = 0.0;
    int in_batch = 0;
    store.ZeroGrads();
    for (size_t idx : order) {
      Graph<float> g;
      auto emb = EmbedForward(g, net, inputs[idx]);
      auto logits = g.AddRow(g.MatMul(emb, g.Parameter(head_w)),
                             g.Parameter(head_b));
      auto loss = g.CrossEntropyRows(logits, {labels[idx]});
      epoch_loss += g.Value(loss).d[0];
      g.Backward(loss);
      if (++in_batch == cfg.batch_size) {
        if (!opt.Step(store)) {
          throw StageError("spkemb", "non-finite gradient at epoch " +
                                         std::to_string(epoch));
        }
        store.ZeroGrads();
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      opt.Step(store);
      store.ZeroGrads();
    }
    if (log) log->push_back({epoch + 1, epoch_loss / inputs.size()});
  }

  // The classifier head stays out of the checkpoint.
  nn::Checkpoint ckpt;
  ckpt.module_kind = "spkemb";
  ckpt.config_digest = cfg.Digest();
  ckpt.rng_seed = cfg.seed;
  ckpt.train_config_json = cfg.ToJson();
  nn::StoreToCheckpoint(store, &ckpt);
  std::vector<nn::CheckpointTensor> kept;
  for (auto& t : ckpt.tensors) {
    if (t.name.rfind("head.", 0) != 0) kept.push_back(std::move(t));
  }
  ckpt.tensors = std::move(kept);
  return ckpt;
}

SpkembScorer::SpkembScorer(const nn::Checkpoint& ckpt)
    : cfg_(SpkembConfig::FromJson(ckpt.train_config_json)) {
  nn::CheckCheckpoint(ckpt, "spkemb", cfg_.Digest());
  Net net = BuildNet(store_, cfg_, nullptr);
  nn::CheckpointToStore(ckpt, &store_);
  weights_ = net.weights;
  biases_ = net.biases;
  embed_w_ = net.embed_w;
  embed_b_ = net.embed_b;
  stats_.mean.assign(net.mvn_mean->value.d.begin(), net.mvn_mean->value.d.end());
  stats_.istd.assign(net.mvn_istd->value.d.begin(), net.mvn_istd->value.d.end());
}

std::vector<float> SpkembScorer::EmbedMel(const dsp::MelSpectrogram& mel) const {
  Require(mel.config_digest == cfg_.features.Digest(),
          "spkemb: mel config digest mismatch");
  Require(mel.frames > 0, "spkemb: empty mel");
  Graph<float> g;
  Net net;
  net.weights = weights_;
  net.biases = biases_;
  net.embed_w = embed_w_;
  net.embed_b = embed_b_;
  auto emb = EmbedForward(g, net, SpliceFrames(ApplyMvn(mel, stats_), cfg_.context));
  return g.Value(emb).d;
}

std::vector<float> SpkembScorer::EmbedWaveform(const Waveform& w) const {
  Waveform local = w;
  if (local.sample_rate != cfg_.features.sample_rate) {
    local = dsp::Resample(local, cfg_.features.sample_rate);
  }
  return EmbedMel(dsp::LogMel(local, cfg_.features));
}

std::vector<float> MeanEmbedding(const std::vector<std::vector<float>>& embs) {
  Require(!embs.empty(), "mean embedding of empty list");
  std::vector<float> mean(embs[0].size(), 0.0f);
  for (const auto& e : embs) {
    Require(e.size() == mean.size(), "embedding dimension mismatch");
    for (size_t i = 0; i < e.size(); ++i) mean[i] += e[i];
  }
  double norm = 0.0;
  for (auto& v : mean) {
    v /= static_cast<float>(embs.size());
    norm += static_cast<double>(v) * v;
  }
  norm = std::sqrt(norm);
  Require(norm > 1e-12, "mean embedding is the zero vector");
  for (auto& v : mean) v = static_cast<float>(v / norm);
  return mean;
}

SpeakerEmbedding ExtractEmbedding(const std::vector<Waveform>& waveforms,
                                  const SpkembScorer& scorer) {
  Require(!waveforms.empty(), "extract_embedding: empty waveform list");
  std::vector<std::vector<float>> embs;
  embs.reserve(waveforms.size());
  for (const auto& w : waveforms) embs.push_back(scorer.EmbedWaveform(w));
  SpeakerEmbedding out;
  out.vector = MeanEmbedding(embs);
  return out;
}

double Similarity(const std::vector<float>& e1, const std::vector<float>& e2) {
  Require(e1.size() == e2.size(), "similarity: dimension mismatch");
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (size_t i = 0; i < e1.size(); ++i) {
    dot += static_cast<double>(e1[i]) * e2[i];
    n1 += static_cast<double>(e1[i]) * e1[i];
    n2 += static_cast<double>(e2[i]) * e2[i];
  }
  Require(n1 > 1e-20 && n2 > 1e-20, "similarity: zero vector");
  return dot / std::sqrt(n1 * n2);
}

void SaveEmbeddingJson(const std::string& path, const SpeakerEmbedding& emb,
                       const std::string& speaker_id) {
  json j;
  j["speaker_id"] = speaker_id;
  j["dim"] = emb.vector.size();
  j["vector"] = emb.vector;
  j["source_utt_ids"] = emb.source_utt_ids;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("spkemb", "cannot write embedding: " + path);
  out << j.dump(2) << "\n";
}

SpeakerEmbedding LoadEmbeddingJson(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open embedding: " + path);
  json j = json::parse(in, nullptr, true);
  SpeakerEmbedding emb;
  emb.vector = j.at("vector").get<std::vector<float>>();
  if (j.contains("source_utt_ids")) {
    emb.source_utt_ids = j.at("source_utt_ids").get<std::vector<std::string>>();
  }
  return emb;
}

double EvaluateSpeakerAccuracy(const SpkembScorer& scorer,
                               const corpus::CorpusManifest& train,
                               const corpus::CorpusManifest& test) {
  std::map<std::string, std::vector<std::vector<float>>> by_speaker;
  for (const auto& rec : train.records) {
    by_speaker[rec.speaker_id].push_back(
        scorer.EmbedWaveform(ReadWavResampled(train, rec,
                                              scorer.config().features.sample_rate)));
  }
  std::vector<std::string> names;
  std::vector<std::vector<float>> centroids;
  for (const auto& [name, embs] : by_speaker) {
    names.push_back(name);
    centroids.push_back(MeanEmbedding(embs));
  }
  Require(!centroids.empty(), "no train speakers");
  int correct = 0;
  int total = 0;
  for (const auto& rec : test.records) {
    const std::vector<float> e = scorer.EmbedWaveform(
        ReadWavResampled(test, rec, scorer.config().features.sample_rate));
    size_t best = 0;
    double best_cos = -2.0;
    for (size_t i = 0; i < centroids.size(); ++i) {
      const double c = Similarity(e, centroids[i]);
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    if (names[best] == rec.speaker_id) ++correct;
    ++total;
  }
  Require(total > 0, "no test utterances");
  return static_cast<double>(correct) / total;
}

}  // namespace vcdesk::spkemb
