// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/tts.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <sstream>

#include "vcdesk/nn/adam.hpp"
#include "vcdesk/nn/graph.hpp"

namespace vcdesk::tts {

using nlohmann::json;
using nn::Graph;
using nn::Mat;
using nn::Param;
using nn::ParamStore;
using nn::TransformerStack;

namespace {

std::vector<std::string> DefaultVocab() {
  return corpus::SharedInventory().Symbols();
}

json FeaturesToJson(const dsp::FeatureConfig& f) {
  return json{{"sample_rate", f.sample_rate}, {"fft_size", f.fft_size},
              {"hop", f.hop},                 {"win_length", f.win_length},
              {"n_mels", f.n_mels},           {"fmin", f.fmin},
              {"fmax", f.fmax},               {"log_floor", f.log_floor}};
}

dsp::FeatureConfig FeaturesFromJson(const json& j) {
  dsp::FeatureConfig f;
  f.sample_rate = j.at("sample_rate").get<int>();
  f.fft_size = j.at("fft_size").get<int>();
  f.hop = j.at("hop").get<int>();
  f.win_length = j.at("win_length").get<int>();
  f.n_mels = j.at("n_mels").get<int>();
  f.fmin = j.at("fmin").get<double>();
  f.fmax = j.at("fmax").get<double>();
  f.log_floor = j.at("log_floor").get<double>();
  return f;
}

json TransformerToJson(const nn::TransformerConfig& t) {
  return json{{"layers", t.layers},
              {"heads", t.heads},
              {"d_model", t.d_model},
              {"d_ff", t.d_ff},
              {"dropout", t.dropout}};
}

nn::TransformerConfig TransformerFromJson(const json& j) {
  nn::TransformerConfig t;
  t.layers = j.at("layers").get<int>();
  t.heads = j.at("heads").get<int>();
  t.d_model = j.at("d_model").get<int>();
  t.d_ff = j.at("d_ff").get<int>();
  t.dropout = j.at("dropout").get<double>();
  return t;
}

// Guided-attention penalty matrix: 1 - exp(-(s/S - t/T)^2 / (2 sigma^2)).
Mat<float> GuidedAttentionWeights(int dec_len, int enc_len, double sigma) {
  Mat<float> w(dec_len, enc_len);
  for (int t = 0; t < dec_len; ++t) {
    for (int s = 0; s < enc_len; ++s) {
      const double dt = static_cast<double>(s) / enc_len -
                        static_cast<double>(t) / dec_len;
      w.at(t, s) = static_cast<float>(1.0 - std::exp(-dt * dt / (2 * sigma * sigma)));
    }
  }
  return w;
}

}  // namespace

void TtsConfig::Validate() const {
  features.Validate();
  Require(!vocab.empty(), "tts vocab is empty");
  encoder.Validate();
  decoder.Validate();
  Require(encoder.d_model == decoder.d_model, "encoder/decoder d_model differ");
  Require(spk_dim >= 1 && prenet_dim >= 1, "bad spk/prenet dims");
  Require(postnet_layers >= 1 && postnet_channels >= 1 && postnet_kernel % 2 == 1,
          "postnet needs >=1 layers and an odd kernel");
  Require(stop_weight > 0, "stop_weight must be positive");
  Require(guided_attention_weight >= 0 && guided_attention_sigma > 0,
          "bad guided attention settings");
  Require(epochs >= 1 && batch_size >= 1 && lr > 0, "bad training hyper");
}

std::string TtsConfig::Digest() const {
  std::ostringstream os;
  os << "tts;feat=" << features.Digest() << ";vocab=";
  for (const auto& v : vocab) os << v << ",";
  os << ";enc=" << encoder.layers << "x" << encoder.heads << "x"
     << encoder.d_model << "x" << encoder.d_ff << ";dec=" << decoder.layers
     << "x" << decoder.heads << "x" << decoder.d_model << "x" << decoder.d_ff
     << ";spk=" << spk_dim << ";pre=" << prenet_dim << ";post="
     << postnet_channels << "x" << postnet_layers << "x" << postnet_kernel;
  return HexDigest(Fnv1a(os.str()));
}

std::string TtsConfig::ToJson() const {
  json j;
  j["features"] = FeaturesToJson(features);
  j["vocab"] = vocab;
  j["encoder"] = TransformerToJson(encoder);
  j["decoder"] = TransformerToJson(decoder);
  j["spk_dim"] = spk_dim;
  j["prenet_dim"] = prenet_dim;
  j["postnet_channels"] = postnet_channels;
  j["postnet_layers"] = postnet_layers;
  j["postnet_kernel"] = postnet_kernel;
  j["stop_weight"] = stop_weight;
  j["guided_attention_weight"] = guided_attention_weight;
  j["guided_attention_sigma"] = guided_attention_sigma;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["seed"] = seed;
  j["freeze_embedding"] = freeze_embedding;
  return j.dump();
}

TtsConfig TtsConfig::FromJson(const std::string& json_text) {
  json j = json::parse(json_text);
  TtsConfig cfg;
  cfg.features = FeaturesFromJson(j.at("features"));
  cfg.vocab = j.at("vocab").get<std::vector<std::string>>();
  cfg.encoder = TransformerFromJson(j.at("encoder"));
  cfg.decoder = TransformerFromJson(j.at("decoder"));
  cfg.spk_dim = j.at("spk_dim").get<int>();
  cfg.prenet_dim = j.at("prenet_dim").get<int>();
  cfg.postnet_channels = j.at("postnet_channels").get<int>();
  cfg.postnet_layers = j.at("postnet_layers").get<int>();
  cfg.postnet_kernel = j.at("postnet_kernel").get<int>();
  cfg.stop_weight = j.at("stop_weight").get<double>();
  cfg.guided_attention_weight = j.at("guided_attention_weight").get<double>();
  cfg.guided_attention_sigma = j.at("guided_attention_sigma").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.freeze_embedding = j.at("freeze_embedding").get<bool>();
  return cfg;
}

void SynthesisConfig::Validate() const {
  Require(stop_threshold > 0.0 && stop_threshold < 1.0,
          "stop_threshold must be in (0,1)");
  Require(max_frames_per_token >= 1, "max_frames_per_token must be >= 1");
}

// ---------------- model ----------------

struct TtsModel::Net {
  ParamStore<float> store;
  std::unique_ptr<TransformerStack<float>> encoder;
  std::unique_ptr<TransformerStack<float>> decoder;
  Param<float>* emb = nullptr;  // the shared token table
  Param<float>*spk_w = nullptr, *spk_b = nullptr;
  Param<float>*pre1_w = nullptr, *pre1_b = nullptr;
  Param<float>*pre2_w = nullptr, *pre2_b = nullptr;
  Param<float>*mel_w = nullptr, *mel_b = nullptr;
  Param<float>*stop_w = nullptr, *stop_b = nullptr;
  std::vector<Param<float>*> post_w;
  std::vector<Param<float>*> post_b;
  Param<float>*mvn_mean = nullptr, *mvn_istd = nullptr;

  void Build(const TtsConfig& cfg, Rng* rng) {
    const int d = cfg.encoder.d_model;
    const int mel_dim = cfg.features.n_mels;
    Rng dummy(0);
    Rng& r = rng ? *rng : dummy;
    emb = &store.Create("emb.table", static_cast<int64_t>(cfg.vocab.size()), d);
    if (rng) nn::InitEmbedding(emb->value, r);
    encoder = std::make_unique<TransformerStack<float>>(
        store, "enc", cfg.encoder, TransformerStack<float>::Mode::kEncoder, r);
    spk_w = &store.Create("spk.w", cfg.spk_dim, d);
    if (rng) nn::InitXavier(spk_w->value, r);
    spk_b = &store.Create("spk.b", 1, d);
    pre1_w = &store.Create("prenet.l0.w", mel_dim, cfg.prenet_dim);
    if (rng) nn::InitXavier(pre1_w->value, r);
    pre1_b = &store.Create("prenet.l0.b", 1, cfg.prenet_dim);
    pre2_w = &store.Create("prenet.l1.w", cfg.prenet_dim, d);
    if (rng) nn::InitXavier(pre2_w->value, r);
    pre2_b = &store.Create("prenet.l1.b", 1, d);
    decoder = std::make_unique<TransformerStack<float>>(
        store, "dec", cfg.decoder, TransformerStack<float>::Mode::kDecoder, r);
    mel_w = &store.Create("mel.w", d, mel_dim);
    if (rng) nn::InitXavier(mel_w->value, r);
    mel_b = &store.Create("mel.b", 1, mel_dim);
    stop_w = &store.Create("stop.w", d, 1);
    if (rng) nn::InitXavier(stop_w->value, r);
    stop_b = &store.Create("stop.b", 1, 1);
    int in_ch = mel_dim;
    for (int l = 0; l < cfg.postnet_layers; ++l) {
      const bool last = l == cfg.postnet_layers - 1;
      const int out_ch = last ? mel_dim : cfg.postnet_channels;
      Param<float>& w = store.Create(
          "postnet.l" + std::to_string(l) + ".w",
          static_cast<int64_t>(cfg.postnet_kernel) * in_ch, out_ch);
      if (rng) nn::InitXavier(w.value, r);
      Param<float>& b =
          store.Create("postnet.l" + std::to_string(l) + ".b", 1, out_ch);
      post_w.push_back(&w);
      post_b.push_back(&b);
      in_ch = out_ch;
    }
    mvn_mean = &store.Create("mvn.mean", 1, mel_dim);
    mvn_istd = &store.Create("mvn.istd", 1, mel_dim);
    mvn_mean->trainable = false;
    mvn_istd->trainable = false;
  }

  // Token encoder output with the projected speaker vector added everywhere.
  Graph<float>::Var EncodeTokens(Graph<float>& g, const TtsConfig& cfg,
                                 const std::vector<int>& token_ids,
                                 const std::vector<float>& spk) {
    auto e = g.EmbedLookup(g.Parameter(*emb), token_ids);
    e = g.Scale(e, static_cast<float>(std::sqrt(double(cfg.encoder.d_model))));
    auto memory = encoder->Apply(g, e);
    Mat<float> s(1, cfg.spk_dim);
    Require(static_cast<int>(spk.size()) == cfg.spk_dim,
            "speaker embedding dim mismatch");
    for (int i = 0; i < cfg.spk_dim; ++i) s.at(0, i) = spk[i];
    auto proj = g.AddRow(g.MatMul(g.Input(s), g.Parameter(*spk_w)),
                         g.Parameter(*spk_b));
    return g.AddRow(memory, proj);
  }

  Graph<float>::Var Prenet(Graph<float>& g, Graph<float>::Var frames) {
    auto h = g.Relu(g.AddRow(g.MatMul(frames, g.Parameter(*pre1_w)),
                             g.Parameter(*pre1_b)));
    return g.Relu(g.AddRow(g.MatMul(h, g.Parameter(*pre2_w)),
                           g.Parameter(*pre2_b)));
  }

  Graph<float>::Var Postnet(Graph<float>& g, Graph<float>::Var mel,
                            const TtsConfig& cfg) {
    auto h = mel;
    for (size_t l = 0; l < post_w.size(); ++l) {
      h = g.Conv1d(h, g.Parameter(*post_w[l]), g.Parameter(*post_b[l]),
                   cfg.postnet_kernel, 1, false);
      if (l + 1 < post_w.size()) h = g.Tanh(h);
    }
    return h;
  }

  MelStats Stats() const {
    MelStats s;
    s.mean.assign(mvn_mean->value.d.begin(), mvn_mean->value.d.end());
    s.istd.assign(mvn_istd->value.d.begin(), mvn_istd->value.d.end());
    return s;
  }
};

TtsModel::TtsModel(const TtsConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  if (cfg_.vocab.empty()) cfg_.vocab = DefaultVocab();
  cfg_.Validate();
  Rng rng(init_seed);
  net_ = std::make_shared<Net>();
  net_->Build(cfg_, &rng);
  stats_.mean.assign(cfg_.features.n_mels, 0.0f);
  stats_.istd.assign(cfg_.features.n_mels, 1.0f);
}

TtsModel::TtsModel(const nn::Checkpoint& ckpt)
    : cfg_(TtsConfig::FromJson(ckpt.train_config_json)) {
  nn::CheckCheckpoint(ckpt, "tts", cfg_.Digest());
  net_ = std::make_shared<Net>();
  net_->Build(cfg_, nullptr);
  nn::CheckpointToStore(ckpt, &net_->store);
  stats_ = net_->Stats();
}

nn::Checkpoint TtsModel::ToCheckpoint(const std::string& extra_log_json) const {
  std::copy(stats_.mean.begin(), stats_.mean.end(),
            net_->mvn_mean->value.d.begin());
  std::copy(stats_.istd.begin(), stats_.istd.end(),
            net_->mvn_istd->value.d.begin());
  nn::Checkpoint ckpt;
  ckpt.module_kind = "tts";
  ckpt.config_digest = cfg_.Digest();
  ckpt.rng_seed = cfg_.seed;
  json j = json::parse(cfg_.ToJson());
  if (!extra_log_json.empty()) j["train_log"] = json::parse(extra_log_json);
  ckpt.train_config_json = j.dump();
  nn::StoreToCheckpoint(net_->store, &ckpt);
  return ckpt;
}

void TtsModel::set_mel_stats(const MelStats& stats) {
  Require(stats.mean.size() == static_cast<size_t>(cfg_.features.n_mels),
          "mel stats dim mismatch");
  stats_ = stats;
  std::copy(stats.mean.begin(), stats.mean.end(), net_->mvn_mean->value.d.begin());
  std::copy(stats.istd.begin(), stats.istd.end(), net_->mvn_istd->value.d.begin());
}

void TtsModel::set_freeze_embedding(bool freeze) {
  net_->emb->trainable = !freeze;
}

const Mat<float>& TtsModel::embedding_table() const { return net_->emb->value; }

ParamStore<float>& TtsModel::store() { return net_->store; }

TtsLossBreakdown TtsModel::ForwardLosses(const dsp::MelSpectrogram& target_mel,
                                         const std::vector<std::string>& tokens,
                                         const std::vector<float>& spk,
                                         Graph<float>* graph_out,
                                         Graph<float>::Var* loss_out) {
  Require(target_mel.config_digest == cfg_.features.Digest(),
          "tts: mel config digest mismatch");
  Require(!tokens.empty(), "tts: empty token sequence");
  Require(target_mel.frames >= 2, "tts: utterance too short");
  std::vector<int> ids;
  for (const auto& t : tokens) {
    auto it = std::find(cfg_.vocab.begin(), cfg_.vocab.end(), t);
    Require(it != cfg_.vocab.end(), "token '" + t + "' not in tts vocabulary");
    ids.push_back(static_cast<int>(it - cfg_.vocab.begin()));
  }

  static thread_local Graph<float> scratch;  // placeholder, never used
  Graph<float> local;
  Graph<float>& g = graph_out ? *graph_out : local;

  const Mat<float> norm_target = ApplyMvn(target_mel, stats_);
  const int frames = target_mel.frames;
  // Decoder input: target shifted right by one frame, zeros first.
  Mat<float> shifted(frames, cfg_.features.n_mels);
  for (int t = 1; t < frames; ++t) {
    for (int m = 0; m < cfg_.features.n_mels; ++m) {
      shifted.at(t, m) = norm_target.at(t - 1, m);
    }
  }

  auto memory = net_->EncodeTokens(g, cfg_, ids, spk);
  auto dec_in = net_->Prenet(g, g.Input(shifted));
  TransformerStack<float>::AttnRecord attn;
  auto h = net_->decoder->Apply(g, dec_in, memory, nullptr, &attn);
  auto mel_before = g.AddRow(g.MatMul(h, g.Parameter(*net_->mel_w)),
                             g.Parameter(*net_->mel_b));
  auto stop_logits = g.AddRow(g.MatMul(h, g.Parameter(*net_->stop_w)),
                              g.Parameter(*net_->stop_b));
  auto mel_after = g.Add(mel_before, net_->Postnet(g, mel_before, cfg_));

  auto l1_before = g.L1Loss(mel_before, norm_target);
  auto l1_after = g.L1Loss(mel_after, norm_target);

  Mat<float> stop_target(frames, 1);
  Mat<float> stop_weights(frames, 1);
  for (int t = 0; t < frames; ++t) {
    stop_target.at(t, 0) = t == frames - 1 ? 1.0f : 0.0f;
    stop_weights.at(t, 0) =
        t == frames - 1 ? static_cast<float>(cfg_.stop_weight) : 1.0f;
  }
  auto stop_bce = g.BceLogits(stop_logits, stop_target, &stop_weights);

  Graph<float>::Var loss = g.Add(l1_before, l1_after);
  loss = g.Add(loss, stop_bce);
  TtsLossBreakdown out;
  if (cfg_.guided_attention_weight > 0 && !attn.cross_probs.empty()) {
    const Mat<float> w = GuidedAttentionWeights(
        frames, static_cast<int>(ids.size()), cfg_.guided_attention_sigma);
    Graph<float>::Var ga{};
    for (auto probs : attn.cross_probs) {
      auto term = g.MeanAll(g.Mul(probs, g.Input(w)));
      ga = ga.valid() ? g.Add(ga, term) : term;
    }
    ga = g.Scale(ga, static_cast<float>(cfg_.guided_attention_weight /
                                        attn.cross_probs.size()));
    out.guided_attention = g.Value(ga).d[0];
    loss = g.Add(loss, ga);
  }

  out.mel_l1_before = g.Value(l1_before).d[0];
  out.mel_l1 = g.Value(l1_after).d[0];
  out.stop_bce = g.Value(stop_bce).d[0];
  out.total = g.Value(loss).d[0];
  if (loss_out) *loss_out = loss;
  return out;
}

SynthesisResult TtsModel::Synthesize(const std::vector<std::string>& tokens,
                                     const std::vector<float>& spk,
                                     const SynthesisConfig& scfg) {
  scfg.Validate();
  Require(!tokens.empty(), "tts: empty token sequence");
  std::vector<int> ids;
  for (const auto& t : tokens) {
    auto it = std::find(cfg_.vocab.begin(), cfg_.vocab.end(), t);
    Require(it != cfg_.vocab.end(), "token '" + t + "' not in tts vocabulary");
    ids.push_back(static_cast<int>(it - cfg_.vocab.begin()));
  }
  const int max_frames =
      scfg.max_frames_per_token * static_cast<int>(tokens.size());
  const int mel_dim = cfg_.features.n_mels;

  SynthesisResult result;
  result.stopped_by_cap = true;
  Mat<float> history(max_frames + 1, mel_dim);  // row 0 stays zero
  int emitted = 0;
  Mat<float> mel_before_full;
  for (int step = 0; step < max_frames; ++step) {
    Graph<float> g;
    auto memory = net_->EncodeTokens(g, cfg_, ids, spk);
    Mat<float> dec_rows(step + 1, mel_dim);
    for (int t = 0; t <= step; ++t) {
      for (int m = 0; m < mel_dim; ++m) dec_rows.at(t, m) = history.at(t, m);
    }
    auto h = net_->decoder->Apply(g, net_->Prenet(g, g.Input(dec_rows)), memory);
    auto mel_before = g.AddRow(g.MatMul(h, g.Parameter(*net_->mel_w)),
                               g.Parameter(*net_->mel_b));
    auto stop_logits = g.AddRow(g.MatMul(h, g.Parameter(*net_->stop_w)),
                                g.Parameter(*net_->stop_b));
    const Mat<float>& mb = g.Value(mel_before);
    const int64_t last = mb.rows - 1;
    for (int m = 0; m < mel_dim; ++m) {
      history.at(step + 1, m) = mb.at(last, m);
    }
    emitted = step + 1;
    const float logit = g.Value(stop_logits).at(last, 0);
    const double stop_prob = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
    if (stop_prob > scfg.stop_threshold) {
      result.stopped_by_cap = false;
      break;
    }
  }

  // Post-net refinement over the whole sequence, then de-normalize.
  Graph<float> g;
  Mat<float> mel_before(emitted, mel_dim);
  for (int t = 0; t < emitted; ++t) {
    for (int m = 0; m < mel_dim; ++m) mel_before.at(t, m) = history.at(t + 1, m);
  }
  auto refined = g.Add(g.Input(mel_before),
                       net_->Postnet(g, g.Input(mel_before), cfg_));
  const Mat<float>& out = g.Value(refined);
  dsp::MelSpectrogram mel;
  mel.frames = emitted;
  mel.n_mels = mel_dim;
  mel.config_digest = cfg_.features.Digest();
  mel.values.resize(static_cast<size_t>(emitted) * mel_dim);
  for (int t = 0; t < emitted; ++t) {
    for (int m = 0; m < mel_dim; ++m) {
      mel.at(t, m) = out.at(t, m) / stats_.istd[m] + stats_.mean[m];
    }
  }
  result.mel = std::move(mel);
  result.stop_frame = emitted;
  return result;
}

// ---------------- training ----------------

namespace {

struct TtsExample {
  dsp::MelSpectrogram mel;
  std::vector<std::string> tokens;
  std::vector<float> spk;
  std::string utt_id;
};

std::map<std::string, std::vector<float>> SpeakerEmbeddings(
    const corpus::CorpusManifest& manifest, const spkemb::SpkembScorer& scorer) {
  std::map<std::string, std::vector<std::vector<float>>> per_speaker;
  for (const auto& rec : manifest.records) {
    Waveform w = ReadWavResampled(manifest, rec,
                                  scorer.config().features.sample_rate);
    per_speaker[rec.speaker_id].push_back(scorer.EmbedWaveform(w));
  }
  std::map<std::string, std::vector<float>> out;
  for (const auto& [spk, embs] : per_speaker) {
    out[spk] = spkemb::MeanEmbedding(embs);
  }
  return out;
}

std::vector<TtsTrainLogEntry> RunTraining(TtsModel& model,
                                          std::vector<TtsExample>& examples,
                                          const std::vector<TtsExample>& heldout,
                                          int epochs, int batch_size, double lr,
                                          uint64_t seed) {
  nn::AdamConfig acfg;
  acfg.lr = lr;
  nn::Adam<float> opt(acfg);
  Rng rng(seed);
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<TtsTrainLogEntry> log;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(i))]);
    }
    double total = 0.0;
    int in_batch = 0;
    model.store().ZeroGrads();
    for (size_t idx : order) {
      Graph<float> g;
      Graph<float>::Var loss;
      TtsLossBreakdown br = model.ForwardLosses(
          examples[idx].mel, examples[idx].tokens, examples[idx].spk, &g, &loss);
      if (!std::isfinite(br.total)) {
        throw StageError("tts", "non-finite loss at epoch " + std::to_string(epoch));
      }
      total += br.total;
      g.Backward(loss);
      if (++in_batch == batch_size) {
        opt.Step(model.store());
        model.store().ZeroGrads();
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      opt.Step(model.store());
      model.store().ZeroGrads();
    }
    TtsTrainLogEntry entry;
    entry.epoch = epoch + 1;
    entry.train_total = total / examples.size();
    entry.heldout_mel_l1 = std::numeric_limits<double>::quiet_NaN();
    if (!heldout.empty()) {
      double hl = 0.0;
      for (const auto& ex : heldout) {
        hl += model.ForwardLosses(ex.mel, ex.tokens, ex.spk).mel_l1;
      }
      entry.heldout_mel_l1 = hl / heldout.size();
    }
    log.push_back(entry);
  }
  return log;
}

std::string LogToJson(const std::vector<TtsTrainLogEntry>& log) {
  json arr = json::array();
  for (const auto& e : log) {
    json je;
    je["epoch"] = e.epoch;
    je["train_total"] = e.train_total;
    if (std::isfinite(e.heldout_mel_l1)) je["heldout_mel_l1"] = e.heldout_mel_l1;
    arr.push_back(je);
  }
  return arr.dump();
}

}  // namespace

nn::Checkpoint PretrainTts(const corpus::CorpusManifest& manifest,
                           const nn::Checkpoint& spkemb_ckpt, const TtsConfig& cfg_in,
                           const corpus::CorpusManifest* heldout,
                           std::vector<TtsTrainLogEntry>* log) {
  TtsConfig cfg = cfg_in;
  if (cfg.vocab.empty()) cfg.vocab = DefaultVocab();
  cfg.Validate();
  Require(!manifest.records.empty(), "tts pretraining manifest is empty");
  {
    std::set<std::string> langs;
    for (const auto& r : manifest.records) langs.insert(r.language);
    Require(langs.size() >= 2, "tts pretraining manifest must be bilingual");
  }
  spkemb::SpkembScorer scorer(spkemb_ckpt);
  const auto embeddings = SpeakerEmbeddings(manifest, scorer);

  std::vector<dsp::MelSpectrogram> mels;
  for (const auto& rec : manifest.records) {
    mels.push_back(LoadUtteranceMel(manifest, rec, cfg.features));
  }
  TtsModel model(cfg, cfg.seed);
  model.set_mel_stats(ComputeMelStats(mels));

  std::vector<TtsExample> examples;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    TtsExample ex;
    ex.mel = mels[i];
    ex.tokens = corpus::SplitTokens(manifest.records[i].token_string);
    ex.spk = embeddings.at(manifest.records[i].speaker_id);
    ex.utt_id = manifest.records[i].utt_id;
    examples.push_back(std::move(ex));
  }
  std::vector<TtsExample> heldout_examples;
  if (heldout) {
    for (const auto& rec : heldout->records) {
      auto it = embeddings.find(rec.speaker_id);
      if (it == embeddings.end()) continue;  // unseen speaker: skip in eval
      TtsExample ex;
      ex.mel = LoadUtteranceMel(*heldout, rec, cfg.features);
      ex.tokens = corpus::SplitTokens(rec.token_string);
      ex.spk = it->second;
      ex.utt_id = rec.utt_id;
      heldout_examples.push_back(std::move(ex));
    }
  }

  auto train_log = RunTraining(model, examples, heldout_examples, cfg.epochs,
                               cfg.batch_size, cfg.lr, cfg.seed);
  if (log) *log = train_log;
  return model.ToCheckpoint(LogToJson(train_log));
}

nn::Checkpoint FinetuneTts(const nn::Checkpoint& pretrained,
                           const corpus::CorpusManifest& target_manifest,
                           const std::vector<float>& spk_embedding,
                           const FinetuneOptions& opts,
                           std::vector<TtsTrainLogEntry>* log) {
  Require(!target_manifest.records.empty(), "finetune manifest is empty");
  Require(target_manifest.Speakers().size() == 1,
          "finetune manifest must contain exactly one speaker");
  TtsModel model(pretrained);  // validates kind and config digest
  model.set_freeze_embedding(opts.freeze_embedding);

  std::vector<TtsExample> examples;
  for (const auto& rec : target_manifest.records) {
    TtsExample ex;
    ex.mel = LoadUtteranceMel(target_manifest, rec, model.config().features);
    ex.tokens = corpus::SplitTokens(rec.token_string);
    ex.spk = spk_embedding;
    ex.utt_id = rec.utt_id;
    examples.push_back(std::move(ex));
  }
  auto train_log = RunTraining(model, examples, {}, opts.epochs, opts.batch_size,
                               opts.lr, opts.seed);
  if (log) *log = train_log;
  // Frozen table stays frozen in the saved config snapshot.
  TtsConfig cfg = model.config();
  nn::Checkpoint out = model.ToCheckpoint(LogToJson(train_log));
  json j = json::parse(out.train_config_json);
  j["freeze_embedding"] = opts.freeze_embedding;
  out.train_config_json = j.dump();
  return out;
}

std::vector<UtteranceEval> TeacherForcedEval(
    const corpus::CorpusManifest& manifest, TtsModel& model,
    const std::vector<float>& spk_embedding) {
  std::vector<UtteranceEval> out;
  for (const auto& rec : manifest.records) {
    const dsp::MelSpectrogram mel =
        LoadUtteranceMel(manifest, rec, model.config().features);
    TtsLossBreakdown br = model.ForwardLosses(
        mel, corpus::SplitTokens(rec.token_string), spk_embedding);
    out.push_back({rec.utt_id, br.mel_l1, br.stop_bce});
  }
  return out;
}

std::vector<UtteranceEval> TeacherForcedEvalMultiSpeaker(
    const corpus::CorpusManifest& manifest, TtsModel& model,
    const spkemb::SpkembScorer& scorer) {
  const auto embeddings = SpeakerEmbeddings(manifest, scorer);
  std::vector<UtteranceEval> out;
  for (const auto& rec : manifest.records) {
    const dsp::MelSpectrogram mel =
        LoadUtteranceMel(manifest, rec, model.config().features);
    TtsLossBreakdown br = model.ForwardLosses(
        mel, corpus::SplitTokens(rec.token_string), embeddings.at(rec.speaker_id));
    out.push_back({rec.utt_id, br.mel_l1, br.stop_bce});
  }
  return out;
}

}  // namespace vcdesk::tts
