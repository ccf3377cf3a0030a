// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/asr.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "vcdesk/nn/adam.hpp"
#include "vcdesk/nn/graph.hpp"

namespace vcdesk::asr {

using nlohmann::json;
using nn::Graph;
using nn::LogSumExp;
using nn::Mat;
using nn::Param;
using nn::ParamStore;
using nn::TransformerStack;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string> DefaultVocab() {
  return corpus::SharedInventory().Symbols();
}

// Consecutive-frame stacking for time subsampling; the tail frame repeats.
Mat<float> StackFrames(const Mat<float>& x, int stack) {
  if (stack <= 1) return x;
  const int64_t t_out = (x.rows + stack - 1) / stack;
  Mat<float> out(t_out, x.cols * stack);
  for (int64_t t = 0; t < t_out; ++t) {
    for (int s = 0; s < stack; ++s) {
      const int64_t src = std::min(t * stack + s, x.rows - 1);
      for (int64_t c = 0; c < x.cols; ++c) {
        out.at(t, static_cast<int64_t>(s) * x.cols + c) = x.at(src, c);
      }
    }
  }
  return out;
}

struct AsrNet {
  ParamStore<float> store;
  std::unique_ptr<TransformerStack<float>> encoder;
  std::unique_ptr<TransformerStack<float>> decoder;
  Param<float>*in_w = nullptr, *in_b = nullptr;
  Param<float>*ctc_w = nullptr, *ctc_b = nullptr;
  Param<float>* emb = nullptr;
  Param<float>*out_w = nullptr, *out_b = nullptr;
  Param<float>*mvn_mean = nullptr, *mvn_istd = nullptr;

  void Build(const AsrConfig& cfg, Rng* rng) {
    const int d = cfg.encoder.d_model;
    const int64_t n_tokens = static_cast<int64_t>(cfg.vocab.size());
    Rng dummy(0);
    Rng& r = rng ? *rng : dummy;
    in_w = &store.Create("enc.in.w",
                         static_cast<int64_t>(cfg.features.n_mels) * cfg.frame_stack,
                         d);
    if (rng) nn::InitXavier(in_w->value, r);
    in_b = &store.Create("enc.in.b", 1, d);
    encoder = std::make_unique<TransformerStack<float>>(
        store, "enc", cfg.encoder, TransformerStack<float>::Mode::kEncoder, r);
    ctc_w = &store.Create("ctc.w", d, n_tokens + 1);  // + blank
    if (rng) nn::InitXavier(ctc_w->value, r);
    ctc_b = &store.Create("ctc.b", 1, n_tokens + 1);
    emb = &store.Create("dec.emb", n_tokens + 1, d);  // + sos
    if (rng) nn::InitEmbedding(emb->value, r);
    decoder = std::make_unique<TransformerStack<float>>(
        store, "dec", cfg.decoder, TransformerStack<float>::Mode::kDecoder, r);
    out_w = &store.Create("dec.out.w", d, n_tokens + 1);  // + eos
    if (rng) nn::InitXavier(out_w->value, r);
    out_b = &store.Create("dec.out.b", 1, n_tokens + 1);
    mvn_mean = &store.Create("mvn.mean", 1, cfg.features.n_mels);
    mvn_istd = &store.Create("mvn.istd", 1, cfg.features.n_mels);
    mvn_mean->trainable = false;
    mvn_istd->trainable = false;
  }

  Graph<float>::Var Encode(Graph<float>& g, const Mat<float>& stacked) {
    auto h = g.AddRow(g.MatMul(g.Input(stacked), g.Parameter(*in_w)),
                      g.Parameter(*in_b));
    return encoder->Apply(g, h);
  }

  Graph<float>::Var CtcLogProbs(Graph<float>& g, Graph<float>::Var memory) {
    return g.LogSoftmaxRows(g.AddRow(g.MatMul(memory, g.Parameter(*ctc_w)),
                                     g.Parameter(*ctc_b)));
  }

  Graph<float>::Var DecoderLogits(Graph<float>& g, Graph<float>::Var memory,
                                  const std::vector<int>& input_ids,
                                  const AsrConfig& cfg) {
    auto e = g.EmbedLookup(g.Parameter(*emb), input_ids);
    e = g.Scale(e, static_cast<float>(std::sqrt(double(cfg.decoder.d_model))));
    auto h = decoder->Apply(g, e, memory);
    return g.AddRow(g.MatMul(h, g.Parameter(*out_w)), g.Parameter(*out_b));
  }

  MelStats Stats() const {
    MelStats s;
    s.mean.assign(mvn_mean->value.d.begin(), mvn_mean->value.d.end());
    s.istd.assign(mvn_istd->value.d.begin(), mvn_istd->value.d.end());
    return s;
  }
};

struct UttExample {
  Mat<float> stacked;  // normalized + frame-stacked features
  std::vector<int> label_ids;
};

// CTC loss + attention CE on one utterance; returns the hybrid loss node.
Graph<float>::Var UtteranceLoss(Graph<float>& g, AsrNet& net,
                                const AsrConfig& cfg, const UttExample& ex,
                                double* ctc_out = nullptr,
                                double* att_out = nullptr) {
  auto memory = net.Encode(g, ex.stacked);
  auto ctc = g.Ctc(net.CtcLogProbs(g, memory), ex.label_ids, cfg.blank_id());
  std::vector<int> dec_in = {cfg.sos_id()};
  dec_in.insert(dec_in.end(), ex.label_ids.begin(), ex.label_ids.end());
  std::vector<int> dec_tgt = ex.label_ids;
  dec_tgt.push_back(cfg.eos_id());
  auto att = g.CrossEntropyRows(net.DecoderLogits(g, memory, dec_in, cfg), dec_tgt);
  if (ctc_out) *ctc_out = g.Value(ctc).d[0];
  if (att_out) *att_out = g.Value(att).d[0];
  return g.Add(g.Scale(ctc, static_cast<float>(cfg.ctc_weight)),
               g.Scale(att, static_cast<float>(1.0 - cfg.ctc_weight)));
}

std::vector<int> TokensToIds(const std::vector<std::string>& tokens,
                             const std::vector<std::string>& vocab) {
  std::vector<int> ids;
  for (const auto& t : tokens) {
    auto it = std::find(vocab.begin(), vocab.end(), t);
    Require(it != vocab.end(), "token '" + t + "' not in recognizer vocabulary");
    ids.push_back(static_cast<int>(it - vocab.begin()));
  }
  return ids;
}

}  // namespace

void AsrConfig::Validate() const {
  features.Validate();
  Require(!vocab.empty(), "asr vocab is empty");
  Require(ctc_weight >= 0.0 && ctc_weight <= 1.0, "ctc_weight must be in [0,1]");
  encoder.Validate();
  decoder.Validate();
  Require(encoder.d_model == decoder.d_model, "encoder/decoder d_model differ");
  Require(frame_stack >= 1, "frame_stack must be >= 1");
  Require(epochs >= 1 && batch_size >= 1 && lr > 0, "bad training hyper");
}

std::string AsrConfig::Digest() const {
  std::ostringstream os;
  os << "asr;feat=" << features.Digest() << ";vocab=";
  for (const auto& v : vocab) os << v << ",";
  os << ";enc=" << encoder.layers << "x" << encoder.heads << "x"
     << encoder.d_model << "x" << encoder.d_ff << ";dec=" << decoder.layers
     << "x" << decoder.heads << "x" << decoder.d_model << "x" << decoder.d_ff
     << ";stack=" << frame_stack;
  return HexDigest(Fnv1a(os.str()));
}

namespace {
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
}  // namespace

std::string AsrConfig::ToJson() const {
  json j;
  j["features"] = FeaturesToJson(features);
  j["vocab"] = vocab;
  j["ctc_weight"] = ctc_weight;
  j["encoder"] = TransformerToJson(encoder);
  j["decoder"] = TransformerToJson(decoder);
  j["frame_stack"] = frame_stack;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["seed"] = seed;
  return j.dump();
}

AsrConfig AsrConfig::FromJson(const std::string& json_text) {
  json j = json::parse(json_text);
  AsrConfig cfg;
  cfg.features = FeaturesFromJson(j.at("features"));
  cfg.vocab = j.at("vocab").get<std::vector<std::string>>();
  cfg.ctc_weight = j.at("ctc_weight").get<double>();
  cfg.encoder = TransformerFromJson(j.at("encoder"));
  cfg.decoder = TransformerFromJson(j.at("decoder"));
  cfg.frame_stack = j.at("frame_stack").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

void DecodeConfig::Validate() const {
  Require(beam_size >= 1, "beam_size must be >= 1");
  Require(ctc_decode_weight >= 0.0 && ctc_decode_weight <= 1.0,
          "ctc_decode_weight must be in [0,1]");
  Require(lm_weight >= 0.0, "lm_weight must be >= 0");
  Require(max_output_ratio > 0.0, "max_output_ratio must be > 0");
}

double HybridLoss(double l_ctc, double l_att, double lambda) {
  Require(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0,1]");
  return lambda * l_ctc + (1.0 - lambda) * l_att;
}

// ---------------- n-gram LM ----------------

NGramLm::NGramLm(int order, int vocab_size)
    : order_(order), vocab_size_(vocab_size) {
  Require(order >= 1 && order <= 3, "lm order must be 1, 2, or 3");
  Require(vocab_size >= 1, "lm vocab_size must be >= 1");
}

std::string NGramLm::ContextKey(const std::vector<int>& prefix) const {
  std::string key;
  for (int i = order_ - 1; i >= 1; --i) {
    const int64_t pos = static_cast<int64_t>(prefix.size()) - i;
    key += (pos >= 0 ? std::to_string(prefix[pos]) : "B");
    key += ':';
  }
  return key;
}

void NGramLm::Add(const std::vector<int>& sequence) {
  std::vector<int> prefix;
  for (int tok : sequence) {
    Require(tok >= 0 && tok < vocab_size_, "lm: token id out of range");
    const std::string key = ContextKey(prefix);
    counts_[key][tok] += 1;
    totals_[key] += 1;
    prefix.push_back(tok);
  }
}

double NGramLm::Score(const std::vector<int>& prefix, int next) const {
  Require(next >= 0 && next < vocab_size_, "lm: token id out of range");
  const std::string key = ContextKey(prefix);
  int64_t count = 0, total = 0;
  auto it = totals_.find(key);
  if (it != totals_.end()) {
    total = it->second;
    auto jt = counts_.at(key).find(next);
    if (jt != counts_.at(key).end()) count = jt->second;
  }
  return std::log(static_cast<double>(count + 1) /
                  static_cast<double>(total + vocab_size_));
}

NGramLm NGramLm::Train(const corpus::CorpusManifest& manifest,
                       const std::vector<std::string>& vocab, int order) {
  NGramLm lm(order, static_cast<int>(vocab.size()));
  for (const auto& rec : manifest.records) {
    lm.Add(TokensToIds(corpus::SplitTokens(rec.token_string), vocab));
  }
  return lm;
}

std::string NGramLm::ToJson() const {
  json j;
  j["order"] = order_;
  j["vocab_size"] = vocab_size_;
  json counts = json::object();
  for (const auto& [key, m] : counts_) {
    json row = json::object();
    for (const auto& [tok, c] : m) row[std::to_string(tok)] = c;
    counts[key] = row;
  }
  j["counts"] = counts;
  return j.dump();
}

NGramLm NGramLm::FromJson(const std::string& json_text) {
  json j = json::parse(json_text);
  NGramLm lm(j.at("order").get<int>(), j.at("vocab_size").get<int>());
  for (const auto& [key, row] : j.at("counts").items()) {
    for (const auto& [tok, c] : row.items()) {
      lm.counts_[key][std::stoi(tok)] = c.get<int64_t>();
      lm.totals_[key] += c.get<int64_t>();
    }
  }
  return lm;
}

// ---------------- training ----------------

nn::Checkpoint TrainAsr(const corpus::CorpusManifest& train, const AsrConfig& cfg_in,
                        const corpus::CorpusManifest* heldout,
                        std::vector<AsrTrainLogEntry>* log) {
  AsrConfig cfg = cfg_in;
  if (cfg.vocab.empty()) cfg.vocab = DefaultVocab();
  cfg.Validate();
  Require(!train.records.empty(), "asr training manifest is empty");

  std::vector<dsp::MelSpectrogram> mels;
  for (const auto& rec : train.records) {
    mels.push_back(LoadUtteranceMel(train, rec, cfg.features));
  }
  const MelStats stats = ComputeMelStats(mels);

  Rng rng(cfg.seed);
  AsrNet net;
  net.Build(cfg, &rng);
  std::copy(stats.mean.begin(), stats.mean.end(), net.mvn_mean->value.d.begin());
  std::copy(stats.istd.begin(), stats.istd.end(), net.mvn_istd->value.d.begin());

  auto make_example = [&](const corpus::CorpusManifest& m, size_t i,
                          const dsp::MelSpectrogram& mel) {
    UttExample ex;
    ex.stacked = StackFrames(ApplyMvn(mel, stats), cfg.frame_stack);
    ex.label_ids =
        TokensToIds(corpus::SplitTokens(m.records[i].token_string), cfg.vocab);
    return ex;
  };

  std::vector<UttExample> examples;
  for (size_t i = 0; i < train.records.size(); ++i) {
    examples.push_back(make_example(train, i, mels[i]));
  }
  std::vector<UttExample> heldout_examples;
  if (heldout) {
    for (size_t i = 0; i < heldout->records.size(); ++i) {
      heldout_examples.push_back(make_example(
          *heldout, i, LoadUtteranceMel(*heldout, heldout->records[i], cfg.features)));
    }
  }

  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  nn::Adam<float> opt(acfg);
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  int64_t step = 0;

  std::vector<AsrTrainLogEntry> local_log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(i))]);
    }
    double epoch_loss = 0.0;
    int in_batch = 0;
    net.store.ZeroGrads();
    for (size_t idx : order) {
      Graph<float> g;
      auto loss = UtteranceLoss(g, net, cfg, examples[idx]);
      const double lv = g.Value(loss).d[0];
      if (!std::isfinite(lv)) {
        throw StageError("asr", "non-finite loss at step " + std::to_string(step));
      }
      epoch_loss += lv;
      g.Backward(loss);
      ++step;
      if (++in_batch == cfg.batch_size) {
        opt.Step(net.store);
        net.store.ZeroGrads();
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      opt.Step(net.store);
      net.store.ZeroGrads();
    }
    AsrTrainLogEntry entry;
    entry.epoch = epoch + 1;
    entry.train_loss = epoch_loss / examples.size();
    entry.heldout_loss = std::numeric_limits<double>::quiet_NaN();
    if (!heldout_examples.empty()) {
      double hl = 0.0;
      for (const auto& ex : heldout_examples) {
        Graph<float> g;
        hl += g.Value(UtteranceLoss(g, net, cfg, ex)).d[0];
      }
      entry.heldout_loss = hl / heldout_examples.size();
    }
    local_log.push_back(entry);
  }
  if (log) *log = local_log;

  nn::Checkpoint ckpt;
  ckpt.module_kind = "asr";
  ckpt.config_digest = cfg.Digest();
  ckpt.rng_seed = cfg.seed;
  json j = json::parse(cfg.ToJson());
  json jlog = json::array();
  for (const auto& e : local_log) {
    json je;
    je["epoch"] = e.epoch;
    je["train_loss"] = e.train_loss;
    if (std::isfinite(e.heldout_loss)) je["heldout_loss"] = e.heldout_loss;
    jlog.push_back(je);
  }
  j["train_log"] = jlog;
  ckpt.train_config_json = j.dump();
  nn::StoreToCheckpoint(net.store, &ckpt);
  return ckpt;
}

// ---------------- CTC prefix scorer ----------------

CtcPrefixScorer::CtcPrefixScorer(const Mat<float>& logprobs, int blank)
    : frames_(static_cast<int>(logprobs.rows)),
      vocab_(static_cast<int>(logprobs.cols)),
      blank_(blank) {
  Require(blank >= 0 && blank < vocab_, "prefix scorer: bad blank id");
  logp_.resize(logprobs.d.size());
  for (size_t i = 0; i < logp_.size(); ++i) {
    logp_[i] = static_cast<double>(logprobs.d[i]);
  }
}

CtcPrefixScorer::State CtcPrefixScorer::Initial() const {
  State s;
  s.r_n.assign(frames_, kNegInf);
  s.r_b.assign(frames_, 0.0);
  double acc = 0.0;
  for (int t = 0; t < frames_; ++t) {
    acc += logp_[static_cast<size_t>(t) * vocab_ + blank_];
    s.r_b[t] = acc;
  }
  s.last = -1;
  s.prefix_logp = 0.0;  // log 1: every sequence starts with the empty prefix
  return s;
}

CtcPrefixScorer::State CtcPrefixScorer::Extend(const State& state,
                                               int token) const {
  Require(token >= 0 && token < vocab_ && token != blank_,
          "prefix scorer: bad token");
  State out;
  out.last = token;
  out.r_n.assign(frames_, kNegInf);
  out.r_b.assign(frames_, kNegInf);
  const bool empty_prefix = state.last < 0;
  double psi = kNegInf;
  for (int t = 0; t < frames_; ++t) {
    const double lp_tok = logp_[static_cast<size_t>(t) * vocab_ + token];
    const double lp_blank = logp_[static_cast<size_t>(t) * vocab_ + blank_];
    // phi: paths of the parent prefix that the new token may follow at t-1.
    double phi_prev;
    if (t == 0) {
      phi_prev = empty_prefix ? 0.0 : kNegInf;
    } else {
      phi_prev = state.r_b[t - 1];
      if (token != state.last) phi_prev = LogSumExp(phi_prev, state.r_n[t - 1]);
    }
    const double from_self = t == 0 ? kNegInf : out.r_n[t - 1];
    out.r_n[t] = LogSumExp(from_self, phi_prev) + lp_tok;
    const double from_any =
        t == 0 ? kNegInf : LogSumExp(out.r_b[t - 1], out.r_n[t - 1]);
    out.r_b[t] = from_any + lp_blank;
    psi = LogSumExp(psi, phi_prev + lp_tok);
  }
  out.prefix_logp = psi;
  return out;
}

double CtcPrefixScorer::FinalLogProb(const State& state) const {
  if (state.last < 0) {
    // Empty sequence: all-blank path.
    return state.r_b.empty() ? 0.0 : state.r_b[frames_ - 1];
  }
  return LogSumExp(state.r_n[frames_ - 1], state.r_b[frames_ - 1]);
}

// ---------------- recognition ----------------

struct Recognizer::Impl {
  AsrNet net;
  MelStats stats;
};

Recognizer::Recognizer(const nn::Checkpoint& ckpt)
    : impl_(std::make_shared<Impl>()),
      cfg_(AsrConfig::FromJson(ckpt.train_config_json)) {
  nn::CheckCheckpoint(ckpt, "asr", cfg_.Digest());
  impl_->net.Build(cfg_, nullptr);
  nn::CheckpointToStore(ckpt, &impl_->net.store);
  impl_->stats = impl_->net.Stats();
}

double Recognizer::ScoreUtterance(const dsp::MelSpectrogram& mel,
                                  const std::vector<std::string>& tokens) const {
  Require(mel.config_digest == cfg_.features.Digest(),
          "asr: mel config digest mismatch");
  UttExample ex;
  ex.stacked = StackFrames(ApplyMvn(mel, impl_->stats), cfg_.frame_stack);
  ex.label_ids = TokensToIds(tokens, cfg_.vocab);
  Graph<float> g;
  return g.Value(UtteranceLoss(g, impl_->net, cfg_, ex)).d[0];
}

RecognitionResult Recognizer::Recognize(const Waveform& w,
                                        const DecodeConfig& dcfg,
                                        const NGramLm* lm) const {
  Waveform local = w;
  if (local.sample_rate != cfg_.features.sample_rate) {
    local = dsp::Resample(local, cfg_.features.sample_rate);
  }
  return RecognizeMel(dsp::LogMel(local, cfg_.features), dcfg, lm);
}

RecognitionResult Recognizer::RecognizeMel(const dsp::MelSpectrogram& mel,
                                           const DecodeConfig& dcfg,
                                           const NGramLm* lm) const {
  dcfg.Validate();
  Require(mel.config_digest == cfg_.features.Digest(),
          "asr: mel config digest mismatch");
  RecognitionResult result;
  result.tokens.language = "AB";
  if (mel.frames == 0) return result;  // empty hypothesis, score 0

  const int n_tokens = static_cast<int>(cfg_.vocab.size());
  Graph<float> g;
  Mat<float> stacked = StackFrames(ApplyMvn(mel, impl_->stats), cfg_.frame_stack);
  auto memory = impl_->net.Encode(g, stacked);
  const Mat<float> ctc_grid = g.Value(impl_->net.CtcLogProbs(g, memory));
  CtcPrefixScorer scorer(ctc_grid, cfg_.blank_id());

  struct Hyp {
    std::vector<int> toks;
    double att = 0.0, lm_score = 0.0, ctc = 0.0;
    CtcPrefixScorer::State cs;
  };
  // Zero-weight terms are skipped outright: an impossible CTC prefix scores
  // -inf, and 0 * -inf would poison the sum with NaN.
  auto total = [&](const Hyp& h) {
    double s = (1.0 - dcfg.ctc_decode_weight) * h.att;
    if (dcfg.ctc_decode_weight > 0.0) s += dcfg.ctc_decode_weight * h.ctc;
    if (dcfg.lm_weight > 0.0) s += dcfg.lm_weight * h.lm_score;
    return s;
  };

  const int max_len =
      std::max(1, static_cast<int>(std::lround(dcfg.max_output_ratio * mel.frames)));
  Hyp root;
  root.cs = scorer.Initial();
  std::vector<Hyp> beam = {root};
  std::vector<Hyp> finals;

  for (int step = 0; step < max_len && !beam.empty(); ++step) {
    std::vector<Hyp> candidates;
    for (Hyp& h : beam) {
      std::vector<int> dec_in = {cfg_.sos_id()};
      dec_in.insert(dec_in.end(), h.toks.begin(), h.toks.end());
      auto logits = impl_->net.DecoderLogits(g, memory, dec_in, cfg_);
      auto logsm = g.LogSoftmaxRows(logits);
      const Mat<float>& lp = g.Value(logsm);
      const int64_t last = lp.rows - 1;
      // eos finalizes with the complete-sequence CTC probability.
      {
        Hyp done = h;
        done.att += lp.at(last, cfg_.eos_id());
        done.ctc = scorer.FinalLogProb(h.cs);
        finals.push_back(std::move(done));
      }
      for (int c = 0; c < n_tokens; ++c) {
        Hyp next = h;
        next.toks.push_back(c);
        next.att += lp.at(last, c);
        next.cs = scorer.Extend(h.cs, c);
        next.ctc = next.cs.prefix_logp;
        if (lm) next.lm_score += lm->Score(h.toks, c);
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](const Hyp& a, const Hyp& b) { return total(a) > total(b); });
    if (candidates.size() > static_cast<size_t>(dcfg.beam_size)) {
      candidates.resize(dcfg.beam_size);
    }
    beam = std::move(candidates);
  }
  // Length cap reached: finalize whatever is still alive.
  for (Hyp& h : beam) {
    std::vector<int> dec_in = {cfg_.sos_id()};
    dec_in.insert(dec_in.end(), h.toks.begin(), h.toks.end());
    auto logsm = g.LogSoftmaxRows(impl_->net.DecoderLogits(g, memory, dec_in, cfg_));
    h.att += g.Value(logsm).at(g.Value(logsm).rows - 1, cfg_.eos_id());
    h.ctc = scorer.FinalLogProb(h.cs);
    finals.push_back(std::move(h));
  }
  Require(!finals.empty(), "beam search produced no hypothesis");
  const Hyp* best = &finals[0];
  for (const Hyp& h : finals) {
    if (total(h) > total(*best)) best = &h;
  }
  // The returned hypothesis maximizes the joint score among all finalists.
  for (const Hyp& h : finals) {
    Require(total(*best) >= total(h), "beam search best-score invariant broken");
  }
  result.score = total(*best);
  for (int id : best->toks) {
    result.tokens.ids.push_back(id);
    result.tokens.symbols.push_back(cfg_.vocab[id]);
  }
  return result;
}

}  // namespace vcdesk::asr
