// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vcdesk/corpus.hpp"
#include "vcdesk/nn/graph.hpp"
#include "vcdesk/spkemb.hpp"
#include "vcdesk/wav.hpp"

using namespace vcdesk;
using namespace vcdesk::spkemb;

namespace fs = std::filesystem;

namespace {

struct SharedCorpus {
  corpus::CorpusManifest train;
  corpus::CorpusManifest test;
  fs::path dir = "tmp_spkemb_corpus";

  SharedCorpus() {
    fs::remove_all(dir);
    corpus::CorpusSpec spec;
    spec.speakers = 8;
    spec.utterances_per_speaker = 14;
    spec.min_tokens = 3;
    spec.max_tokens = 5;
    spec.seed = 21;
    corpus::CorpusManifest all = corpus::GenerateCorpus(spec, dir.string());
    std::tie(train, test) = corpus::SplitManifest(all, 3);
  }
  ~SharedCorpus() { fs::remove_all(dir); }
};

SharedCorpus& Corpus() {
  static SharedCorpus c;
  return c;
}

SpkembConfig SmallConfig() {
  SpkembConfig cfg;
  cfg.hidden = {48, 48, 48};
  cfg.epochs = 10;
  cfg.seed = 5;
  return cfg;
}

const nn::Checkpoint& TrainedCheckpoint() {
  static nn::Checkpoint ckpt = TrainSpkemb(Corpus().train, SmallConfig());
  return ckpt;
}

}  // namespace

TEST_CASE("stats pooling: stddev of a constant sequence is the zero vector") {
  nn::Graph<float> g;
  nn::Mat<float> x(6, 4);
  for (int64_t t = 0; t < 6; ++t) {
    for (int64_t c = 0; c < 4; ++c) x.at(t, c) = 3.5f;
  }
  auto sd = g.StdRows(g.Input(x));
  for (float v : g.Value(sd).d) CHECK(v == 0.0f);
}

TEST_CASE("train_spkemb: rejects a single-speaker manifest") {
  corpus::CorpusManifest single;
  single.base_dir = Corpus().train.base_dir;
  for (const auto* rec : Corpus().train.BySpeaker(Corpus().train.Speakers()[0])) {
    single.records.push_back(*rec);
  }
  CHECK_THROWS_AS(TrainSpkemb(single, SmallConfig()), ValidationError);
}

TEST_CASE("train_spkemb: held-out nearest-centroid accuracy >= 90%") {
  SpkembScorer scorer(TrainedCheckpoint());
  const double acc = EvaluateSpeakerAccuracy(scorer, Corpus().train, Corpus().test);
  CHECK(acc >= 0.9);
}

TEST_CASE("train_spkemb: fixed seed reproduces the checkpoint exactly") {
  nn::Checkpoint a = TrainSpkemb(Corpus().train, SmallConfig());
  REQUIRE(a.tensors.size() == TrainedCheckpoint().tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].data == TrainedCheckpoint().tensors[i].data);
  }
}

TEST_CASE("checkpoint drops the classifier head") {
  for (const auto& t : TrainedCheckpoint().tensors) {
    CHECK(t.name.rfind("head.", 0) != 0);
  }
}

TEST_CASE("extract_embedding: unit norm, duplication-invariant, deterministic") {
  SpkembScorer scorer(TrainedCheckpoint());
  const auto& rec = Corpus().test.records[0];
  Waveform w = ReadWav(corpus::ResolveAudioPath(Corpus().test, rec));
  SpeakerEmbedding single = ExtractEmbedding({w}, scorer);
  double norm = 0.0;
  for (float v : single.vector) norm += static_cast<double>(v) * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);

  SpeakerEmbedding doubled = ExtractEmbedding({w, w}, scorer);
  for (size_t i = 0; i < single.vector.size(); ++i) {
    CHECK(doubled.vector[i] == doctest::Approx(single.vector[i]).epsilon(1e-6));
  }

  SpeakerEmbedding again = ExtractEmbedding({w}, scorer);
  CHECK(again.vector == single.vector);

  CHECK_THROWS_AS(ExtractEmbedding({}, scorer), ValidationError);
}

TEST_CASE("similarity: identity, bounds, zero-vector rejection") {
  SpkembScorer scorer(TrainedCheckpoint());
  const auto& rec = Corpus().test.records[0];
  Waveform w = ReadWav(corpus::ResolveAudioPath(Corpus().test, rec));
  const std::vector<float> e = ExtractEmbedding({w}, scorer).vector;
  CHECK(Similarity(e, e) == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<float> ex = {1.0f, 0.0f};
  std::vector<float> ey = {0.0f, 1.0f};
  CHECK(Similarity(ex, ey) == doctest::Approx(0.0));
  CHECK_THROWS_AS(Similarity({0.0f, 0.0f}, ey), ValidationError);

  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    std::vector<float> a(16), b(16);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    const double s = Similarity(a, b);
    CHECK(s >= -1.0 - 1e-9);
    CHECK(s <= 1.0 + 1e-9);
  }
}

TEST_CASE("within-speaker cosine beats between-speaker cosine on average") {
  SpkembScorer scorer(TrainedCheckpoint());
  std::map<std::string, std::vector<std::vector<float>>> by_speaker;
  for (const auto& rec : Corpus().test.records) {
    Waveform w = ReadWav(corpus::ResolveAudioPath(Corpus().test, rec));
    by_speaker[rec.speaker_id].push_back(ExtractEmbedding({w}, scorer).vector);
  }
  double within = 0.0, between = 0.0;
  int nw = 0, nb = 0;
  std::vector<std::string> keys;
  for (const auto& [k, v] : by_speaker) keys.push_back(k);
  for (size_t a = 0; a < keys.size(); ++a) {
    const auto& ea = by_speaker[keys[a]];
    for (size_t i = 0; i < ea.size(); ++i) {
      for (size_t j = i + 1; j < ea.size(); ++j) {
        within += Similarity(ea[i], ea[j]);
        ++nw;
      }
    }
    for (size_t b = a + 1; b < keys.size(); ++b) {
      for (const auto& x : ea) {
        for (const auto& y : by_speaker[keys[b]]) {
          between += Similarity(x, y);
          ++nb;
        }
      }
    }
  }
  within /= nw;
  between /= nb;
  // Fisher-style separation from the module contract.
  CHECK(within - between >= 0.2);
}

TEST_CASE("embedding json round trip") {
  SpkembScorer scorer(TrainedCheckpoint());
  const auto& rec = Corpus().test.records[1];
  Waveform w = ReadWav(corpus::ResolveAudioPath(Corpus().test, rec));
  SpeakerEmbedding e = ExtractEmbedding({w}, scorer);
  e.source_utt_ids = {rec.utt_id};
  SaveEmbeddingJson("tmp_emb.json", e, rec.speaker_id);
  SpeakerEmbedding r = LoadEmbeddingJson("tmp_emb.json");
  CHECK(r.vector == e.vector);
  CHECK(r.source_utt_ids == e.source_utt_ids);
  std::remove("tmp_emb.json");
}
