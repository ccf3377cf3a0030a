// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vcdesk/wav.hpp"

namespace vcdesk::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Two-pole resonator bank applied in parallel. Bandwidths widen with center
// frequency so high formants stay stable.
struct Resonator {
  double b0 = 0, a1 = 0, a2 = 0;
  double y1 = 0, y2 = 0;

  void Setup(double freq, double bw, int sr) {
    const double r = std::exp(-kPi * bw / sr);
    a1 = 2.0 * r * std::cos(2.0 * kPi * freq / sr);
    a2 = -r * r;
    b0 = 1.0 - r;
  }
  double Tick(double x) {
    const double y = b0 * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void RenderToken(const TokenProto& proto, const SpeakerProfile& profile,
                 int n_samples, int sample_rate, Rng& noise_rng,
                 std::vector<float>* out) {
  const double cap = 0.45 * sample_rate;
  const double weights[3] = {1.0, 0.7, 0.4};
  const double freqs[3] = {std::min(proto.f1 * profile.formant_scale, cap),
                           std::min(proto.f2 * profile.formant_scale, cap),
                           std::min(proto.f3 * profile.formant_scale, cap)};
  Resonator res[3];
  for (int i = 0; i < 3; ++i) {
    res[i].Setup(freqs[i], 60.0 + freqs[i] / 18.0, sample_rate);
  }
  const int attack = std::min(n_samples / 4, sample_rate / 200);  // 5 ms
  double phase = 1.0;  // emit a pulse on the first sample
  for (int i = 0; i < n_samples; ++i) {
    double exc;
    if (proto.voiced) {
      phase += profile.f0_hz / sample_rate;
      if (phase >= 1.0) {
        phase -= 1.0;
        exc = 1.0;
      } else {
        exc = 0.0;
      }
    } else {
      exc = noise_rng.uniform(-0.25, 0.25);
    }
    double y = 0.0;
    for (int f = 0; f < 3; ++f) y += weights[f] * res[f].Tick(exc);
    double env = 1.0;
    if (attack > 0) {
      if (i < attack) env = static_cast<double>(i) / attack;
      if (n_samples - 1 - i < attack) {
        env = std::min(env, static_cast<double>(n_samples - 1 - i) / attack);
      }
    }
    out->push_back(static_cast<float>(y * env));
  }
}

}  // namespace

std::string LanguageName(Language lang) {
  return lang == Language::A ? "A" : "B";
}

Language ParseLanguage(const std::string& name) {
  if (name == "A") return Language::A;
  if (name == "B") return Language::B;
  throw ValidationError("unknown language: " + name);
}

const TokenProto* TokenInventory::Find(const std::string& symbol) const {
  for (const auto& t : tokens) {
    if (t.symbol == symbol) return &t;
  }
  return nullptr;
}

std::vector<std::string> TokenInventory::Symbols() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.symbol);
  return out;
}

namespace {

const std::vector<TokenProto>& VowelProtos() {
  static const std::vector<TokenProto> kVowels = {
      {"a", 730, 1090, 2440, true},  {"e", 530, 1840, 2480, true},
      {"i", 270, 2290, 3010, true},  {"o", 570, 840, 2410, true},
      {"u", 300, 870, 2240, true},
  };
  return kVowels;
}

const std::vector<TokenProto>& ConsonantProtos(Language lang) {
  static const std::vector<TokenProto> kA = {
      {"k", 1350, 2500, 3200, false},
      {"s", 1800, 5500, 6800, false},
      {"t", 1100, 4200, 5600, false},
  };
  static const std::vector<TokenProto> kB = {
      {"m", 250, 1200, 2100, true},
      {"n", 350, 1700, 2600, true},
      {"p", 900, 2100, 3000, false},
  };
  return lang == Language::A ? kA : kB;
}

}  // namespace

TokenInventory InventoryFor(Language lang) {
  TokenInventory inv;
  inv.name = LanguageName(lang);
  inv.tokens = VowelProtos();
  for (const auto& t : ConsonantProtos(lang)) inv.tokens.push_back(t);
  return inv;
}

TokenInventory SharedInventory() {
  TokenInventory inv;
  inv.name = "AB";
  inv.tokens = VowelProtos();
  for (const auto& t : ConsonantProtos(Language::A)) inv.tokens.push_back(t);
  for (const auto& t : ConsonantProtos(Language::B)) inv.tokens.push_back(t);
  return inv;
}

SpeakerProfile MakeSpeakerProfile(uint64_t seed, Language lang) {
  Rng rng(Fnv1a(LanguageName(lang), Fnv1a(&seed, sizeof(seed))));
  SpeakerProfile p;
  p.seed = seed;
  p.language = lang;
  p.speaker_id = LanguageName(lang) + std::to_string(seed);
  p.f0_hz = rng.uniform(80.0, 300.0);
  p.formant_scale = rng.uniform(0.7, 1.3);
  p.rate_scale = rng.uniform(0.7, 1.3);
  return p;
}

Waveform RenderUtterance(const std::vector<std::string>& tokens,
                         const SpeakerProfile& profile, double base_duration_ms,
                         int sample_rate) {
  Require(base_duration_ms > 0, "base_duration_ms must be positive");
  const TokenInventory shared = SharedInventory();
  const TokenInventory own = InventoryFor(profile.language);
  Waveform w;
  w.sample_rate = sample_rate;
  const int n_per_token = static_cast<int>(
      std::llround(base_duration_ms / 1000.0 * profile.rate_scale * sample_rate));
  for (size_t i = 0; i < tokens.size(); ++i) {
    const TokenProto* proto = own.Find(tokens[i]);
    if (!proto) proto = shared.Find(tokens[i]);  // shared symbols always allowed
    if (!proto) {
      throw ValidationError("unknown token: '" + tokens[i] + "'");
    }
    // Noise stream depends only on the speaker and token position.
    Rng noise = Rng(profile.seed).derive("tok" + std::to_string(i));
    RenderToken(*proto, profile, n_per_token, sample_rate, noise, &w.samples);
  }
  float peak = 0.0f;
  for (float v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0f) {
    const float gain = 0.45f / peak;
    for (auto& v : w.samples) v *= gain;
  }
  return w;
}

std::vector<std::string> CorpusManifest::Speakers() const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (std::find(out.begin(), out.end(), r.speaker_id) == out.end()) {
      out.push_back(r.speaker_id);
    }
  }
  return out;
}

std::vector<const ManifestRecord*> CorpusManifest::BySpeaker(
    const std::string& id) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.speaker_id == id) out.push_back(&r);
  }
  return out;
}

void CorpusSpec::Validate() const {
  Require(speakers >= 0, "speakers must be >= 0");
  Require(!languages.empty(), "need at least one language");
  Require(utterances_per_speaker >= 0, "utterances_per_speaker must be >= 0");
  Require(min_tokens >= 1 && min_tokens <= max_tokens,
          "need 1 <= min_tokens <= max_tokens");
  Require(base_duration_ms > 0, "base_duration_ms must be positive");
  Require(sample_rate == 16000 || sample_rate == 24000,
          "sample_rate must be 16000 or 24000");
}

CorpusManifest GenerateCorpus(const CorpusSpec& spec, const std::string& out_dir) {
  spec.Validate();
  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  if (spec.speakers == 0 || spec.utterances_per_speaker == 0) {
    fs::create_directories(out_dir);
    SaveManifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    return manifest;
  }
  fs::create_directories(fs::path(out_dir) / "wav");

  // Greedy per-language speaker selection: candidate profile seeds are
  // sequential, and a candidate is accepted only if its f0 sits at least
  // 18 Hz from every accepted speaker of any language. Keeps synthetic
  // speakers measurably apart without breaking profile determinism.
  std::vector<SpeakerProfile> profiles;
  {
    std::vector<uint64_t> next_candidate(spec.languages.size(), spec.seed * 1000);
    std::vector<double> accepted_f0;
    for (int s = 0; s < spec.speakers; ++s) {
      const size_t li = static_cast<size_t>(s) % spec.languages.size();
      SpeakerProfile chosen;
      bool ok = false;
      for (int tries = 0; tries < 1000 && !ok; ++tries) {
        chosen = MakeSpeakerProfile(next_candidate[li]++, spec.languages[li]);
        ok = true;
        for (double f0 : accepted_f0) {
          if (std::abs(f0 - chosen.f0_hz) < 18.0) {
            ok = false;
            break;
          }
        }
      }
      accepted_f0.push_back(chosen.f0_hz);
      profiles.push_back(chosen);
    }
  }

  Rng corpus_rng(spec.seed);
  for (const SpeakerProfile& profile : profiles) {
    const TokenInventory inv = InventoryFor(profile.language);
    const std::vector<std::string> symbols = inv.Symbols();
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      std::ostringstream utt_id;
      utt_id << profile.speaker_id << "_u";
      utt_id.fill('0');
      utt_id.width(4);
      utt_id << u;
      Rng rng = corpus_rng.derive(utt_id.str());
      const int n_tokens = spec.min_tokens +
                           static_cast<int>(rng.uniform_int(
                               spec.max_tokens - spec.min_tokens + 1));
      std::vector<std::string> tokens;
      for (int t = 0; t < n_tokens; ++t) {
        tokens.push_back(
            symbols[static_cast<size_t>(rng.uniform_int(symbols.size()))]);
      }
      Waveform w = RenderUtterance(tokens, profile, spec.base_duration_ms,
                                   spec.sample_rate);
      const std::string rel = "wav/" + utt_id.str() + ".wav";
      WriteWav((fs::path(out_dir) / rel).string(), w);
      ManifestRecord rec;
      rec.utt_id = utt_id.str();
      rec.speaker_id = profile.speaker_id;
      rec.language = LanguageName(profile.language);
      std::string joined;
      for (size_t t = 0; t < tokens.size(); ++t) {
        if (t) joined += ' ';
        joined += tokens[t];
      }
      rec.token_string = joined;
      rec.audio_path = rel;
      rec.sample_rate = spec.sample_rate;
      rec.duration_sec = w.duration_sec();
      manifest.records.push_back(std::move(rec));
    }
  }
  SaveManifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
  return manifest;
}

void SaveManifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("corpus", "cannot write manifest: " + path);
  for (const auto& r : manifest.records) {
    Require(!r.token_string.empty(), "manifest record with empty token_string");
    json j;
    j["utt_id"] = r.utt_id;
    j["speaker_id"] = r.speaker_id;
    j["language"] = r.language;
    j["token_string"] = r.token_string;
    j["audio_path"] = r.audio_path;
    j["sample_rate"] = r.sample_rate;
    j["duration_sec"] = r.duration_sec;
    out << j.dump() << "\n";
  }
}

CorpusManifest LoadManifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open manifest: " + path);
  CorpusManifest manifest;
  manifest.base_dir = fs::path(path).parent_path().string();
  std::string line;
  size_t line_no = 0;
  std::vector<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": " + e.what());
    }
    ManifestRecord r;
    r.utt_id = j.at("utt_id").get<std::string>();
    r.speaker_id = j.at("speaker_id").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.token_string = j.at("token_string").get<std::string>();
    r.audio_path = j.at("audio_path").get<std::string>();
    r.sample_rate = j.at("sample_rate").get<int>();
    r.duration_sec = j.at("duration_sec").get<double>();
    Require(!r.token_string.empty(),
            "manifest line " + std::to_string(line_no) + ": empty token_string");
    manifest.records.push_back(std::move(r));
  }
  for (const auto& r : manifest.records) seen_ids.push_back(r.utt_id);
  std::sort(seen_ids.begin(), seen_ids.end());
  Require(std::adjacent_find(seen_ids.begin(), seen_ids.end()) == seen_ids.end(),
          "manifest has duplicate utt_ids");
  return manifest;
}

std::string ResolveAudioPath(const CorpusManifest& manifest,
                             const ManifestRecord& record) {
  const fs::path p(record.audio_path);
  if (p.is_absolute()) return record.audio_path;
  return (fs::path(manifest.base_dir) / p).string();
}

std::vector<std::string> SplitTokens(const std::string& token_string) {
  std::vector<std::string> out;
  std::istringstream is(token_string);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::pair<CorpusManifest, CorpusManifest> SplitManifest(
    const CorpusManifest& manifest, int test_per_speaker) {
  Require(test_per_speaker >= 0, "test_per_speaker must be >= 0");
  CorpusManifest train, test;
  train.base_dir = manifest.base_dir;
  test.base_dir = manifest.base_dir;
  for (const std::string& spk : manifest.Speakers()) {
    const auto recs = manifest.BySpeaker(spk);
    const size_t cut = recs.size() > static_cast<size_t>(test_per_speaker)
                           ? recs.size() - test_per_speaker
                           : 0;
    for (size_t i = 0; i < recs.size(); ++i) {
      (i < cut ? train : test).records.push_back(*recs[i]);
    }
  }
  return {train, test};
}

TokenPrototypes BuildTokenPrototypes(const TokenInventory& inventory,
                                     const SpeakerProfile& profile,
                                     const dsp::FeatureConfig& cfg,
                                     double base_duration_ms) {
  TokenPrototypes protos;
  protos.config_digest = cfg.Digest();
  for (const auto& tok : inventory.tokens) {
    Waveform w =
        RenderUtterance({tok.symbol}, profile, base_duration_ms, cfg.sample_rate);
    dsp::MelSpectrogram mel = dsp::LogMel(w, cfg);
    Require(mel.frames > 0, "prototype rendering produced no frames");
    std::vector<float> centroid(mel.n_mels, 0.0f);
    for (int t = 0; t < mel.frames; ++t) {
      for (int m = 0; m < mel.n_mels; ++m) centroid[m] += mel.at(t, m);
    }
    for (auto& v : centroid) v /= static_cast<float>(mel.frames);
    protos.symbols.push_back(tok.symbol);
    protos.centroids.push_back(std::move(centroid));
  }
  return protos;
}

namespace {

// Distance between mean-centered vectors; centering cancels gain shifts.
double CenteredDistance(const std::vector<float>& a, const std::vector<float>& b) {
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double d2 = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i] - ma) - (b[i] - mb);
    d2 += d * d;
  }
  return d2;
}

}  // namespace

std::string ClassifyMelSegment(const TokenPrototypes& protos,
                               const dsp::MelSpectrogram& mel, int frame_begin,
                               int frame_end) {
  Require(!protos.symbols.empty(), "empty prototype set");
  Require(protos.config_digest == mel.config_digest,
          "prototype/mel config digest mismatch");
  Require(frame_begin >= 0 && frame_begin < frame_end && frame_end <= mel.frames,
          "bad segment range");
  std::vector<float> centroid(mel.n_mels, 0.0f);
  for (int t = frame_begin; t < frame_end; ++t) {
    for (int m = 0; m < mel.n_mels; ++m) centroid[m] += mel.at(t, m);
  }
  for (auto& v : centroid) v /= static_cast<float>(frame_end - frame_begin);
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < protos.centroids.size(); ++i) {
    const double d = CenteredDistance(centroid, protos.centroids[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return protos.symbols[best];
}

std::vector<std::string> ClassifyUniformSegments(const TokenPrototypes& protos,
                                                 const dsp::MelSpectrogram& mel,
                                                 int n_segments) {
  Require(n_segments >= 1, "need at least one segment");
  std::vector<std::string> out;
  if (mel.frames < n_segments) return out;  // too short to segment
  for (int s = 0; s < n_segments; ++s) {
    const int b = static_cast<int>(static_cast<int64_t>(mel.frames) * s / n_segments);
    const int e = static_cast<int>(static_cast<int64_t>(mel.frames) * (s + 1) / n_segments);
    out.push_back(ClassifyMelSegment(protos, mel, b, e));
  }
  return out;
}

}  // namespace vcdesk::corpus
