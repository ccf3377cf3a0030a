// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_CORPUS_HPP_
#define VCDESK_CORPUS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "vcdesk/common.hpp"
#include "vcdesk/dsp.hpp"

namespace vcdesk::corpus {

enum class Language { A, B };

std::string LanguageName(Language lang);
Language ParseLanguage(const std::string& name);

// Controllable synthetic speaker. All fields are a pure function of
// (seed, language).
struct SpeakerProfile {
  std::string speaker_id;
  double f0_hz = 140.0;         // 80..300
  double formant_scale = 1.0;   // 0.7..1.3
  double rate_scale = 1.0;      // 0.7..1.3, token-duration multiplier
  Language language = Language::A;
  uint64_t seed = 0;
};

// Per-token formant prototype. Voiced tokens are harmonic pulse trains,
// unvoiced tokens formant-filtered noise.
struct TokenProto {
  std::string symbol;
  double f1 = 0, f2 = 0, f3 = 0;  // Hz
  bool voiced = true;
};

struct TokenInventory {
  std::string name;  // "A", "B", or "AB"
  std::vector<TokenProto> tokens;

  const TokenProto* Find(const std::string& symbol) const;
  std::vector<std::string> Symbols() const;
};

// Language inventories share the five vowels; consonants are disjoint.
TokenInventory InventoryFor(Language lang);
TokenInventory SharedInventory();  // union in canonical order

SpeakerProfile MakeSpeakerProfile(uint64_t seed, Language lang);

// Concatenated per-token formant-synthesis segments. Unknown tokens are
// rejected by name. Peak amplitude is normalized to <= 0.95.
Waveform RenderUtterance(const std::vector<std::string>& tokens,
                         const SpeakerProfile& profile,
                         double base_duration_ms = 80.0,
                         int sample_rate = 16000);

struct ManifestRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string language;
  std::string token_string;  // space-separated symbols
  std::string audio_path;    // relative to the manifest directory
  int sample_rate = 16000;
  double duration_sec = 0.0;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;
  std::string base_dir;  // directory audio paths resolve against

  std::vector<std::string> Speakers() const;  // unique, in first-seen order
  std::vector<const ManifestRecord*> BySpeaker(const std::string& id) const;
};

struct CorpusSpec {
  int speakers = 8;  // round-robin over languages
  std::vector<Language> languages = {Language::A, Language::B};
  int utterances_per_speaker = 70;
  int min_tokens = 4;
  int max_tokens = 8;
  double base_duration_ms = 80.0;
  int sample_rate = 16000;  // 24000 renders the same content for the
                            // vocoder rate-mismatch mode
  uint64_t seed = 0;

  void Validate() const;
};

// Writes wav/<utt_id>.wav files plus manifest.jsonl under out_dir and
// returns the manifest. Deterministic: per-utterance RNG streams are derived
// from (seed, utt_id), so output is independent of generation order.
CorpusManifest GenerateCorpus(const CorpusSpec& spec, const std::string& out_dir);

// UTF-8 JSON Lines, one record per line.
void SaveManifest(const CorpusManifest& manifest, const std::string& path);
CorpusManifest LoadManifest(const std::string& path);

std::string ResolveAudioPath(const CorpusManifest& manifest,
                             const ManifestRecord& record);

std::vector<std::string> SplitTokens(const std::string& token_string);

// Deterministic held-out split: the last `test_per_speaker` utterances of
// every speaker go to the second manifest.
std::pair<CorpusManifest, CorpusManifest> SplitManifest(
    const CorpusManifest& manifest, int test_per_speaker);

// Nearest-prototype token classifier over mean mel frames. Distances are
// computed after removing each vector's scalar mean, which cancels overall
// gain (a log-mel amplitude shift moves every bin equally).
struct TokenPrototypes {
  std::vector<std::string> symbols;
  std::vector<std::vector<float>> centroids;
  std::string config_digest;
};

TokenPrototypes BuildTokenPrototypes(const TokenInventory& inventory,
                                     const SpeakerProfile& profile,
                                     const dsp::FeatureConfig& cfg,
                                     double base_duration_ms = 80.0);

std::string ClassifyMelSegment(const TokenPrototypes& protos,
                               const dsp::MelSpectrogram& mel, int frame_begin,
                               int frame_end);

// Splits mel into n contiguous equal segments and classifies each.
std::vector<std::string> ClassifyUniformSegments(const TokenPrototypes& protos,
                                                 const dsp::MelSpectrogram& mel,
                                                 int n_segments);

}  // namespace vcdesk::corpus

#endif  // VCDESK_CORPUS_HPP_
