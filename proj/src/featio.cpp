// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/featio.hpp"

#include <cstring>
#include <fstream>

#include "vcdesk/features.hpp"
#include "vcdesk/wav.hpp"

namespace vcdesk {

Waveform ReadWavResampled(const corpus::CorpusManifest& manifest,
                          const corpus::ManifestRecord& record,
                          int target_rate) {
  Waveform w = ReadWav(corpus::ResolveAudioPath(manifest, record));
  if (w.sample_rate != target_rate) w = dsp::Resample(w, target_rate);
  return w;
}

namespace {
constexpr char kMagic[8] = {'V', 'C', 'F', 'E', 'A', 'T', '0', '1'};

template <class T>
void PutRaw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T GetRaw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void WriteMelFile(const std::string& path, const dsp::MelSpectrogram& mel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("featio", "cannot open for write: " + path);
  out.write(kMagic, 8);
  PutRaw<uint32_t>(out, static_cast<uint32_t>(mel.frames));
  PutRaw<uint32_t>(out, static_cast<uint32_t>(mel.n_mels));
  PutRaw<uint32_t>(out, static_cast<uint32_t>(mel.config_digest.size()));
  out.write(mel.config_digest.data(),
            static_cast<std::streamsize>(mel.config_digest.size()));
  out.write(reinterpret_cast<const char*>(mel.values.data()),
            static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  if (!out) throw StageError("featio", "write failed: " + path);
}

dsp::MelSpectrogram ReadMelFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw ValidationError("bad feature file magic: " + path);
  }
  dsp::MelSpectrogram mel;
  mel.frames = static_cast<int>(GetRaw<uint32_t>(in));
  mel.n_mels = static_cast<int>(GetRaw<uint32_t>(in));
  const uint32_t dlen = GetRaw<uint32_t>(in);
  Require(dlen <= 64, "unreasonable digest length in " + path);
  mel.config_digest.resize(dlen);
  in.read(mel.config_digest.data(), dlen);
  mel.values.resize(static_cast<size_t>(mel.frames) * mel.n_mels);
  in.read(reinterpret_cast<char*>(mel.values.data()),
          static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  if (!in) throw ValidationError("truncated feature file: " + path);
  return mel;
}

}  // namespace vcdesk
