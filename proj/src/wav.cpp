// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/wav.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace vcdesk {

namespace {

void PutU32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void PutU16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

uint32_t GetU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t GetU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void WriteWav(const std::string& path, const Waveform& w) {
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  PutU32(buf, 36 + data_bytes);
  buf += "WAVEfmt ";
  PutU32(buf, 16);
  PutU16(buf, 1);  // PCM
  PutU16(buf, 1);  // mono
  PutU32(buf, static_cast<uint32_t>(w.sample_rate));
  PutU32(buf, static_cast<uint32_t>(w.sample_rate) * 2);
  PutU16(buf, 2);   // block align
  PutU16(buf, 16);  // bits per sample
  buf += "data";
  PutU32(buf, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    float x = std::clamp(w.samples[i], -1.0f, 1.0f);
    int v = static_cast<int>(std::lrint(x * 32767.0f));
    v = std::clamp(v, -32768, 32767);
    PutU16(buf, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("wav", "cannot open for write: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw StageError("wav", "write failed: " + path);
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open wav: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 44 || buf.compare(0, 4, "RIFF") != 0 ||
      buf.compare(8, 4, "WAVE") != 0) {
    throw ValidationError("not a RIFF WAV file: " + path);
  }
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
  size_t pos = 12;
  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  Waveform w;
  bool got_data = false;
  while (pos + 8 <= buf.size()) {
    std::string id = buf.substr(pos, 4);
    uint32_t sz = GetU32(p + pos + 4);
    pos += 8;
    if (pos + sz > buf.size()) sz = static_cast<uint32_t>(buf.size() - pos);
    if (id == "fmt ") {
      if (sz < 16) throw ValidationError("bad fmt chunk: " + path);
      uint16_t fmt = GetU16(p + pos);
      channels = GetU16(p + pos + 2);
      sample_rate = static_cast<int>(GetU32(p + pos + 4));
      bits = GetU16(p + pos + 14);
      if (fmt != 1 || channels != 1 || bits != 16) {
        throw ValidationError("only 16-bit PCM mono supported: " + path);
      }
    } else if (id == "data") {
      uint32_t ns = sz / 2;
      w.samples.resize(ns);
      for (uint32_t i = 0; i < ns; ++i) {
        int16_t v = static_cast<int16_t>(GetU16(p + pos + 2 * i));
        w.samples[i] = static_cast<float>(v) / 32767.0f;
      }
      got_data = true;
    }
    pos += sz + (sz & 1);
  }
  if (sample_rate == 0 || !got_data) {
    throw ValidationError("missing fmt/data chunk: " + path);
  }
  w.sample_rate = sample_rate;
  return w;
}

}  // namespace vcdesk
