// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vcdesk::nn {

namespace {

constexpr char kMagic[8] = {'V', 'C', 'D', 'E', 'S', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void PutStr(std::ofstream& out, const std::string& s) {
  const uint32_t n = static_cast<uint32_t>(s.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(s.data(), n);
}

std::string GetStr(std::ifstream& in) {
  uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  Require(in.good() && n < (1u << 28), "checkpoint: bad string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

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

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("checkpoint", "cannot open for write: " + path);
  out.write(kMagic, 8);
  PutRaw<uint32_t>(out, kVersion);
  PutStr(out, ckpt.module_kind);
  PutStr(out, ckpt.config_digest);
  PutRaw<uint64_t>(out, ckpt.rng_seed);
  PutStr(out, ckpt.train_config_json);
  PutRaw<uint64_t>(out, static_cast<uint64_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    PutStr(out, t.name);
    PutRaw<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) PutRaw<uint64_t>(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw StageError("checkpoint", "write failed: " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw ValidationError("not a checkpoint file: " + path);
  }
  const uint32_t version = GetRaw<uint32_t>(in);
  Require(version == kVersion,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.module_kind = GetStr(in);
  ckpt.config_digest = GetStr(in);
  ckpt.rng_seed = GetRaw<uint64_t>(in);
  ckpt.train_config_json = GetStr(in);
  const uint64_t count = GetRaw<uint64_t>(in);
  Require(in.good() && count < (1u << 20), "checkpoint: bad tensor count");
  ckpt.tensors.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    CheckpointTensor& t = ckpt.tensors[i];
    t.name = GetStr(in);
    const uint32_t ndim = GetRaw<uint32_t>(in);
    Require(in.good() && ndim <= 4, "checkpoint: bad ndim");
    int64_t numel = 1;
    t.shape.resize(ndim);
    for (uint32_t d = 0; d < ndim; ++d) {
      t.shape[d] = static_cast<int64_t>(GetRaw<uint64_t>(in));
      numel *= t.shape[d];
    }
    Require(numel >= 0 && numel < (1ll << 32), "checkpoint: bad tensor size");
    t.data.resize(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  Require(in.good(), "checkpoint: truncated file " + path);
  return ckpt;
}

void CheckCheckpoint(const Checkpoint& ckpt, const std::string& kind,
                     const std::string& digest) {
  Require(ckpt.module_kind == kind, "checkpoint kind '" + ckpt.module_kind +
                                        "' does not match expected '" + kind +
                                        "'");
  Require(ckpt.config_digest == digest,
          "checkpoint config digest mismatch: file has " + ckpt.config_digest +
              ", model expects " + digest);
}

}  // namespace vcdesk::nn
