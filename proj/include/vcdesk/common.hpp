// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_COMMON_HPP_
#define VCDESK_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcdesk {

// Thrown for bad inputs, bad configs, digest mismatches. CLI maps this to exit 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a pipeline stage fails at runtime. CLI maps this to exit 3.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& msg)
      : std::runtime_error("[" + stage + "] " + msg), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

inline void Require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// Mono waveform. Samples are float in [-1, 1] nominally.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_sec() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

// Token ids plus the vocabulary tag they index into.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> symbols;  // resolved symbols, same length as ids
  std::string language;             // "A", "B", or "AB" for mixed/shared
};

// FNV-1a over bytes; used for config digests and RNG stream derivation.
inline uint64_t Fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t Fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return Fnv1a(s.data(), s.size(), h);
}

inline std::string HexDigest(uint64_t h) {
  static const char* kHex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Deterministic RNG with portable distributions. std:: distributions are
// implementation-defined, so uniform/normal are derived from raw bits here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Box-Muller; no state cached so the stream only depends on call count.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Independent child stream, e.g. one per utterance id.
  Rng derive(const std::string& key) const {
    uint64_t h = Fnv1a(&seed_, sizeof(seed_));
    return Rng(Fnv1a(key, h));
  }
  Rng derive(uint64_t key) const {
    uint64_t h = Fnv1a(&seed_, sizeof(seed_));
    return Rng(Fnv1a(&key, sizeof(key), h));
  }

  uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_ = 0;
};

}  // namespace vcdesk

#endif  // VCDESK_COMMON_HPP_
