// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_CHECKPOINT_HPP_
#define VCDESK_NN_CHECKPOINT_HPP_

#include <string>
#include <vector>

#include "vcdesk/nn/tensor.hpp"

namespace vcdesk::nn {

struct CheckpointTensor {
  std::string name;
  std::vector<int64_t> shape;  // always rows, cols here
  std::vector<float> data;
};

// Versioned parameter bundle. Layout (little-endian):
//   magic "VCDESKPT" | u32 version | str module_kind | str config_digest
//   | u64 rng_seed | str train_config_json | u64 tensor count
//   | per tensor: str name | u32 ndim | u64 dims[] | float32 payload
// where str = u32 length + bytes. train_config_json is kept verbatim so a
// save/load/save round trip is byte-identical.
struct Checkpoint {
  std::string module_kind;  // asr | tts | spkemb | vocoder
  std::string config_digest;
  uint64_t rng_seed = 0;
  std::string train_config_json;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* Find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

// Expected kind/digest guard used by every model loader.
void CheckCheckpoint(const Checkpoint& ckpt, const std::string& kind,
                     const std::string& digest);

template <class T>
void StoreToCheckpoint(const ParamStore<T>& store, Checkpoint* ckpt) {
  ckpt->tensors.clear();
  for (const auto& p : store) {
    CheckpointTensor t;
    t.name = p.name;
    t.shape = {p.value.rows, p.value.cols};
    t.data.resize(p.value.d.size());
    for (size_t i = 0; i < t.data.size(); ++i) {
      t.data[i] = static_cast<float>(p.value.d[i]);
    }
    ckpt->tensors.push_back(std::move(t));
  }
}

template <class T>
void CheckpointToStore(const Checkpoint& ckpt, ParamStore<T>* store) {
  Require(ckpt.tensors.size() == store->size(),
          "checkpoint: tensor count mismatch (" +
              std::to_string(ckpt.tensors.size()) + " vs " +
              std::to_string(store->size()) + ")");
  for (size_t i = 0; i < store->size(); ++i) {
    auto& p = (*store)[i];
    const auto& t = ckpt.tensors[i];
    Require(t.name == p.name, "checkpoint: tensor name mismatch at " + t.name);
    Require(t.shape.size() == 2 && t.shape[0] == p.value.rows &&
                t.shape[1] == p.value.cols,
            "checkpoint: shape mismatch for " + t.name);
    for (size_t j = 0; j < t.data.size(); ++j) {
      p.value.d[j] = static_cast<T>(t.data[j]);
    }
  }
}

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_CHECKPOINT_HPP_
