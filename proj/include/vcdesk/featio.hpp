// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_FEATIO_HPP_
#define VCDESK_FEATIO_HPP_

#include <string>

#include "vcdesk/dsp.hpp"

namespace vcdesk {

// Feature dump, one file per utterance. Layout (little-endian):
//   magic "VCFEAT01" | u32 frames | u32 n_mels | u32 digest_len | digest
//   | frames*n_mels float32, row-major
void WriteMelFile(const std::string& path, const dsp::MelSpectrogram& mel);
dsp::MelSpectrogram ReadMelFile(const std::string& path);

}  // namespace vcdesk

#endif  // VCDESK_FEATIO_HPP_
