// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_WAV_HPP_
#define VCDESK_WAV_HPP_

#include <string>

#include "vcdesk/common.hpp"

namespace vcdesk {

// RIFF WAV, 16-bit PCM, mono. Samples are clipped to [-1, 1] on write.
void WriteWav(const std::string& path, const Waveform& w);
Waveform ReadWav(const std::string& path);

}  // namespace vcdesk

#endif  // VCDESK_WAV_HPP_
