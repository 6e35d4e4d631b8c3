// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_AUDIO_IO_H_
#define AVU_AUDIO_IO_H_

#include <filesystem>

#include "avu/dsp.h"

namespace avu {

// Reads RIFF/WAVE (PCM 8/16/24/32-bit or IEEE float32). Multi-channel input
// is averaged down to mono. Throws InputError on malformed files.
Waveform read_wav(const std::filesystem::path& path);

// Writes mono PCM16. Samples are clamped to the PCM16 range [-1, 1).
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Band-limited (Hann-windowed sinc) sample-rate conversion.
Waveform resample(const Waveform& w, int target_rate);

}  // namespace avu

#endif  // AVU_AUDIO_IO_H_
