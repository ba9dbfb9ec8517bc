#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sirentrack {

struct AudioBuffer {
    std::vector<double> samples;  // normalized amplitudes in [-1, 1]
    double sample_rate_hz = 0.0;

    double duration_s() const {
        return sample_rate_hz > 0.0
                   ? static_cast<double>(samples.size()) / sample_rate_hz
                   : 0.0;
    }
};

// RIFF/WAVE decoder for PCM 16-bit and IEEE float 32-bit, 1-2 channels.
// Integer samples are scaled by 1/32768, stereo is averaged to mono and
// float data is clamped to [-1, 1]. Unsupported codecs raise
// UnsupportedFormatError, structural damage raises CorruptFileError.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);
AudioBuffer decode_wav_file(const std::filesystem::path& path);

// Mono PCM 16-bit writer used for the synthetic corpus.
std::vector<std::uint8_t> encode_wav_pcm16(const AudioBuffer& buffer);
void write_wav_pcm16(const AudioBuffer& buffer, const std::filesystem::path& path);

// Band-limited rate conversion with a Kaiser-windowed sinc kernel
// (beta = 8, 32 taps per phase). Output length is round(N * target/source);
// equal rates return the input bitwise. Output is clamped to [-1, 1] to
// absorb interpolation overshoot.
AudioBuffer resample(const AudioBuffer& buffer, double target_hz);

enum class SegmentPolicy {
    first_window,     // at most one segment: the first window
    non_overlapping,  // floor(duration/window) segments, remainder dropped
};

// Splits a buffer into fixed windows of window_s seconds. Under
// first_window a buffer shorter than one window raises ShortInputError;
// under non_overlapping it yields no segments.
std::vector<AudioBuffer> segment(const AudioBuffer& buffer, double window_s,
                                 SegmentPolicy policy);

}  // namespace sirentrack
