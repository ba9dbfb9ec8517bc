#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sirentrack/anf.hpp"

namespace sirentrack {

enum class Label : std::uint8_t {
    noise = 0,
    siren = 1,
    unlabeled = 255,
};

struct PowerConfig {
    double tau = 0.02;         // recursive-averaging time constant, seconds
    std::uint32_t q_down = 5;  // decimation factor

    double lambda(double sample_rate_hz) const;
    // Throws ConfigError when tau <= 0, q_down < 1, or lambda leaves (0, 1).
    void validate(double sample_rate_hz) const;
};

struct PowerState {
    double p_y = 0.0;  // smoothed input power
    double p_e = 0.0;  // smoothed residual power
};

struct PowerStepOutput {
    double p_f;      // power of the suppressed component, P_y - P_e
    double p_ratio;  // P_f / P_y, clamped to [0, 1]; 0 while P_y < 1e-12
};

PowerStepOutput power_step(PowerState& state, double y, double e, double lambda);

// Two-channel feature of one audio segment. Channel 0 is the tracked
// frequency normalized to fs/2, channel 1 the power ratio; both are
// decimated by q_down and stored in 32-bit floats.
struct FeatureClip {
    std::vector<float> f_norm;
    std::vector<float> p_ratio;
    Label label = Label::unlabeled;
    std::string source_id;
    std::uint32_t sample_rate_hz = 16000;
    std::uint16_t q_down = 5;

    std::size_t length() const { return f_norm.size(); }
    bool operator==(const FeatureClip&) const = default;
};

// Fused tracker + power recursion over any buffer with at least 3 samples.
// The per-sample loop emits N-2 pairs; decimation keeps entries 0, q, 2q, ...
// up to floor((N-2)/q) of them, so a trailing partial group is dropped.
FeatureClip extract_channels(std::span<const double> samples,
                             const AnfConfig& anf_config,
                             const PowerConfig& power_config);

// Same computation restricted to exactly 2 s of audio; anything else is an
// InputSizeError (padding/rejection is the ingest layer's call).
FeatureClip extract_features(std::span<const double> samples,
                             const AnfConfig& anf_config,
                             const PowerConfig& power_config);

// Binary little-endian feature file, bit-exact round trip:
//   "ANFF" | version u16 | fs u32 | q_down u16 | length u32 | label u8 |
//   source_id (u32 length + UTF-8 bytes) | channel 0 f32[L] | channel 1 f32[L]
inline constexpr std::uint16_t kFeatureFormatVersion = 1;

void write_features(const FeatureClip& clip, const std::filesystem::path& path);
FeatureClip read_features(const std::filesystem::path& path);

// Buffer-level codec used by the file functions and the tests.
std::vector<std::uint8_t> encode_features(const FeatureClip& clip);
FeatureClip decode_features(std::span<const std::uint8_t> bytes);

}  // namespace sirentrack
