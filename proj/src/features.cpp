#include "sirentrack/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sirentrack/errors.hpp"
#include "sirentrack/wire.hpp"

namespace sirentrack {

namespace {
constexpr char kMagic[4] = {'A', 'N', 'F', 'F'};
constexpr double kSilenceFloor = 1e-12;
}  // namespace

double PowerConfig::lambda(double sample_rate_hz) const {
    return std::exp(-1.0 / (tau * sample_rate_hz));
}

void PowerConfig::validate(double sample_rate_hz) const {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ConfigError("power: tau must be positive and finite");
    }
    if (q_down < 1) {
        throw ConfigError("power: q_down must be >= 1");
    }
    const double l = lambda(sample_rate_hz);
    if (!(l > 0.0) || !(l < 1.0)) {
        throw ConfigError("power: lambda = exp(-1/(tau*fs)) must lie in (0, 1)");
    }
}

PowerStepOutput power_step(PowerState& state, double y, double e, double lambda) {
    if (!std::isfinite(y) || !std::isfinite(e)) {
        throw NumericalInputError("power: non-finite input");
    }
    state.p_y = lambda * state.p_y + (1.0 - lambda) * y * y;
    state.p_e = lambda * state.p_e + (1.0 - lambda) * e * e;
    const double p_f = state.p_y - state.p_e;
    // Transients can push P_e above P_y; the ratio is clamped so the feature
    // stays normalized. Near-zero input power carries no tonal evidence.
    double ratio = state.p_y < kSilenceFloor ? 0.0 : p_f / state.p_y;
    ratio = std::clamp(ratio, 0.0, 1.0);
    return PowerStepOutput{p_f, ratio};
}

FeatureClip extract_channels(std::span<const double> samples,
                             const AnfConfig& anf_config,
                             const PowerConfig& power_config) {
    power_config.validate(anf_config.sample_rate_hz);
    if (samples.size() < 3) {
        throw InputSizeError("features: need at least 3 samples, got " +
                             std::to_string(samples.size()));
    }

    const double lambda = power_config.lambda(anf_config.sample_rate_hz);
    const double half_fs = anf_config.sample_rate_hz / 2.0;

    AnfState anf = anf_init(anf_config);
    PowerState power;

    std::vector<double> f_hat;
    std::vector<double> ratio;
    f_hat.reserve(samples.size() - 2);
    ratio.reserve(samples.size() - 2);

    for (std::size_t n = 2; n < samples.size(); ++n) {
        const AnfStepOutput step = anf_step(anf, samples[n], anf_config);
        const PowerStepOutput pw = power_step(power, samples[n], step.e, lambda);
        f_hat.push_back(step.f_hat);
        ratio.push_back(pw.p_ratio);
    }

    const std::size_t q = power_config.q_down;
    const std::size_t out_len = f_hat.size() / q;

    FeatureClip clip;
    clip.sample_rate_hz = static_cast<std::uint32_t>(anf_config.sample_rate_hz);
    clip.q_down = static_cast<std::uint16_t>(q);
    clip.f_norm.resize(out_len);
    clip.p_ratio.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        clip.f_norm[i] = static_cast<float>(f_hat[i * q] / half_fs);
        clip.p_ratio[i] = static_cast<float>(ratio[i * q]);
    }
    return clip;
}

FeatureClip extract_features(std::span<const double> samples,
                             const AnfConfig& anf_config,
                             const PowerConfig& power_config) {
    anf_config.validate();
    const auto expected =
        static_cast<std::size_t>(std::llround(2.0 * anf_config.sample_rate_hz));
    if (samples.size() != expected) {
        throw InputSizeError("features: expected a 2 s buffer of " +
                             std::to_string(expected) + " samples, got " +
                             std::to_string(samples.size()));
    }
    return extract_channels(samples, anf_config, power_config);
}

std::vector<std::uint8_t> encode_features(const FeatureClip& clip) {
    if (clip.f_norm.size() != clip.p_ratio.size()) {
        throw ConfigError("features: channel lengths differ");
    }
    std::vector<std::uint8_t> out;
    out.reserve(32 + clip.source_id.size() + 8 * clip.length());
    wire::put_bytes(out, kMagic, 4);
    wire::put_u16(out, kFeatureFormatVersion);
    wire::put_u32(out, clip.sample_rate_hz);
    wire::put_u16(out, clip.q_down);
    wire::put_u32(out, static_cast<std::uint32_t>(clip.length()));
    out.push_back(static_cast<std::uint8_t>(clip.label));
    wire::put_u32(out, static_cast<std::uint32_t>(clip.source_id.size()));
    wire::put_bytes(out, clip.source_id.data(), clip.source_id.size());
    for (float v : clip.f_norm) wire::put_f32(out, v);
    for (float v : clip.p_ratio) wire::put_f32(out, v);
    return out;
}

FeatureClip decode_features(std::span<const std::uint8_t> bytes) {
    wire::Reader r(bytes);
    const std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw FormatError("not a feature file (bad magic)", 0);
    }
    const std::uint16_t version = r.u16();
    if (version != kFeatureFormatVersion) {
        throw VersionError("feature file version " + std::to_string(version) +
                           " unsupported (expected " +
                           std::to_string(kFeatureFormatVersion) + ")");
    }

    FeatureClip clip;
    clip.sample_rate_hz = r.u32();
    clip.q_down = r.u16();
    const std::uint32_t length = r.u32();
    const std::uint8_t label = r.u8();
    if (label != 0 && label != 1 && label != 255) {
        throw FormatError("invalid label byte", r.offset() - 1);
    }
    clip.label = static_cast<Label>(label);
    const std::uint32_t id_len = r.u32();
    clip.source_id = r.str(id_len);
    clip.f_norm.resize(length);
    clip.p_ratio.resize(length);
    for (auto& v : clip.f_norm) v = r.f32();
    for (auto& v : clip.p_ratio) v = r.f32();
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after feature payload", r.offset());
    }
    return clip;
}

void write_features(const FeatureClip& clip, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = encode_features(clip);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

FeatureClip read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_features(bytes);
}

}  // namespace sirentrack
