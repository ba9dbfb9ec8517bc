#include "sirentrack/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>

#include "sirentrack/errors.hpp"
#include "sirentrack/wire.hpp"

namespace sirentrack {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits_per_sample = 0;
};

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

// --- Kaiser-windowed sinc resampler -------------------------------------

double bessel_i0(double x) {
    // Power series; converges fast for the |x| <= 8 used here.
    const double half = x / 2.0;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < 1e-14 * sum) break;
    }
    return sum;
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

class SincResampler {
public:
    static constexpr int kHalfTaps = 16;  // 32 taps per phase
    static constexpr int kPhases = 512;
    static constexpr double kBeta = 8.0;

    explicit SincResampler(double ratio) {
        // Cutoff at the narrower of the two Nyquist bands.
        const double fc = std::min(1.0, ratio);
        const double i0_beta = bessel_i0(kBeta);
        table_.resize(static_cast<std::size_t>(kPhases + 1) * 2 * kHalfTaps);
        for (int p = 0; p <= kPhases; ++p) {
            const double frac = static_cast<double>(p) / kPhases;
            double sum = 0.0;
            double* taps = &table_[static_cast<std::size_t>(p) * 2 * kHalfTaps];
            for (int m = -kHalfTaps + 1; m <= kHalfTaps; ++m) {
                const double u = m - frac;
                const double w = u / kHalfTaps;
                double value = 0.0;
                if (std::abs(w) <= 1.0) {
                    const double kaiser =
                        bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - w * w))) / i0_beta;
                    value = fc * sinc(fc * u) * kaiser;
                }
                taps[m + kHalfTaps - 1] = value;
                sum += value;
            }
            // Per-phase normalization pins the DC gain to 1 and keeps the
            // passband ripple below the test tolerances.
            for (int i = 0; i < 2 * kHalfTaps; ++i) taps[i] /= sum;
        }
    }

    double sample(std::span<const double> in, double t) const {
        const double floor_t = std::floor(t);
        const auto j0 = static_cast<std::int64_t>(floor_t);
        double frac = t - floor_t;
        int p = static_cast<int>(std::lround(frac * kPhases));
        const double* taps = &table_[static_cast<std::size_t>(p) * 2 * kHalfTaps];
        const auto n = static_cast<std::int64_t>(in.size());
        double acc = 0.0;
        for (int m = -kHalfTaps + 1; m <= kHalfTaps; ++m) {
            const std::int64_t j = j0 + m;
            if (j < 0 || j >= n) continue;
            acc += in[static_cast<std::size_t>(j)] * taps[m + kHalfTaps - 1];
        }
        return acc;
    }

private:
    std::vector<double> table_;
};

}  // namespace

// --- WAV ------------------------------------------------------------------

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
    wire::Reader r(bytes);

    auto expect_tag = [&](const char* tag) {
        const std::size_t at = r.offset();
        const std::string got = r.str(4);
        if (got != tag) {
            throw CorruptFileError("wav: expected '" + std::string(tag) +
                                   "' tag at byte " + std::to_string(at));
        }
    };

    try {
        expect_tag("RIFF");
        r.u32();  // declared riff size; files in the wild often lie, ignored
        expect_tag("WAVE");

        std::optional<FmtChunk> fmt;
        std::optional<std::pair<std::size_t, std::size_t>> data;  // offset, size

        while (r.remaining() >= 8) {
            const std::string id = r.str(4);
            const std::uint32_t size = r.u32();
            if (id == "fmt ") {
                if (size < 16) {
                    throw CorruptFileError("wav: fmt chunk too small");
                }
                FmtChunk f;
                f.format = r.u16();
                f.channels = r.u16();
                f.sample_rate = r.u32();
                r.u32();  // byte rate
                r.u16();  // block align
                f.bits_per_sample = r.u16();
                r.skip(size - 16);
                fmt = f;
            } else if (id == "data") {
                data = {r.offset(), size};
                r.skip(size);
            } else {
                r.skip(size);
            }
            if (size % 2 == 1 && r.remaining() > 0) r.skip(1);  // chunk padding
        }

        if (!fmt) throw CorruptFileError("wav: missing fmt chunk");
        if (!data) throw CorruptFileError("wav: missing data chunk");
        if (fmt->channels < 1 || fmt->channels > 2) {
            throw UnsupportedFormatError("wav: " + std::to_string(fmt->channels) +
                                         " channels unsupported (need 1 or 2)");
        }
        const bool pcm16 = fmt->format == kFormatPcm && fmt->bits_per_sample == 16;
        const bool f32 = fmt->format == kFormatIeeeFloat && fmt->bits_per_sample == 32;
        if (!pcm16 && !f32) {
            throw UnsupportedFormatError(
                "wav: format " + std::to_string(fmt->format) + " at " +
                std::to_string(fmt->bits_per_sample) +
                " bits unsupported (need PCM16 or float32)");
        }

        const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
        const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
        if (data->second % frame_bytes != 0) {
            throw CorruptFileError("wav: data chunk size is not a whole frame count");
        }
        const std::size_t frames = data->second / frame_bytes;

        AudioBuffer out;
        out.sample_rate_hz = fmt->sample_rate;
        out.samples.resize(frames);

        wire::Reader dr(bytes.subspan(data->first, data->second));
        for (std::size_t i = 0; i < frames; ++i) {
            double acc = 0.0;
            for (std::uint16_t c = 0; c < fmt->channels; ++c) {
                double v;
                if (pcm16) {
                    v = static_cast<std::int16_t>(dr.u16()) / 32768.0;
                } else {
                    v = dr.f32();
                    if (!std::isfinite(v)) {
                        throw CorruptFileError("wav: non-finite float sample");
                    }
                    v = clamp1(v);
                }
                acc += v;
            }
            out.samples[i] = acc / fmt->channels;
        }
        return out;
    } catch (const FormatError& e) {
        throw CorruptFileError(std::string("wav: truncated file (byte offset ") +
                               std::to_string(e.byte_offset) + ")");
    }
}

AudioBuffer decode_wav_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav_pcm16(const AudioBuffer& buffer) {
    const std::uint32_t n = static_cast<std::uint32_t>(buffer.samples.size());
    const std::uint32_t data_size = 2 * n;
    const auto rate = static_cast<std::uint32_t>(std::llround(buffer.sample_rate_hz));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    wire::put_bytes(out, "RIFF", 4);
    wire::put_u32(out, 36 + data_size);
    wire::put_bytes(out, "WAVE", 4);
    wire::put_bytes(out, "fmt ", 4);
    wire::put_u32(out, 16);
    wire::put_u16(out, kFormatPcm);
    wire::put_u16(out, 1);  // mono
    wire::put_u32(out, rate);
    wire::put_u32(out, rate * 2);
    wire::put_u16(out, 2);
    wire::put_u16(out, 16);
    wire::put_bytes(out, "data", 4);
    wire::put_u32(out, data_size);
    for (double s : buffer.samples) {
        const auto q = static_cast<std::int16_t>(
            std::clamp(std::lround(clamp1(s) * 32767.0), -32768L, 32767L));
        wire::put_u16(out, static_cast<std::uint16_t>(q));
    }
    return out;
}

void write_wav_pcm16(const AudioBuffer& buffer, const std::filesystem::path& path) {
    const auto bytes = encode_wav_pcm16(buffer);
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

// --- Resampling -------------------------------------------------------------

AudioBuffer resample(const AudioBuffer& buffer, double target_hz) {
    if (!(target_hz > 0.0) || !std::isfinite(target_hz)) {
        throw ConfigError("resample: target rate must be positive");
    }
    if (!(buffer.sample_rate_hz > 0.0)) {
        throw ConfigError("resample: source rate must be positive");
    }
    if (buffer.sample_rate_hz == target_hz) {
        return buffer;
    }

    const double ratio = target_hz / buffer.sample_rate_hz;
    const auto out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(buffer.samples.size()) * ratio));

    SincResampler kernel(ratio);
    AudioBuffer out;
    out.sample_rate_hz = target_hz;
    out.samples.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double t = static_cast<double>(i) / ratio;
        out.samples[i] = clamp1(kernel.sample(buffer.samples, t));
    }
    return out;
}

// --- Segmentation -------------------------------------------------------------

std::vector<AudioBuffer> segment(const AudioBuffer& buffer, double window_s,
                                 SegmentPolicy policy) {
    if (!(window_s > 0.0)) {
        throw ConfigError("segment: window must be positive");
    }
    const auto window =
        static_cast<std::size_t>(std::llround(window_s * buffer.sample_rate_hz));
    if (window == 0) {
        throw ConfigError("segment: window shorter than one sample");
    }

    std::vector<AudioBuffer> out;
    if (policy == SegmentPolicy::first_window) {
        if (buffer.samples.size() < window) {
            throw ShortInputError("segment: buffer of " +
                                  std::to_string(buffer.samples.size()) +
                                  " samples is shorter than one " +
                                  std::to_string(window) + "-sample window");
        }
        AudioBuffer seg;
        seg.sample_rate_hz = buffer.sample_rate_hz;
        seg.samples.assign(buffer.samples.begin(),
                           buffer.samples.begin() + static_cast<std::ptrdiff_t>(window));
        out.push_back(std::move(seg));
        return out;
    }

    const std::size_t count = buffer.samples.size() / window;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        AudioBuffer seg;
        seg.sample_rate_hz = buffer.sample_rate_hz;
        const auto begin = buffer.samples.begin() + static_cast<std::ptrdiff_t>(k * window);
        seg.samples.assign(begin, begin + static_cast<std::ptrdiff_t>(window));
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace sirentrack
