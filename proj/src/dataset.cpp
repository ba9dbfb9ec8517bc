#include "sirentrack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "sirentrack/errors.hpp"
#include "sirentrack/rng.hpp"

namespace sirentrack {

namespace {

Label parse_label(const std::string& s) {
    if (s == "siren") return Label::siren;
    if (s == "noise") return Label::noise;
    throw FormatError("manifest: unknown label '" + s + "'", 0);
}

const char* label_name(Label label) {
    switch (label) {
        case Label::siren: return "siren";
        case Label::noise: return "noise";
        default: return "unlabeled";
    }
}

std::string path_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

// r-percent of n with a snap against FP noise on exact integers.
double ratio_target(double ratio_percent, std::size_t n) {
    double x = ratio_percent / 100.0 * static_cast<double>(n);
    const double nearest = std::round(x);
    if (std::abs(x - nearest) < 1e-9) x = nearest;
    return x;
}

}  // namespace

// --- Manifest ---------------------------------------------------------------

void Manifest::validate() const {
    std::set<std::string> seen;
    for (const ManifestEntry& e : entries) {
        if (e.label != Label::siren && e.label != Label::noise) {
            throw ConfigError("manifest: entry '" + e.source_id +
                              "' lacks a binary label");
        }
        if (!seen.insert(e.source_id).second) {
            throw ConfigError("manifest: duplicate source_id '" + e.source_id + "'");
        }
    }
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    Manifest m;
    m.name = path.stem().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_fields(line, '\t');
        if (fields.size() != 3) {
            throw FormatError("manifest line " + std::to_string(line_no) +
                                  ": expected {path, label, duration}",
                              0);
        }
        ManifestEntry e;
        e.path = fields[0];
        e.source_id = path_stem(fields[0]);
        e.label = parse_label(fields[1]);
        try {
            e.duration_s = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw FormatError("manifest line " + std::to_string(line_no) +
                                  ": bad duration '" + fields[2] + "'",
                              0);
        }
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    manifest.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    for (const ManifestEntry& e : manifest.entries) {
        out << e.path << '\t' << label_name(e.label) << '\t' << e.duration_s << '\n';
    }
}

// --- Split plan ----------------------------------------------------------------

SplitPlan make_splits(const Manifest& manifest, std::vector<double> ratios_percent,
                      int n_folds, double val_fraction, double test_fraction,
                      std::uint64_t seed) {
    manifest.validate();
    if (ratios_percent.empty()) {
        throw ConfigError("splits: no ratios given");
    }
    if (!std::is_sorted(ratios_percent.begin(), ratios_percent.end())) {
        throw ConfigError("splits: ratios must be ascending");
    }
    for (double r : ratios_percent) {
        if (!(r > 0.0) || r > 100.0) {
            throw ConfigError("splits: ratios must lie in (0, 100]");
        }
    }
    if (ratios_percent.back() != 100.0) {
        throw ConfigError("splits: the largest ratio must be 100");
    }
    if (n_folds < 1) {
        throw ConfigError("splits: need at least one fold");
    }
    if (val_fraction < 0.0 || test_fraction < 0.0 ||
        val_fraction + test_fraction >= 1.0) {
        throw ConfigError("splits: bad validation/test fractions");
    }

    std::vector<std::string> noise_ids, siren_ids;
    for (const ManifestEntry& e : manifest.entries) {
        (e.label == Label::siren ? siren_ids : noise_ids).push_back(e.source_id);
    }
    if (noise_ids.size() < 10 || siren_ids.size() < 10) {
        throw ConfigError("splits: need at least 10 entries per class, got " +
                          std::to_string(noise_ids.size()) + " noise / " +
                          std::to_string(siren_ids.size()) + " siren");
    }
    // Base order is independent of manifest ordering.
    std::sort(noise_ids.begin(), noise_ids.end());
    std::sort(siren_ids.begin(), siren_ids.end());

    Rng rng(seed);
    SplitPlan plan;
    plan.seed = seed;
    plan.ratios_percent = ratios_percent;

    auto carve = [&](std::vector<std::string>& ids, std::vector<std::string>& val,
                     std::vector<std::string>& test) {
        rng.shuffle(ids);
        const auto n_test = static_cast<std::size_t>(
            std::floor(ratio_target(test_fraction * 100.0, ids.size()) + 0.5));
        const auto n_val = static_cast<std::size_t>(
            std::floor(ratio_target(val_fraction * 100.0, ids.size()) + 0.5));
        test.insert(test.end(), ids.begin(),
                    ids.begin() + static_cast<std::ptrdiff_t>(n_test));
        val.insert(val.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test),
                   ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
        ids.erase(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    };
    carve(noise_ids, plan.val_ids, plan.test_ids);
    carve(siren_ids, plan.val_ids, plan.test_ids);

    // Per-class subset sizes: minority rounds up, majority rounds down, and
    // any class present in the pool keeps at least one sample. On the
    // reference corpus proportions this reproduces the published subset
    // sizes at every ratio.
    const bool noise_is_minority =
        noise_ids.size() < siren_ids.size() ||
        (noise_ids.size() == siren_ids.size() && false);  // tie -> siren rounds up
    std::set<std::string> warned;
    auto class_count = [&](double r, std::size_t n, bool minority) -> std::size_t {
        const double target = ratio_target(r, n);
        auto count =
            static_cast<std::size_t>(minority ? std::ceil(target) : std::floor(target));
        if (count == 0 && n > 0) {
            count = 1;
            std::ostringstream os;
            os << "ratio " << r << "%: " << (minority ? "minority" : "majority")
               << " class count bumped to 1 (degenerate split)";
            if (warned.insert(os.str()).second) plan.warnings.push_back(os.str());
        }
        return std::min(count, n);
    };

    plan.folds.assign(ratios_percent.size(), {});
    for (auto& per_ratio : plan.folds) per_ratio.resize(static_cast<std::size_t>(n_folds));

    for (int f = 0; f < n_folds; ++f) {
        std::vector<std::string> noise_order = noise_ids;
        std::vector<std::string> siren_order = siren_ids;
        rng.shuffle(noise_order);
        rng.shuffle(siren_order);
        for (std::size_t ri = 0; ri < ratios_percent.size(); ++ri) {
            const double r = ratios_percent[ri];
            const std::size_t nn = class_count(r, noise_order.size(), noise_is_minority);
            const std::size_t ns = class_count(r, siren_order.size(), !noise_is_minority);
            std::vector<std::string> ids;
            ids.reserve(nn + ns);
            ids.insert(ids.end(), noise_order.begin(),
                       noise_order.begin() + static_cast<std::ptrdiff_t>(nn));
            ids.insert(ids.end(), siren_order.begin(),
                       siren_order.begin() + static_cast<std::ptrdiff_t>(ns));
            plan.folds[ri][static_cast<std::size_t>(f)] = std::move(ids);
        }
    }
    return plan;
}

void write_split_plan(const SplitPlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "# sirentrack split plan v1\n";
    out << "seed\t" << plan.seed << "\n";
    auto write_list = [&](const std::vector<std::string>& ids) {
        for (const auto& id : ids) out << '\t' << id;
        out << '\n';
    };
    out << "validation";
    write_list(plan.val_ids);
    out << "test";
    write_list(plan.test_ids);
    for (std::size_t ri = 0; ri < plan.ratios_percent.size(); ++ri) {
        for (std::size_t f = 0; f < plan.folds[ri].size(); ++f) {
            out << "fold\t" << plan.ratios_percent[ri] << '\t' << f;
            write_list(plan.folds[ri][f]);
        }
    }
    for (const auto& w : plan.warnings) out << "warning\t" << w << '\n';
}

SplitPlan read_split_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open split plan " + path.string());
    }
    SplitPlan plan;
    std::map<double, std::map<std::size_t, std::vector<std::string>>> folds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_fields(line, '\t');
        const std::string& kind = fields[0];
        auto ids_from = [&](std::size_t first) {
            return std::vector<std::string>(fields.begin() + static_cast<std::ptrdiff_t>(first),
                                            fields.end());
        };
        try {
            if (kind == "seed" && fields.size() == 2) {
                plan.seed = std::stoull(fields[1]);
            } else if (kind == "validation") {
                plan.val_ids = ids_from(1);
            } else if (kind == "test") {
                plan.test_ids = ids_from(1);
            } else if (kind == "fold" && fields.size() >= 3) {
                const double ratio = std::stod(fields[1]);
                const std::size_t f = std::stoull(fields[2]);
                folds[ratio][f] = ids_from(3);
            } else if (kind == "warning" && fields.size() >= 2) {
                plan.warnings.push_back(fields[1]);
            } else {
                throw FormatError("split plan line " + std::to_string(line_no) +
                                      ": unknown record '" + kind + "'",
                                  0);
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("split plan line " + std::to_string(line_no) +
                                  ": bad number",
                              0);
        }
    }
    for (const auto& [ratio, by_fold] : folds) {
        plan.ratios_percent.push_back(ratio);
        std::vector<std::vector<std::string>> per_ratio(by_fold.rbegin()->first + 1);
        for (const auto& [f, ids] : by_fold) per_ratio[f] = ids;
        plan.folds.push_back(std::move(per_ratio));
    }
    return plan;
}

// --- Synthetic clips -------------------------------------------------------------

const char* siren_kind_name(SirenKind kind) {
    switch (kind) {
        case SirenKind::two_tone: return "two-tone";
        case SirenKind::wail: return "wail";
        case SirenKind::yelp: return "yelp";
    }
    return "unknown";
}

void SynthSpec::validate() const {
    if (!(sample_rate_hz > 0.0)) {
        throw ConfigError("synth: sample rate must be positive");
    }
    if (!(duration_s > 0.0)) {
        throw ConfigError("synth: duration must be positive");
    }
    if (label == Label::siren) {
        if (!(f0_lo_hz > 0.0) || !(f0_hi_hz >= f0_lo_hz) ||
            !(f0_hi_hz < sample_rate_hz / 2.0)) {
            throw ConfigError("synth: f0 range must lie inside (0, fs/2)");
        }
        if (!(mod_rate_hz > 0.0)) {
            throw ConfigError("synth: modulation rate must be positive");
        }
    }
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
        throw ConfigError("synth: SNR must be finite or +inf");
    }
}

namespace {

double clip_rms(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

void normalize_rms(std::vector<double>& x) {
    const double r = clip_rms(x);
    if (r > 0.0) {
        for (double& v : x) v /= r;
    }
}

// Paul Kellet's pink-noise filter over white Gaussian input.
std::vector<double> pink_noise(std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double white = rng.normal();
        b0 = 0.99886 * b0 + white * 0.0555179;
        b1 = 0.99332 * b1 + white * 0.0750759;
        b2 = 0.96900 * b2 + white * 0.1538520;
        b3 = 0.86650 * b3 + white * 0.3104856;
        b4 = 0.55000 * b4 + white * 0.5329522;
        b5 = -0.7616 * b5 - white * 0.0168980;
        out[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
        b6 = white * 0.115926;
    }
    return out;
}

// Speech-band emphasis: RBJ constant-peak bandpass biquad on white noise.
std::vector<double> babble_noise(std::size_t n, double fs, Rng& rng) {
    const double fc = 800.0;
    const double q = 0.7;
    const double w0 = 2.0 * std::numbers::pi * fc / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double b0 = alpha / a0;
    const double b2 = -alpha / a0;
    const double a1 = -2.0 * std::cos(w0) / a0;
    const double a2 = (1.0 - alpha) / a0;
    std::vector<double> out(n);
    double z1 = 0.0, z2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.normal();
        const double y = b0 * x + z1;
        z1 = -a1 * y + z2;  // b1 = 0
        z2 = b2 * x - a2 * y;
        out[i] = y;
    }
    return out;
}

std::vector<double> noise_bed(std::size_t n, double fs, Rng& rng) {
    std::vector<double> pink = pink_noise(n, rng);
    std::vector<double> babble = babble_noise(n, fs, rng);
    normalize_rms(pink);
    normalize_rms(babble);
    std::vector<double> bed(n);
    for (std::size_t i = 0; i < n; ++i) {
        bed[i] = 0.65 * pink[i] + 0.35 * babble[i];
    }
    normalize_rms(bed);
    return bed;
}

void normalize_peak(std::vector<double>& x, double peak) {
    double max_abs = 0.0;
    for (double v : x) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs > 0.0) {
        const double g = peak / max_abs;
        for (double& v : x) v *= g;
    }
}

}  // namespace

SynthClip synth_clip(const SynthSpec& spec) {
    spec.validate();
    const auto n = static_cast<std::size_t>(
        std::llround(spec.duration_s * spec.sample_rate_hz));
    Rng rng(spec.seed);

    SynthClip clip;
    clip.label = spec.label;
    clip.audio.sample_rate_hz = spec.sample_rate_hz;

    if (spec.label == Label::noise) {
        clip.audio.samples = noise_bed(n, spec.sample_rate_hz, rng);
        normalize_peak(clip.audio.samples, 0.9);
        return clip;
    }

    std::vector<double> tone(n);
    double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate_hz;
        const double cycle = t * spec.mod_rate_hz - std::floor(t * spec.mod_rate_hz);
        double f;
        if (spec.kind == SirenKind::two_tone) {
            f = cycle < 0.5 ? spec.f0_lo_hz : spec.f0_hi_hz;
        } else {
            // wail and yelp share the triangular law; the rate separates them
            const double tri = cycle < 0.5 ? 2.0 * cycle : 2.0 * (1.0 - cycle);
            f = spec.f0_lo_hz + (spec.f0_hi_hz - spec.f0_lo_hz) * tri;
        }
        phase += 2.0 * std::numbers::pi * f / spec.sample_rate_hz;
        tone[i] = std::sin(phase);
    }

    if (std::isinf(spec.snr_db)) {
        clip.audio.samples = std::move(tone);
    } else {
        std::vector<double> bed = noise_bed(n, spec.sample_rate_hz, rng);
        const double noise_gain =
            clip_rms(tone) / std::pow(10.0, spec.snr_db / 20.0);
        clip.audio.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            clip.audio.samples[i] = tone[i] + noise_gain * bed[i];
        }
    }
    normalize_peak(clip.audio.samples, 0.9);
    return clip;
}

// --- Ingest -------------------------------------------------------------------

std::string IngestReport::to_text() const {
    std::ostringstream os;
    os << "files\t" << n_files << "\n"
       << "clips\t" << n_clips << "\n"
       << "padded\t" << n_padded << "\n"
       << "existing\t" << n_existing << "\n"
       << "skipped\t" << skips.size() << "\n";
    for (const IngestSkip& s : skips) {
        os << "skip\t" << s.source_id << '\t' << s.reason << '\n';
    }
    return os.str();
}

IngestReport ingest(const Manifest& manifest, const std::filesystem::path& store_dir,
                    const IngestPolicies& policies) {
    manifest.validate();
    policies.anf.validate();
    policies.power.validate(policies.target_rate_hz);
    std::filesystem::create_directories(store_dir);

    IngestReport report;
    std::vector<StoreEntry> index;

    const auto window = static_cast<std::size_t>(
        std::llround(policies.window_s * policies.target_rate_hz));

    AnfConfig anf = policies.anf;
    anf.sample_rate_hz = policies.target_rate_hz;

    for (const ManifestEntry& entry : manifest.entries) {
        ++report.n_files;
        try {
            AudioBuffer audio = decode_wav_file(entry.path);
            audio = resample(audio, policies.target_rate_hz);

            bool padded = false;
            std::vector<AudioBuffer> segments;
            if (audio.samples.size() < window) {
                audio.samples.resize(window, 0.0);
                padded = true;
                segments.push_back(std::move(audio));
            } else {
                segments = segment(audio, policies.window_s, policies.segment_policy);
            }
            if (padded) ++report.n_padded;

            for (std::size_t k = 0; k < segments.size(); ++k) {
                FeatureClip clip =
                    extract_features(segments[k].samples, anf, policies.power);
                clip.label = entry.label;
                clip.source_id = entry.source_id + "#" + std::to_string(k);

                StoreEntry se;
                se.clip_id = clip.source_id;
                se.file = sanitize_id(entry.source_id) + "_" + std::to_string(k) + ".anff";
                se.label = entry.label;
                se.file_id = entry.source_id;
                se.padded = padded;

                const auto out_path = store_dir / se.file;
                if (!policies.force && std::filesystem::exists(out_path)) {
                    ++report.n_existing;
                } else {
                    write_features(clip, out_path);
                }
                index.push_back(std::move(se));
                ++report.n_clips;
            }
        } catch (const std::exception& e) {
            report.skips.push_back(IngestSkip{entry.source_id, e.what()});
        }
    }

    std::sort(index.begin(), index.end(),
              [](const StoreEntry& a, const StoreEntry& b) { return a.clip_id < b.clip_id; });
    std::ofstream out(store_dir / "index.tsv", std::ios::trunc);
    if (!out) {
        throw IoError("cannot write store index in " + store_dir.string());
    }
    for (const StoreEntry& se : index) {
        out << se.clip_id << '\t' << se.file << '\t' << label_name(se.label) << '\t'
            << se.file_id << '\t' << (se.padded ? 1 : 0) << '\n';
    }
    return report;
}

std::vector<StoreEntry> read_store_index(const std::filesystem::path& store_dir) {
    const auto index_path = store_dir / "index.tsv";
    std::ifstream in(index_path);
    if (!in) {
        throw IoError("cannot open store index " + index_path.string());
    }
    std::vector<StoreEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_fields(line, '\t');
        if (fields.size() != 5) {
            throw FormatError("store index line " + std::to_string(line_no) +
                                  ": expected 5 fields",
                              0);
        }
        StoreEntry se;
        se.clip_id = fields[0];
        se.file = fields[1];
        se.label = parse_label(fields[2]);
        se.file_id = fields[3];
        se.padded = fields[4] == "1";
        entries.push_back(std::move(se));
    }
    return entries;
}

std::vector<FeatureClip> load_clips(const std::filesystem::path& store_dir,
                                    std::span<const std::string> file_ids) {
    const auto index = read_store_index(store_dir);
    const std::set<std::string> filter(file_ids.begin(), file_ids.end());
    std::vector<FeatureClip> clips;
    for (const StoreEntry& se : index) {
        if (!filter.empty() && !filter.contains(se.file_id)) continue;
        FeatureClip clip = read_features(store_dir / se.file);
        clip.label = se.label;
        clip.source_id = se.clip_id;
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace sirentrack
