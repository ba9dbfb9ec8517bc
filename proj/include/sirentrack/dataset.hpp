#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sirentrack/anf.hpp"
#include "sirentrack/audio.hpp"
#include "sirentrack/features.hpp"

namespace sirentrack {

struct ManifestEntry {
    std::string source_id;  // path stem; unique within a manifest
    std::string path;
    Label label = Label::unlabeled;
    double duration_s = 0.0;
};

struct Manifest {
    std::string name;
    std::vector<ManifestEntry> entries;

    void validate() const;  // unique ids, binary labels
};

// Tab-separated records {path, label, duration}; '#' lines are comments.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Nested data-efficiency splits: one stratified shuffle of the training pool
// per fold, ratio subsets taken as per-class prefixes so that each smaller
// subset is contained in every larger one of the same fold.
struct SplitPlan {
    std::vector<double> ratios_percent;  // ascending, last one 100
    // folds[ratio_index][fold_index] -> training source_ids
    std::vector<std::vector<std::vector<std::string>>> folds;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;  // degenerate-split notes

    std::size_t n_folds() const { return folds.empty() ? 0 : folds.front().size(); }
};

// Carves stratified validation/test lists off the manifest, then builds
// n_folds nested subset chains over the remaining training pool. Subset
// sizes are apportioned per class: the minority class rounds up, the
// majority class rounds down, and every class present keeps at least one
// sample (a bump that is recorded as a degenerate-split warning).
SplitPlan make_splits(const Manifest& manifest, std::vector<double> ratios_percent,
                      int n_folds, double val_fraction, double test_fraction,
                      std::uint64_t seed);

void write_split_plan(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan read_split_plan(const std::filesystem::path& path);

enum class SirenKind : std::uint8_t {
    two_tone = 0,  // alternation between the two band edges
    wail = 1,      // slow triangular sweep across the band
    yelp = 2,      // fast triangular sweep across the band
};

const char* siren_kind_name(SirenKind kind);

// Recipe for one synthetic clip; fully determined by its seed.
struct SynthSpec {
    SirenKind kind = SirenKind::wail;
    Label label = Label::siren;  // noise -> bed only, no tone
    double f0_lo_hz = 400.0;
    double f0_hi_hz = 1200.0;
    double mod_rate_hz = 0.3;
    double snr_db = 10.0;  // +inf means no noise bed
    double duration_s = 2.0;
    double sample_rate_hz = 16000.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthClip {
    AudioBuffer audio;
    Label label;
};

// Tone with the requested frequency law mixed against a pink-plus-babble
// noise bed at the given SNR, peak-normalized to 0.9. Bit-identical for
// identical specs.
SynthClip synth_clip(const SynthSpec& spec);

struct IngestPolicies {
    SegmentPolicy segment_policy = SegmentPolicy::first_window;
    double window_s = 2.0;
    double target_rate_hz = 16000.0;
    AnfConfig anf;
    PowerConfig power;
    bool force = false;  // rewrite feature files that already exist
};

struct IngestSkip {
    std::string source_id;
    std::string reason;
};

struct IngestReport {
    std::size_t n_files = 0;
    std::size_t n_clips = 0;
    std::size_t n_padded = 0;    // files shorter than one window, zero-padded
    std::size_t n_existing = 0;  // feature files kept as-is (no --force)
    std::vector<IngestSkip> skips;

    std::string to_text() const;
};

// decode -> mono -> resample -> segment -> extract -> write per manifest
// entry. Per-file failures are recorded as skips and never abort the batch.
// Writes <store>/index.tsv plus one .anff per segment.
IngestReport ingest(const Manifest& manifest, const std::filesystem::path& store_dir,
                    const IngestPolicies& policies);

struct StoreEntry {
    std::string clip_id;  // "<source_id>#<segment>"
    std::string file;     // relative to the store directory
    Label label = Label::unlabeled;
    std::string file_id;  // manifest source_id the clip came from
    bool padded = false;
};

std::vector<StoreEntry> read_store_index(const std::filesystem::path& store_dir);

// Loads the clips whose originating file id is in `file_ids`, ordered by
// clip_id. An empty filter loads the whole store.
std::vector<FeatureClip> load_clips(const std::filesystem::path& store_dir,
                                    std::span<const std::string> file_ids = {});

}  // namespace sirentrack
