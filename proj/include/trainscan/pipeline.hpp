// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/audio.hpp"
#include "trainscan/classifier.hpp"
#include "trainscan/detectors.hpp"
#include "trainscan/dsp.hpp"
#include "trainscan/eventstore.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trainscan::pipeline {

/// Everything that decides what a unit of audio turns into.
struct AnalysisConfig {
    dsp::StftParams stft;            ///< sample_rate_hz is taken from the manifest
    int noise_block_frames = 512;    ///< frames per noise-profile block on the job grid
    detect::DetectorConfig detector;
    std::optional<detect::ClassifierModel> model;

    void validate() const;

    /// Canonical JSON (sorted keys, shortest round-trip reals). The model is
    /// embedded in full.
    std::string to_json() const;
    static AnalysisConfig from_json(const std::string& text);

    /// FNV-1a over the canonical JSON of the semantic fields; the model enters
    /// through its digest.
    std::string config_hash() const;
    std::string detector_id() const;

    /// Extra time analysed beyond a unit's padded span so that pulses at its
    /// edges are seen whole, in seconds.
    double guard_s(int sample_rate_hz) const;
};

/// One detected train before the acceptance decision.
struct FeatureRow {
    int channel = 0;
    UtcTime begin_utc{};
    UtcTime end_utc{};
    int n_pulses = 0;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    detect::FeatureVector features;
    double p_signal = 1.0;
    bool accepted = true;
    std::string label; ///< empty unless the table was labelled for training

    friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

void write_features(std::ostream& out, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_features(std::istream& in);
void save_features(const std::filesystem::path& path, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> load_features(const std::filesystem::path& path);

/// "signal" and the vocabulary's acoustic-source tags count as signal;
/// noise tags and any other label (easy_noise, hard_noise, ...) as noise.
bool is_signal_label(std::string_view label, bool bac1000_as_signal = true);

/// Labels each row with the truth event it overlaps (one-to-one matching on
/// channel and time); unmatched rows are false alarms and get `unmatched_label`.
void label_by_truth(std::vector<FeatureRow>& rows, const store::GroundTruthTable& truth,
                    double min_overlap_fraction = 0.5, const std::string& unmatched_label = "unmatched");

/// Noise-profile blocks of a job with `job_frames` frames: fixed blocks of
/// `block` frames, a trailing remainder shorter than block/2 folded into the
/// block before it.
struct BlockLayout {
    std::int64_t job_frames = 0;
    std::int64_t block = 0;

    std::int64_t count() const;
    std::int64_t begin(std::int64_t index) const;
    std::int64_t end(std::int64_t index) const;
    std::int64_t index_of(std::int64_t frame) const;
};

struct UnitOutput {
    std::vector<store::EventRecord> events;   ///< accepted, owned, ids unset (0)
    std::vector<FeatureRow> features;         ///< all owned trains
    std::int64_t frames_analyzed = 0;
    int left_extensions = 0;
    std::vector<TimeSpan> gaps;
};

/// Detects trains on one channel of `job_span` and keeps those whose begin
/// time lies in `core`. Analysis covers at least `padded` plus a guard, aligned
/// to noise blocks, and reaches further left when a pulse chain crossing the
/// core start needs its history. The output depends only on (manifest,
/// channel, job_span, core, config): analysing a partition of the job span
/// core by core and concatenating gives the single-pass output.
UnitOutput analyze_unit(const audio::RecordingManifest& manifest, int channel, const TimeSpan& job_span,
                        const TimeSpan& core, const TimeSpan& padded, const AnalysisConfig& config);

/// Whole-span, whole-channel analysis: the reference the chunked paths must match.
UnitOutput analyze_single_pass(const audio::RecordingManifest& manifest, int channel, const TimeSpan& job_span,
                               const AnalysisConfig& config);

} // namespace trainscan::pipeline
