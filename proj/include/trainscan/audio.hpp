// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/time.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace trainscan::audio {

/// Mono samples on an absolute timeline. Samples are nominally in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate_hz = 0;
    UtcTime start_utc{};
    int channel_id = 0;

    double duration_s() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
    }
};

enum class SampleFormat { pcm16, float32 };

struct WavInfo {
    int sample_rate_hz = 0;
    int channels = 0;
    SampleFormat format = SampleFormat::pcm16;
    std::int64_t frames = 0;
    std::uint64_t data_offset = 0;
};

/// Station, channel and start time encoded as `<station>_<channel>_<ISO8601>.wav`.
struct FileNameInfo {
    std::string station;
    int channel_id = 0;
    UtcTime start_utc{};
};

std::optional<FileNameInfo> parse_file_name(const std::string& file_name);
std::string make_file_name(const std::string& station, int channel_id, UtcTime start);

WavInfo read_wav_info(const std::filesystem::path& path);

/// Reads one channel of a PCM16 or float32 RIFF/WAVE file. Start time and
/// channel come from the file-name convention when it matches, otherwise they
/// are left at the epoch / channel 0.
AudioClip read_wav(const std::filesystem::path& path, int channel_index = 0);

/// Reads frames [first, first + count) of one channel, scaled to [-1, 1].
std::vector<float> read_wav_frames(const std::filesystem::path& path, std::int64_t first,
                                   std::int64_t count, int channel_index = 0);

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               SampleFormat format = SampleFormat::pcm16);

struct ManifestEntry {
    std::string path;
    std::string station;
    int channel_id = 0;
    UtcTime start_utc{};
    std::int64_t n_samples = 0;
    int sample_rate_hz = 0;
    int file_channel = 0; ///< channel index inside a multi-channel WAV

    double duration_s() const {
        return static_cast<double>(n_samples) / static_cast<double>(sample_rate_hz);
    }
    /// Grid index of the first sample (see sample_index_at_or_after).
    std::int64_t first_index() const { return sample_index_at_or_after(start_utc, sample_rate_hz); }
    std::int64_t end_index() const { return first_index() + n_samples; }
};

class RecordingManifest {
public:
    RecordingManifest() = default;

    /// Validates and indexes the entries. Throws Error(overlap) naming both
    /// files when two entries of a channel overlap, Error(invalid_argument) on
    /// mixed sample rates within a channel.
    explicit RecordingManifest(std::vector<ManifestEntry> entries);

    const std::vector<ManifestEntry>& entries() const { return entries_; }
    std::vector<int> channels() const;
    bool has_channel(int channel_id) const { return by_channel_.count(channel_id) != 0; }

    /// Entries of one channel sorted by start time.
    const std::vector<ManifestEntry>& channel(int channel_id) const;
    int sample_rate(int channel_id) const;
    /// Recorded extent of a channel, first sample to end of last sample.
    TimeSpan channel_extent(int channel_id) const;

    std::string to_json() const;
    static RecordingManifest from_json(const std::string& text);

    void save(const std::filesystem::path& path) const;
    static RecordingManifest load(const std::filesystem::path& path);

private:
    std::vector<ManifestEntry> entries_;
    std::map<int, std::vector<ManifestEntry>> by_channel_;
};

/// Scans `root` for WAV files following the naming convention. A
/// `manifest.json` inside root overrides the scan. Relative sidecar paths are
/// resolved against root.
RecordingManifest build_manifest(const std::filesystem::path& root);

struct ExtractedSpan {
    AudioClip clip;
    std::vector<TimeSpan> gaps;        ///< sub-spans with no recording (zero filled)
    std::vector<std::string> sources;  ///< contributing files in timeline order
};

/// Samples of grid indices [first, first + count) on one channel, stitched
/// across files. Throws Error(not_found) on an unknown channel and
/// Error(out_of_range) when nothing of the range was recorded.
ExtractedSpan extract_samples(const RecordingManifest& manifest, int channel_id,
                              std::int64_t first, std::int64_t count);

/// Samples whose grid time lies in [span.t0, span.t1).
ExtractedSpan extract_span(const RecordingManifest& manifest, int channel_id, const TimeSpan& span);

} // namespace trainscan::audio
