// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/time.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trainscan::store {

struct TagLabel {
    std::string_view code;
    std::string_view description;
};

/// The closed annotation vocabulary, in its canonical order.
inline constexpr std::array<TagLabel, 11> kTagVocabulary = {{
    {"Bac_1000", "Possible minke whale, pulse train which could be made by minke but not definite"},
    {"Bac_3100", "Definite minke whale"},
    {"Ano_3100", "Noise"},
    {"Hdd_3100", "Hard drive, device noise"},
    {"Mel_1000", "Haddock"},
    {"Mno_1000", "Moan pulse train (likely source: humpback)"},
    {"Mno_2000", "Humpback song"},
    {"Egl_1000", "Right whale"},
    {"Lpt_1000", "Low frequency pulse train (source: unknown)"},
    {"Mno_3000", "Pulse train made by humpback"},
    {"Unid_1000", "Unidentified source"},
}};

std::optional<TagLabel> find_tag(std::string_view code);
bool is_valid_tag(std::string_view code);
/// Position in kTagVocabulary, or kTagVocabulary.size() when unknown.
std::size_t tag_order(std::string_view code);
/// Ano_3100 and Hdd_3100 mark noise; everything else is an acoustic source.
bool is_noise_tag(std::string_view code);

struct EventRecord {
    std::uint64_t event_id = 0;
    int channel = 0;
    UtcTime begin_utc{};
    UtcTime end_utc{};
    Micros begin_s{0}; ///< offset from the job span start
    Micros end_s{0};
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    int n_pulses = 0;
    double score = 0.0; ///< p_signal
    std::string detector_id;
    std::string config_hash;
    std::optional<std::string> tag;
    std::string annotator;
    std::vector<std::string> sources;

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

inline constexpr std::array<std::string_view, 15> kEventColumns = {
    "event_id", "channel", "begin_utc", "end_utc",     "begin_s", "end_s", "f_lo_hz",  "f_hi_hz",
    "n_pulses", "score",   "detector_id", "config_hash", "tag",   "annotator", "sources",
};

/// Sort key used by merged job results: (channel, begin, f_lo, score).
bool event_order(const EventRecord& a, const EventRecord& b);

void write_table(std::ostream& out, const std::vector<EventRecord>& events);
std::string write_table(const std::vector<EventRecord>& events);
/// Throws Error(format) naming the offending line number.
std::vector<EventRecord> read_table(std::istream& in);
std::vector<EventRecord> read_table_string(const std::string& text);

void save_table(const std::filesystem::path& path, const std::vector<EventRecord>& events);
std::vector<EventRecord> load_table(const std::filesystem::path& path);

/// Escapes '\\', tab and newline so free text fits one TSV cell.
std::string escape_cell(std::string_view s);
std::string unescape_cell(std::string_view s);
std::string format_real(double v);

struct TagJournalEntry {
    UtcTime at{};
    std::uint64_t event_id = 0;
    std::string tag;
    std::optional<std::string> previous;
    std::string annotator;
};

/// Single-writer, multi-reader event table with an append-only tag journal.
/// Readers get immutable snapshots; every mutation replaces the snapshot.
class EventStore {
public:
    using Snapshot = std::shared_ptr<const std::vector<EventRecord>>;

    /// In-memory store (no persistence).
    explicit EventStore(std::vector<EventRecord> events = {});
    /// Loads `table` if it exists; writes go to `table` and `journal`.
    EventStore(std::filesystem::path table, std::filesystem::path journal);

    Snapshot snapshot() const;
    std::optional<EventRecord> get(std::uint64_t event_id) const;

    /// Throws Error(not_found) for an unknown event and Error(invalid_argument)
    /// for a code outside the vocabulary; the record is untouched on error.
    EventRecord set_tag(std::uint64_t event_id, std::string_view tag, std::string_view annotator,
                        UtcTime at = std::chrono::time_point_cast<Micros>(std::chrono::system_clock::now()));

    /// Appends records, renumbering ids after the current maximum.
    void append(std::vector<EventRecord> events);
    void replace(std::vector<EventRecord> events);

    std::vector<TagJournalEntry> journal() const;

private:
    void persist_locked(const std::vector<EventRecord>& events);

    mutable std::mutex mutex_;
    Snapshot events_;
    std::vector<TagJournalEntry> journal_;
    std::optional<std::filesystem::path> table_path_;
    std::optional<std::filesystem::path> journal_path_;
};

struct TruthEvent {
    int channel = 0;
    UtcTime begin_utc{};
    UtcTime end_utc{};
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    std::string label;

    friend bool operator==(const TruthEvent&, const TruthEvent&) = default;
};

class GroundTruthTable {
public:
    GroundTruthTable() = default;
    explicit GroundTruthTable(std::vector<TruthEvent> events); ///< sorts by (channel, begin)

    const std::vector<TruthEvent>& events() const { return events_; }

    void write(std::ostream& out) const;
    /// Columns located by header name: channel, begin_utc, end_utc, label are
    /// required; f_lo_hz and f_hi_hz optional. An event table with a `tag`
    /// column instead of `label` is accepted (untagged rows skipped).
    static GroundTruthTable read(std::istream& in);
    static GroundTruthTable load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<TruthEvent> events_;
};

struct ScoreOptions {
    double min_overlap_fraction = 0.5; ///< of the shorter event
    bool bac1000_as_signal = true;
};

struct MatchedPair {
    std::size_t detection = 0; ///< index into the detection list
    std::size_t truth = 0;     ///< index into the filtered truth list
};

struct ScoreReport {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    double precision = 1.0;
    double recall = 1.0;
    std::vector<MatchedPair> matches;
};

/// Interval used for matching; channel plus [begin, end).
struct Interval {
    int channel = 0;
    Micros begin{0};
    Micros end{0};
    double score = 0.0;
};

/// True when the intervals share a channel and overlap by at least
/// `fraction` of the shorter one's duration.
bool intervals_match(const Interval& a, const Interval& b, double fraction);

/// One-to-one matching. Detections are visited in descending score order and
/// each claims a truth through an augmenting path, so earlier (higher score)
/// detections stay matched and the count is maximal.
ScoreReport match_intervals(const std::vector<Interval>& detections, const std::vector<Interval>& truth,
                            double min_overlap_fraction = 0.5);

/// Filters truth rows to acoustic-signal labels (see ScoreOptions) and matches.
ScoreReport match_and_score(const std::vector<EventRecord>& detections, const GroundTruthTable& truth,
                            const ScoreOptions& options = {});

/// Truth rows counted as signal under `options`.
std::vector<TruthEvent> signal_truth(const GroundTruthTable& truth, const ScoreOptions& options);

} // namespace trainscan::store
