// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/eventstore.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace trainscan::diel {

using Date = std::chrono::year_month_day;

std::string format_date(Date d);
Date parse_date(const std::string& text);

struct Layer {
    std::string name; ///< a tag code, or "untagged"
    std::vector<std::int64_t> counts;

    friend bool operator==(const Layer&, const Layer&) = default;
};

inline constexpr const char* kUntagged = "untagged";

/// Event counts per (local date, time-of-day bin).
struct DielGrid {
    std::vector<Date> dates;          ///< consecutive calendar dates, ascending
    int bins_per_day = 24;
    Micros tz_offset{0};              ///< added to UTC before binning
    std::vector<std::int64_t> counts; ///< dates x bins, row-major
    std::vector<Layer> layers;        ///< vocabulary order, "untagged" last; empty unless layered

    std::int64_t at(std::size_t date, std::size_t bin) const { return counts[date * bins_per_day + bin]; }
    std::int64_t total() const;
    std::int64_t max_count() const;
    const Layer* layer(const std::string& name) const;

    friend bool operator==(const DielGrid&, const DielGrid&) = default;
};

/// Counts each event once, in the cell holding begin_utc + tz_offset. Dates
/// run from the local date of span.t0 to that of the last instant before
/// span.t1. Throws Error(out_of_range) for an event beginning outside span
/// and Error(invalid_argument) unless bins_per_day divides a day into whole
/// seconds.
DielGrid aggregate_diel(const std::vector<store::EventRecord>& events, const TimeSpan& span, Micros tz_offset,
                        bool layer_by_tag, int bins_per_day = 24);

/// Span from the earliest begin to just past the latest begin.
std::optional<TimeSpan> begin_extent(const std::vector<store::EventRecord>& events);

std::string export_diel(const DielGrid& grid);
DielGrid import_diel(const std::string& json_text);

/// Colour ramp for counts: index 0 for empty cells, then steps up to max.
inline constexpr std::array<const char*, 9> kRamp = {
    "#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#08519c", "#08306b",
};
/// Ramp index of a count relative to the grid maximum.
std::size_t ramp_index(std::int64_t count, std::int64_t max_count);

/// One row per date, one column per bin. A layered grid colours each cell by
/// its dominant layer and lists every layer present in the legend.
std::string render_svg(const DielGrid& grid);

} // namespace trainscan::diel
