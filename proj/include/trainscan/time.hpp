// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace trainscan {

using Micros = std::chrono::duration<std::int64_t, std::micro>;
/// Absolute UTC instant at microsecond resolution.
using UtcTime = std::chrono::sys_time<Micros>;

struct TimeSpan {
    UtcTime t0;
    UtcTime t1;

    /// Throws Error(invalid_argument) unless t0 < t1.
    static TimeSpan make(UtcTime t0, UtcTime t1);

    Micros duration() const { return t1 - t0; }
    double duration_s() const { return static_cast<double>(duration().count()) * 1e-6; }
    bool contains(UtcTime t) const { return t0 <= t && t < t1; }
    bool intersects(const TimeSpan& o) const { return t0 < o.t1 && o.t0 < t1; }

    friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

/// "2008-09-17T13:05:00Z"; a non-zero fraction is written with six digits.
std::string format_iso8601(UtcTime t);

/// Accepts extended ("2008-09-17T13:05:00Z", optional fraction) and basic
/// ("20080917T130500Z") forms. A missing zone designator is read as UTC.
std::optional<UtcTime> parse_iso8601(std::string_view text);

/// Like parse_iso8601 but throws Error(format).
UtcTime parse_iso8601_or_throw(std::string_view text);

inline Micros seconds_to_micros(double s) {
    return Micros{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

inline double micros_to_seconds(Micros m) {
    return static_cast<double>(m.count()) * 1e-6;
}

/// "123.456000" — seconds with exactly six decimals, exact for integer micros.
std::string format_seconds6(Micros m);
std::optional<Micros> parse_seconds6(std::string_view text);

/// Index of the first sample at or after `t` on the absolute grid t = k / rate.
std::int64_t sample_index_at_or_after(UtcTime t, int sample_rate_hz);

/// Absolute time of grid sample k, rounded down to the microsecond.
UtcTime sample_time(std::int64_t k, int sample_rate_hz);

} // namespace trainscan
