// SPDX-License-Identifier: Apache-2.0
#include "trainscan/time.hpp"

#include "trainscan/error.hpp"

#include <charconv>
#include <cstdio>

namespace trainscan {

namespace {

bool read_digits(std::string_view& s, std::size_t n, int& out) {
    if (s.size() < n) {
        return false;
    }
    int value = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const char c = s[i];
        if (c < '0' || c > '9') {
            return false;
        }
        value = value * 10 + (c - '0');
    }
    out = value;
    s.remove_prefix(n);
    return true;
}

bool eat(std::string_view& s, char c) {
    if (!s.empty() && s.front() == c) {
        s.remove_prefix(1);
        return true;
    }
    return false;
}

// floor division for possibly negative numerators
std::int64_t floor_div(__int128 num, __int128 den) {
    __int128 q = num / den;
    if ((num % den != 0) && ((num < 0) != (den < 0))) {
        --q;
    }
    return static_cast<std::int64_t>(q);
}

} // namespace

TimeSpan TimeSpan::make(UtcTime t0, UtcTime t1) {
    if (!(t0 < t1)) {
        throw Error(ErrorCode::invalid_argument,
                    "time span requires t0 < t1 (" + format_iso8601(t0) + " .. " +
                        format_iso8601(t1) + ")");
    }
    return TimeSpan{t0, t1};
}

std::string format_iso8601(UtcTime t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const auto tod = t - day;
    const auto h = duration_cast<hours>(tod);
    const auto m = duration_cast<minutes>(tod - h);
    const auto s = duration_cast<seconds>(tod - h - m);
    const auto us = (tod - h - m - s).count();
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(h.count()), static_cast<int>(m.count()),
                  static_cast<int>(s.count()));
    if (us != 0) {
        // keep the canonical six-digit fraction only when needed
        std::snprintf(buf + 19, sizeof buf - 19, ".%06lldZ", static_cast<long long>(us));
    }
    return buf;
}

std::optional<UtcTime> parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    if (!read_digits(s, 4, y)) {
        return std::nullopt;
    }
    const bool extended = eat(s, '-');
    if (!read_digits(s, 2, mo) || (extended && !eat(s, '-')) || !read_digits(s, 2, d)) {
        return std::nullopt;
    }
    if (!eat(s, 'T') && !eat(s, 't') && !eat(s, ' ')) {
        return std::nullopt;
    }
    if (!read_digits(s, 2, h) || (extended && !eat(s, ':')) || !read_digits(s, 2, mi) ||
        (extended && !eat(s, ':')) || !read_digits(s, 2, se)) {
        return std::nullopt;
    }
    std::int64_t frac_us = 0;
    if (eat(s, '.') || eat(s, ',')) {
        int digits = 0;
        while (!s.empty() && s.front() >= '0' && s.front() <= '9') {
            if (digits < 6) {
                frac_us = frac_us * 10 + (s.front() - '0');
            }
            ++digits;
            s.remove_prefix(1);
        }
        if (digits == 0) {
            return std::nullopt;
        }
        for (int i = digits; i < 6; ++i) {
            frac_us *= 10;
        }
    }
    if (!s.empty() && !(s == "Z" || s == "z" || s == "+00:00" || s == "+0000")) {
        return std::nullopt;
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                             day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 60) {
        return std::nullopt;
    }
    return UtcTime{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{se} + Micros{frac_us};
}

UtcTime parse_iso8601_or_throw(std::string_view text) {
    if (auto t = parse_iso8601(text)) {
        return *t;
    }
    throw Error(ErrorCode::format, "invalid ISO8601 timestamp '" + std::string(text) + "'");
}

std::string format_seconds6(Micros m) {
    const std::int64_t v = m.count();
    const bool neg = v < 0;
    const std::uint64_t a = neg ? static_cast<std::uint64_t>(-(v + 1)) + 1u
                                : static_cast<std::uint64_t>(v);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%s%llu.%06llu", neg ? "-" : "",
                  static_cast<unsigned long long>(a / 1000000u),
                  static_cast<unsigned long long>(a % 1000000u));
    return buf;
}

std::optional<Micros> parse_seconds6(std::string_view s) {
    bool neg = false;
    if (!s.empty() && s.front() == '-') {
        neg = true;
        s.remove_prefix(1);
    }
    const auto dot = s.find('.');
    const std::string_view whole = s.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if (whole.empty() || frac.size() > 6) {
        return std::nullopt;
    }
    std::int64_t w = 0;
    auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), w);
    if (ec != std::errc{} || p != whole.data() + whole.size()) {
        return std::nullopt;
    }
    std::int64_t f = 0;
    for (std::size_t i = 0; i < 6; ++i) {
        int digit = 0;
        if (i < frac.size()) {
            if (frac[i] < '0' || frac[i] > '9') {
                return std::nullopt;
            }
            digit = frac[i] - '0';
        }
        f = f * 10 + digit;
    }
    const std::int64_t total = w * 1000000 + f;
    return Micros{neg ? -total : total};
}

std::int64_t sample_index_at_or_after(UtcTime t, int sample_rate_hz) {
    const __int128 num = static_cast<__int128>(t.time_since_epoch().count()) * sample_rate_hz;
    // ceil(num / 1e6)
    return -floor_div(-num, 1000000);
}

UtcTime sample_time(std::int64_t k, int sample_rate_hz) {
    const __int128 num = static_cast<__int128>(k) * 1000000;
    return UtcTime{Micros{floor_div(num, sample_rate_hz)}};
}

} // namespace trainscan
