#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "hpflex/errors.hpp"

namespace hpflex {

using Seconds = std::chrono::duration<double>;
using Timestamp = std::chrono::time_point<std::chrono::system_clock, Seconds>;

constexpr double kSecondsPerHour = 3600.0;

inline double hours_between(Timestamp from, Timestamp to) {
    return (to - from).count() / kSecondsPerHour;
}

inline Timestamp add_hours(Timestamp t, double hours) {
    return t + Seconds(hours * kSecondsPerHour);
}

namespace detail {

inline int parse_digits(std::string_view s, std::size_t pos, std::size_t n) {
    if (pos + n > s.size()) throw ParseError("truncated timestamp: " + std::string(s));
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        const char c = s[i];
        if (c < '0' || c > '9') throw ParseError("bad digit in timestamp: " + std::string(s));
        v = v * 10 + (c - '0');
    }
    return v;
}

inline void expect_char(std::string_view s, std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c)
        throw ParseError("malformed timestamp: " + std::string(s));
}

}  // namespace detail

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff][Z|+00:00]" (a space is accepted in
// place of 'T'). Only UTC offsets are accepted.
inline Timestamp parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);

    const int y = detail::parse_digits(s, 0, 4);
    detail::expect_char(s, 4, '-');
    const int mo = detail::parse_digits(s, 5, 2);
    detail::expect_char(s, 7, '-');
    const int d = detail::parse_digits(s, 8, 2);
    if (s.size() <= 10 || (s[10] != 'T' && s[10] != ' '))
        throw ParseError("timestamp lacks time part: " + std::string(s));
    const int hh = detail::parse_digits(s, 11, 2);
    detail::expect_char(s, 13, ':');
    const int mi = detail::parse_digits(s, 14, 2);
    detail::expect_char(s, 16, ':');
    const int ss = detail::parse_digits(s, 17, 2);

    double frac = 0.0;
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        double scale = 0.1;
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            frac += scale * (s[pos] - '0');
            scale *= 0.1;
            ++pos;
        }
    }
    const std::string_view zone = s.substr(pos);
    if (!(zone.empty() || zone == "Z" || zone == "+00:00" || zone == "+0000"))
        throw ParseError("non-UTC timestamp: " + std::string(s));

    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                             day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh > 23 || mi > 59 || ss > 60)
        throw ParseError("invalid calendar value in timestamp: " + std::string(s));
    const sys_days days{ymd};
    const double secs = static_cast<double>(days.time_since_epoch().count()) * 86400.0 +
                        hh * 3600.0 + mi * 60.0 + ss + frac;
    return Timestamp{Seconds{secs}};
}

// Formats to whole seconds when the value is integral, otherwise millisecond
// precision.
inline std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    const double total = t.time_since_epoch().count();
    const double rounded_ms = std::round(total * 1000.0) / 1000.0;
    const auto whole = static_cast<long long>(std::floor(rounded_ms));
    const int ms = static_cast<int>(std::lround((rounded_ms - static_cast<double>(whole)) * 1000.0));
    long long days_since = whole / 86400;
    long long rem = whole % 86400;
    if (rem < 0) {
        rem += 86400;
        --days_since;
    }
    const year_month_day ymd{sys_days{days{days_since}}};
    char buf[40];
    const int hh = static_cast<int>(rem / 3600);
    const int mi = static_cast<int>((rem % 3600) / 60);
    const int ss = static_cast<int>(rem % 60);
    if (ms == 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hh, mi, ss);
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ",
                      static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()), hh, mi, ss, ms);
    }
    return buf;
}

}  // namespace hpflex
