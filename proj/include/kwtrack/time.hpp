#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace kwtrack {

using Instant = std::chrono::sys_seconds;
using Duration = std::chrono::seconds;

// Half-open range [start, end).
struct TimeRange {
    Instant start;
    Instant end;

    bool contains(Instant t) const noexcept { return start <= t && t < end; }
    Duration length() const noexcept { return end - start; }
};

namespace detail {

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace detail

// Parses "YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]" (a space may replace the
// 'T'; a missing zone designator means UTC). Fractional seconds are truncated.
inline std::optional<Instant> parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    int Y, M, D, h, m, sec;
    if (!detail::read_digits(s, 0, 4, Y) || s.size() < 19 || s[4] != '-' ||
        !detail::read_digits(s, 5, 2, M) || s[7] != '-' || !detail::read_digits(s, 8, 2, D) ||
        (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !detail::read_digits(s, 11, 2, h) ||
        s[13] != ':' || !detail::read_digits(s, 14, 2, m) || s[16] != ':' ||
        !detail::read_digits(s, 17, 2, sec)) {
        return std::nullopt;
    }
    year_month_day ymd{year{Y}, month{static_cast<unsigned>(M)}, day{static_cast<unsigned>(D)}};
    if (!ymd.ok() || h > 23 || m > 59 || sec > 60) return std::nullopt;

    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            ++pos;
            ++digits;
        }
        if (digits == 0) return std::nullopt;
    }
    int offset = 0;
    if (pos < s.size()) {
        char z = s[pos];
        if ((z == 'Z' || z == 'z') && pos + 1 == s.size()) {
            // UTC
        } else if ((z == '+' || z == '-') && s.size() == pos + 6 && s[pos + 3] == ':') {
            int oh, om;
            if (!detail::read_digits(s, pos + 1, 2, oh) || !detail::read_digits(s, pos + 4, 2, om))
                return std::nullopt;
            offset = (oh * 3600 + om * 60) * (z == '+' ? 1 : -1);
        } else {
            return std::nullopt;
        }
    }
    Instant t = sys_days{ymd} + hours{h} + minutes{m} + seconds{sec};
    return t - seconds{offset};
}

inline std::string format_iso8601(Instant t) {
    using namespace std::chrono;
    auto dp = floor<days>(t);
    year_month_day ymd{dp};
    hh_mm_ss hms{t - dp};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

inline std::int64_t to_epoch_seconds(Instant t) { return t.time_since_epoch().count(); }

inline Instant from_epoch_seconds(std::int64_t s) { return Instant{Duration{s}}; }

}  // namespace kwtrack
