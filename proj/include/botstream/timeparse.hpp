#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "botstream/errors.hpp"

namespace botstream {

// Timestamps are UTC epoch seconds. Two input forms are accepted:
//   RFC-3339          2018-11-01T00:00:00Z, 2018-11-01T00:00:00.123+01:00
//   Twitter legacy    Tue Oct 31 00:00:00 +0000 2018
// Fractional seconds are accepted and truncated.

namespace detail {

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr bool is_leap(std::int64_t y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
    constexpr unsigned lens[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lens[m - 1];
}

struct civil {
    std::int64_t year;
    unsigned month, day, hour, minute, second;
};

// Inverse of days_from_civil.
inline civil civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return civil{y + (m <= 2), m, d, 0, 0, 0};
}

inline bool parse_uint(std::string_view s, std::size_t pos, std::size_t len, unsigned& out) {
    if (pos + len > s.size()) return false;
    unsigned v = 0;
    for (std::size_t i = 0; i < len; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + static_cast<unsigned>(c - '0');
    }
    out = v;
    return true;
}

inline std::int64_t to_epoch(const civil& c) {
    return days_from_civil(c.year, c.month, c.day) * 86400 +
           static_cast<std::int64_t>(c.hour) * 3600 + c.minute * 60 + c.second;
}

inline bool validate(const civil& c) {
    return c.month >= 1 && c.month <= 12 && c.day >= 1 &&
           c.day <= days_in_month(c.year, c.month) && c.hour < 24 &&
           c.minute < 60 && c.second < 61;  // allow leap second notation
}

inline int month_from_abbrev(std::string_view m) {
    static constexpr std::array<std::string_view, 12> names = {
        "Jan", "Feb", "Mar", "Apr", "May", "Jun",
        "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    for (std::size_t i = 0; i < names.size(); ++i)
        if (m == names[i]) return static_cast<int>(i) + 1;
    return -1;
}

}  // namespace detail

// Throws parse_error on anything it cannot understand.
inline std::int64_t parse_timestamp(std::string_view s) {
    using namespace detail;
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty()) throw parse_error("empty timestamp");

    // RFC-3339: starts with a 4-digit year.
    if (s.size() >= 19 && s[4] == '-') {
        civil c{};
        unsigned year = 0;
        if (!parse_uint(s, 0, 4, year) || !parse_uint(s, 5, 2, c.month) || s[7] != '-' ||
            !parse_uint(s, 8, 2, c.day) || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
            !parse_uint(s, 11, 2, c.hour) || s[13] != ':' || !parse_uint(s, 14, 2, c.minute) ||
            s[16] != ':' || !parse_uint(s, 17, 2, c.second))
            throw parse_error("malformed timestamp: " + std::string(s));
        c.year = year;
        std::size_t pos = 19;
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            std::size_t digits = 0;
            while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos, ++digits;
            if (digits == 0) throw parse_error("malformed timestamp: " + std::string(s));
        }
        std::int64_t offset = 0;
        if (pos == s.size()) throw parse_error("timestamp missing offset: " + std::string(s));
        if (s[pos] == 'Z' || s[pos] == 'z') {
            ++pos;
        } else if (s[pos] == '+' || s[pos] == '-') {
            const int sign = s[pos] == '-' ? -1 : 1;
            unsigned oh = 0, om = 0;
            if (!parse_uint(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
                !parse_uint(s, pos + 4, 2, om) || oh > 23 || om > 59)
                throw parse_error("malformed timestamp offset: " + std::string(s));
            offset = sign * (static_cast<std::int64_t>(oh) * 3600 + om * 60);
            pos += 6;
        } else {
            throw parse_error("malformed timestamp offset: " + std::string(s));
        }
        if (pos != s.size() || !validate(c))
            throw parse_error("malformed timestamp: " + std::string(s));
        return to_epoch(c) - offset;
    }

    // Twitter legacy: "EEE MMM dd HH:mm:ss +ZZZZ yyyy"
    if (s.size() == 30 && s[3] == ' ' && s[7] == ' ') {
        civil c{};
        const int month = month_from_abbrev(s.substr(4, 3));
        unsigned year = 0, oh = 0, om = 0;
        const char sign_ch = s[20];
        if (month < 0 || !parse_uint(s, 8, 2, c.day) || s[10] != ' ' ||
            !parse_uint(s, 11, 2, c.hour) || s[13] != ':' || !parse_uint(s, 14, 2, c.minute) ||
            s[16] != ':' || !parse_uint(s, 17, 2, c.second) || s[19] != ' ' ||
            (sign_ch != '+' && sign_ch != '-') || !parse_uint(s, 21, 2, oh) ||
            !parse_uint(s, 23, 2, om) || s[25] != ' ' || !parse_uint(s, 26, 4, year))
            throw parse_error("malformed timestamp: " + std::string(s));
        c.month = static_cast<unsigned>(month);
        c.year = year;
        if (!validate(c) || oh > 23 || om > 59)
            throw parse_error("malformed timestamp: " + std::string(s));
        const std::int64_t offset =
            (sign_ch == '-' ? -1 : 1) * (static_cast<std::int64_t>(oh) * 3600 + om * 60);
        return to_epoch(c) - offset;
    }

    throw parse_error("unrecognized timestamp format: " + std::string(s));
}

// RFC-3339 with Z offset; inverse of parse_timestamp for whole seconds.
inline std::string format_timestamp(std::int64_t epoch_seconds) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    detail::civil c = detail::civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(c.year), c.month, c.day,
                  static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60));
    return std::string(buf);
}

}  // namespace botstream
