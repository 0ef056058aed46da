#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "heliocast/error.hpp"

namespace heliocast {

struct CivilTime {
    int year = 1970;
    int month = 1; // 1..12
    int day = 1;   // 1..31
    int hour = 0;
    int minute = 0;
    int second = 0;
};

/// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
/// public-domain civil-days algorithm).
constexpr std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    y = static_cast<int>(yy + (m <= 2));
}

inline std::int64_t to_unix_seconds(const CivilTime& c) {
    return days_from_civil(c.year, c.month, c.day) * 86400 +
           c.hour * 3600 + c.minute * 60 + c.second;
}

inline CivilTime to_civil(std::int64_t unix_seconds) {
    std::int64_t days = unix_seconds / 86400;
    std::int64_t sod = unix_seconds % 86400;
    if (sod < 0) {
        sod += 86400;
        days -= 1;
    }
    CivilTime c;
    civil_from_days(days, c.year, c.month, c.day);
    c.hour = static_cast<int>(sod / 3600);
    c.minute = static_cast<int>((sod % 3600) / 60);
    c.second = static_cast<int>(sod % 60);
    return c;
}

/// Seconds since local midnight of the same UTC day.
inline int seconds_of_day(std::int64_t unix_seconds) {
    std::int64_t sod = unix_seconds % 86400;
    if (sod < 0) sod += 86400;
    return static_cast<int>(sod);
}

/// Day-of-year in [1, 366].
inline int day_of_year(std::int64_t unix_seconds) {
    CivilTime c = to_civil(unix_seconds);
    return static_cast<int>(days_from_civil(c.year, c.month, c.day) -
                            days_from_civil(c.year, 1, 1)) + 1;
}

/// "YYYY-MM-DDThh:mm:ssZ"
inline std::string format_iso8601(std::int64_t unix_seconds) {
    CivilTime c = to_civil(unix_seconds);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                  c.year, c.month, c.day, c.hour, c.minute, c.second);
    return buf;
}

/// Parses "YYYY-MM-DDThh:mm:ssZ" (or with a trailing "+00:00"); throws
/// DataError on anything else.
inline std::int64_t parse_iso8601(const std::string& s) {
    CivilTime c;
    int n = 0;
    const int got = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%n",
                                &c.year, &c.month, &c.day, &c.hour, &c.minute, &c.second, &n);
    if (got != 6) throw DataError("unparseable timestamp: " + s);
    const std::string rest = s.substr(static_cast<std::size_t>(n));
    if (!rest.empty() && rest != "Z" && rest != "+00:00")
        throw DataError("timestamp must be UTC: " + s);
    if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > 31 ||
        c.hour < 0 || c.hour > 23 || c.minute < 0 || c.minute > 59 ||
        c.second < 0 || c.second > 60)
        throw DataError("timestamp field out of range: " + s);
    return to_unix_seconds(c);
}

} // namespace heliocast
