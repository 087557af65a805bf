#include "memforest/time.hpp"

#include <cstdio>
#include <ctime>

#include "memforest/errors.hpp"

namespace memforest {

const char* to_string(TimePrecision p) {
    switch (p) {
        case TimePrecision::second: return "second";
        case TimePrecision::day: return "day";
        case TimePrecision::month: return "month";
        case TimePrecision::year: return "year";
    }
    return "second";
}

TimePrecision precision_from_string(const std::string& s) {
    if (s == "second") return TimePrecision::second;
    if (s == "day") return TimePrecision::day;
    if (s == "month") return TimePrecision::month;
    if (s == "year") return TimePrecision::year;
    throw InputError("unknown time precision: " + s);
}

TimePrecision coarser(TimePrecision a, TimePrecision b) {
    return static_cast<int>(a) >= static_cast<int>(b) ? a : b;
}

TemporalAnchor TemporalAnchor::united(const TemporalAnchor& other) const {
    TemporalAnchor out;
    out.start = start < other.start ? start : other.start;
    out.end = end > other.end ? end : other.end;
    out.precision = coarser(precision, other.precision);
    return out;
}

Instant make_instant(int year, int month, int day, int hour, int minute, int second) {
    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = minute;
    tm.tm_sec = second;
    return static_cast<Instant>(timegm(&tm));
}

Instant parse_instant(const std::string& text, TimePrecision* out_precision) {
    std::string s = text;
    for (char& c : s) {
        if (c == '/') c = '-';
        if (c == 'T') c = ' ';
    }
    // Strip trailing weekday annotations like "2023-05-20 (Sat) 02:21".
    if (auto p = s.find('('); p != std::string::npos) {
        auto q = s.find(')', p);
        if (q != std::string::npos) s = s.substr(0, p) + s.substr(q + 1);
    }

    int year = 0, month = 1, day = 1, hour = 0, minute = 0, second = 0;
    TimePrecision prec = TimePrecision::second;
    int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &year, &month, &day, &hour, &minute, &second);
    switch (n) {
        case 1: prec = TimePrecision::year; break;
        case 2: prec = TimePrecision::month; break;
        case 3: prec = TimePrecision::day; break;
        case 5:
        case 6: prec = TimePrecision::second; break;
        default: throw InputError("unparseable timestamp: " + text);
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour < 0 || hour > 23 ||
        minute < 0 || minute > 59 || second < 0 || second > 60) {
        throw InputError("timestamp out of range: " + text);
    }
    if (out_precision) *out_precision = prec;
    return make_instant(year, month, day, hour, minute, second);
}

std::string format_instant(Instant t, TimePrecision p) {
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    switch (p) {
        case TimePrecision::year:
            std::snprintf(buf, sizeof(buf), "%04d", tm.tm_year + 1900);
            break;
        case TimePrecision::month:
            std::snprintf(buf, sizeof(buf), "%04d-%02d", tm.tm_year + 1900, tm.tm_mon + 1);
            break;
        case TimePrecision::day:
            std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
            break;
        case TimePrecision::second:
            std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", tm.tm_year + 1900,
                          tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
            break;
    }
    return buf;
}

std::string format_anchor(const TemporalAnchor& a) {
    if (a.is_point()) return "[" + format_instant(a.start, a.precision) + "]";
    return "[" + format_instant(a.start, a.precision) + ".." + format_instant(a.end, a.precision) + "]";
}

}  // namespace memforest
