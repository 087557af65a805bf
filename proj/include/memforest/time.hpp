#pragma once

#include <cstdint>
#include <string>

namespace memforest {

// Absolute UTC instant at second resolution.
using Instant = std::int64_t;

// Coarsest unit the source data actually carried. Benchmarks that supply only
// day-granularity dates map to midnight UTC with precision=day.
enum class TimePrecision { second, day, month, year };

const char* to_string(TimePrecision p);
TimePrecision precision_from_string(const std::string& s);

// Closed interval [start, end]; point anchors have start == end.
struct TemporalAnchor {
    Instant start = 0;
    Instant end = 0;
    TimePrecision precision = TimePrecision::second;

    static TemporalAnchor point(Instant t, TimePrecision p = TimePrecision::second) {
        return TemporalAnchor{t, t, p};
    }

    bool is_point() const { return start == end; }

    // Interval union (envelope). Precision takes the coarser of the two.
    TemporalAnchor united(const TemporalAnchor& other) const;

    bool operator==(const TemporalAnchor&) const = default;
};

// Coarser of two precisions (year is coarsest).
TimePrecision coarser(TimePrecision a, TimePrecision b);

// Builds an Instant from UTC calendar fields.
Instant make_instant(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);

// Accepts "YYYY-MM-DDTHH:MM:SS", "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DD",
// "YYYY/MM/DD ...", "YYYY-MM" and "YYYY". Reports the precision implied by
// the shortest accepted form via out_precision when non-null.
Instant parse_instant(const std::string& text, TimePrecision* out_precision = nullptr);

// Renders at the anchor's precision: "2024-07-01T10:00:00", "2024-07-01",
// "2024-07" or "2024".
std::string format_instant(Instant t, TimePrecision p = TimePrecision::second);

// "[2024-07-01..2024-07-05]" or "[2024-07-01]" for points.
std::string format_anchor(const TemporalAnchor& a);

}  // namespace memforest
