#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lvse {

inline constexpr int kStepMinutes = 5;
inline constexpr int kStepsPerHour = 60 / kStepMinutes;
inline constexpr int kStepsPerDay = 24 * kStepsPerHour;  // 288
inline constexpr int kMinutesPerDay = 24 * 60;
inline constexpr int kCalendarYear = 2018;  // synthetic calendar; 2018-01-01 is a Monday

// A contiguous block of whole days, counted from January 1st (day 0).
struct Segment {
    int start_day = 0;
    int days = 0;
};

// 5-minute time axis made of one or more contiguous segments. Timestamps are
// minutes since 2018-01-01T00:00 (local solar time, no DST).
class TimeAxis {
public:
    TimeAxis() = default;
    explicit TimeAxis(std::vector<Segment> segments);
    // Rebuilds the segments from a sorted list of 5-minute timestamps.
    static TimeAxis from_minutes(const std::vector<std::int64_t>& minutes);

    std::size_t size() const noexcept { return minutes_.size(); }
    const std::vector<Segment>& segments() const noexcept { return segments_; }
    const std::vector<std::int64_t>& minutes() const noexcept { return minutes_; }
    std::int64_t minute(std::size_t t) const { return minutes_[t]; }

    // Position of a timestamp on the axis, if present.
    std::optional<std::size_t> find(std::int64_t minute) const;
    // Index of the segment containing step t.
    std::size_t segment_of(std::size_t t) const;
    // First and one-past-last step index of segment s.
    std::size_t segment_begin(std::size_t s) const { return offsets_[s]; }
    std::size_t segment_end(std::size_t s) const { return offsets_[s + 1]; }

private:
    std::vector<Segment> segments_;
    std::vector<std::int64_t> minutes_;
    std::vector<std::size_t> offsets_;
};

int day_of_year(std::int64_t minute);
double hour_of_day(std::int64_t minute);
int month_of(std::int64_t minute);  // 1..12
bool is_weekend(std::int64_t minute);
std::string iso8601(std::int64_t minute);  // "2018-01-01T00:05:00"
std::int64_t parse_iso8601(const std::string& text);

// Default desk-scale horizon: eight winter weeks from January 1st and eight
// summer weeks from June 3rd.
std::vector<Segment> default_horizon();

}  // namespace lvse
