#include "lvse/timeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "lvse/errors.hpp"

namespace lvse {

namespace {

constexpr std::chrono::sys_days kEpoch = std::chrono::year{kCalendarYear} / std::chrono::January / 1;

std::chrono::sys_days day_of(std::int64_t minute) {
    return kEpoch + std::chrono::days{minute / kMinutesPerDay};
}

}  // namespace

TimeAxis::TimeAxis(std::vector<Segment> segments) : segments_(std::move(segments)) {
    offsets_.push_back(0);
    std::int64_t last_end = -1;
    for (const auto& seg : segments_) {
        if (seg.days <= 0 || seg.start_day < 0) throw Error("segment must cover at least one day");
        const std::int64_t begin = static_cast<std::int64_t>(seg.start_day) * kMinutesPerDay;
        if (begin <= last_end) throw Error("segments must be ordered and non-overlapping");
        const std::int64_t steps = static_cast<std::int64_t>(seg.days) * kStepsPerDay;
        for (std::int64_t k = 0; k < steps; ++k) minutes_.push_back(begin + k * kStepMinutes);
        last_end = minutes_.back();
        offsets_.push_back(minutes_.size());
    }
}

TimeAxis TimeAxis::from_minutes(const std::vector<std::int64_t>& minutes) {
    std::vector<Segment> segments;
    std::size_t i = 0;
    while (i < minutes.size()) {
        if (minutes[i] % kMinutesPerDay != 0) throw AlignmentError("segment does not start at midnight");
        std::size_t j = i + 1;
        while (j < minutes.size() && minutes[j] == minutes[j - 1] + kStepMinutes) ++j;
        const auto steps = j - i;
        if (steps % kStepsPerDay != 0) throw AlignmentError("segment is not a whole number of days");
        segments.push_back({static_cast<int>(minutes[i] / kMinutesPerDay),
                            static_cast<int>(steps / kStepsPerDay)});
        i = j;
    }
    TimeAxis axis(std::move(segments));
    if (axis.minutes() != minutes) throw AlignmentError("timestamps do not form a 5-minute axis");
    return axis;
}

std::optional<std::size_t> TimeAxis::find(std::int64_t minute) const {
    const auto it = std::lower_bound(minutes_.begin(), minutes_.end(), minute);
    if (it == minutes_.end() || *it != minute) return std::nullopt;
    return static_cast<std::size_t>(it - minutes_.begin());
}

std::size_t TimeAxis::segment_of(std::size_t t) const {
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), t);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

int day_of_year(std::int64_t minute) { return static_cast<int>(minute / kMinutesPerDay); }

double hour_of_day(std::int64_t minute) {
    return static_cast<double>(minute % kMinutesPerDay) / 60.0;
}

int month_of(std::int64_t minute) {
    const std::chrono::year_month_day ymd{day_of(minute)};
    return static_cast<int>(static_cast<unsigned>(ymd.month()));
}

bool is_weekend(std::int64_t minute) {
    const std::chrono::weekday wd{day_of(minute)};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

std::string iso8601(std::int64_t minute) {
    const std::chrono::year_month_day ymd{day_of(minute)};
    const auto in_day = minute % kMinutesPerDay;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(in_day / 60), static_cast<int>(in_day % 60));
    return buf;
}

std::int64_t parse_iso8601(const std::string& text) {
    int y = 0, hh = 0, mm = 0, ss = 0;
    unsigned mo = 0, d = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%uT%d:%d:%d", &y, &mo, &d, &hh, &mm, &ss) != 6)
        throw AlignmentError("malformed timestamp '" + text + "'");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                          std::chrono::day{d}};
    if (!ymd.ok()) throw AlignmentError("invalid date '" + text + "'");
    const auto days = (std::chrono::sys_days{ymd} - kEpoch).count();
    return static_cast<std::int64_t>(days) * kMinutesPerDay + hh * 60 + mm;
}

std::vector<Segment> default_horizon() { return {{0, 56}, {154, 56}}; }

}  // namespace lvse
