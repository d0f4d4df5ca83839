#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace epistwin {

// A point in time parsed from ISO-8601 text. Stores UTC epoch seconds plus
// the original offset so round-trips preserve the source rendering. A
// date-only value is midnight UTC with date_only set.
struct Timestamp {
    int64_t epoch_seconds = 0;
    int16_t offset_minutes = 0;
    bool date_only = false;
    bool has_offset = false;

    static Timestamp parse(std::string_view text);
    static Timestamp from_civil(int year, int month, int day, int hour = 0, int minute = 0,
                                int second = 0, int offset_minutes = 0, bool date_only = false,
                                bool has_offset = false);

    std::string render() const;
    std::string date_string() const;  // local date as YYYY-MM-DD
    std::string time_string() const;  // local time as HH:MM

    bool operator<(const Timestamp& other) const { return epoch_seconds < other.epoch_seconds; }
    bool operator==(const Timestamp& other) const {
        return epoch_seconds == other.epoch_seconds && date_only == other.date_only;
    }
};

// Days offset from 1970-01-01 for a proleptic Gregorian civil date.
int64_t days_from_civil(int year, int month, int day);
void civil_from_days(int64_t days, int& year, int& month, int& day);
bool valid_civil(int year, int month, int day);

// Elapsed time such as "1h20m", "45m", "30s", or "90" (seconds).
struct Duration {
    int64_t seconds = 0;

    static Duration parse(std::string_view text);
    std::string render() const;

    bool operator==(const Duration& other) const { return seconds == other.seconds; }
};

// Decimal "lat,lon" coordinate pair.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    static GeoPoint parse(std::string_view text);
    std::string render() const;
};

// Accepts digits with optional leading '+' and interior separators.
bool valid_phone(std::string_view text);

}  // namespace epistwin
