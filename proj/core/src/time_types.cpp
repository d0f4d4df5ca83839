#include "epistwin/time_types.hpp"

#include "epistwin/errors.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace epistwin {

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len, const char* what) {
    if (pos + len > text.size()) raise(ErrorKind::MalformedRecord, std::string("truncated ") + what);
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        char c = text[i];
        if (c < '0' || c > '9')
            raise(ErrorKind::MalformedRecord, std::string("non-digit in ") + what);
        value = value * 10 + (c - '0');
    }
    return value;
}

bool is_leap(int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

}  // namespace

int64_t days_from_civil(int year, int month, int day) {
    year -= month <= 2;
    const int64_t era = (year >= 0 ? year : year - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(year - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(month + (month > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(day) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t days, int& year, int& month, int& day) {
    days += 719468;
    const int64_t era = (days >= 0 ? days : days - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    year = static_cast<int>(y + (month <= 2));
}

bool valid_civil(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1) return false;
    static const int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int max_day = lengths[month - 1];
    if (month == 2 && is_leap(year)) max_day = 29;
    return day <= max_day;
}

Timestamp Timestamp::from_civil(int year, int month, int day, int hour, int minute, int second,
                                int offset_minutes, bool date_only, bool has_offset) {
    if (!valid_civil(year, month, day))
        raise(ErrorKind::MalformedRecord, "invalid calendar date");
    if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 60)
        raise(ErrorKind::MalformedRecord, "invalid time of day");
    Timestamp ts;
    int64_t local = days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
    ts.epoch_seconds = local - static_cast<int64_t>(offset_minutes) * 60;
    ts.offset_minutes = static_cast<int16_t>(offset_minutes);
    ts.date_only = date_only;
    ts.has_offset = has_offset;
    return ts;
}

Timestamp Timestamp::parse(std::string_view text) {
    // YYYY-MM-DD [ T HH:MM[:SS] [Z | +HH:MM | -HH:MM] ]
    if (text.size() < 10 || text[4] != '-' || text[7] != '-')
        raise(ErrorKind::MalformedRecord, "expected YYYY-MM-DD timestamp: " + std::string(text));
    int year = parse_int(text, 0, 4, "year");
    int month = parse_int(text, 5, 2, "month");
    int day = parse_int(text, 8, 2, "day");
    if (text.size() == 10) return from_civil(year, month, day, 0, 0, 0, 0, true, false);

    if (text[10] != 'T' && text[10] != ' ')
        raise(ErrorKind::MalformedRecord, "expected 'T' separator: " + std::string(text));
    if (text.size() < 16 || text[13] != ':')
        raise(ErrorKind::MalformedRecord, "expected HH:MM time: " + std::string(text));
    int hour = parse_int(text, 11, 2, "hour");
    int minute = parse_int(text, 14, 2, "minute");
    std::size_t pos = 16;
    int second = 0;
    if (pos < text.size() && text[pos] == ':') {
        second = parse_int(text, pos + 1, 2, "second");
        pos += 3;
    }
    int offset = 0;
    bool has_offset = false;
    if (pos < text.size()) {
        char c = text[pos];
        if (c == 'Z') {
            has_offset = true;
            pos += 1;
        } else if (c == '+' || c == '-') {
            if (pos + 6 > text.size() || text[pos + 3] != ':')
                raise(ErrorKind::MalformedRecord, "bad zone offset: " + std::string(text));
            int oh = parse_int(text, pos + 1, 2, "offset hour");
            int om = parse_int(text, pos + 4, 2, "offset minute");
            offset = oh * 60 + om;
            if (c == '-') offset = -offset;
            has_offset = true;
            pos += 6;
        }
    }
    if (pos != text.size())
        raise(ErrorKind::MalformedRecord, "trailing timestamp characters: " + std::string(text));
    return from_civil(year, month, day, hour, minute, second, offset, false, has_offset);
}

std::string Timestamp::render() const {
    int64_t local = epoch_seconds + static_cast<int64_t>(offset_minutes) * 60;
    int64_t days = local / 86400;
    int64_t rem = local % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int year, month, day;
    civil_from_days(days, year, month, day);
    char buf[40];
    if (date_only) {
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
        return buf;
    }
    int hour = static_cast<int>(rem / 3600);
    int minute = static_cast<int>((rem % 3600) / 60);
    int second = static_cast<int>(rem % 60);
    std::string out;
    if (second != 0)
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", year, month, day, hour,
                      minute, second);
    else
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", year, month, day, hour, minute);
    out = buf;
    if (has_offset) {
        if (offset_minutes == 0) {
            out += 'Z';
        } else {
            int om = offset_minutes;
            char sign = '+';
            if (om < 0) {
                sign = '-';
                om = -om;
            }
            std::snprintf(buf, sizeof(buf), "%c%02d:%02d", sign, om / 60, om % 60);
            out += buf;
        }
    }
    return out;
}

std::string Timestamp::date_string() const {
    int64_t local = epoch_seconds + static_cast<int64_t>(offset_minutes) * 60;
    int64_t days = local / 86400;
    if (local % 86400 < 0) days -= 1;
    int year, month, day;
    civil_from_days(days, year, month, day);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

std::string Timestamp::time_string() const {
    int64_t local = epoch_seconds + static_cast<int64_t>(offset_minutes) * 60;
    int64_t rem = local % 86400;
    if (rem < 0) rem += 86400;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d:%02d", static_cast<int>(rem / 3600),
                  static_cast<int>((rem % 3600) / 60));
    return buf;
}

Duration Duration::parse(std::string_view text) {
    if (text.empty()) raise(ErrorKind::MalformedRecord, "empty duration");
    Duration d;
    int64_t value = 0;
    bool have_digits = false;
    bool have_unit = false;
    for (char c : text) {
        if (c >= '0' && c <= '9') {
            value = value * 10 + (c - '0');
            have_digits = true;
            continue;
        }
        if (!have_digits)
            raise(ErrorKind::MalformedRecord, "duration unit with no value: " + std::string(text));
        switch (c) {
            case 'h': d.seconds += value * 3600; break;
            case 'm': d.seconds += value * 60; break;
            case 's': d.seconds += value; break;
            default:
                raise(ErrorKind::MalformedRecord, "bad duration unit: " + std::string(text));
        }
        value = 0;
        have_digits = false;
        have_unit = true;
    }
    if (have_digits) {
        if (have_unit)
            raise(ErrorKind::MalformedRecord, "trailing duration digits: " + std::string(text));
        d.seconds = value;  // bare number means seconds
    }
    return d;
}

std::string Duration::render() const {
    int64_t s = seconds;
    std::ostringstream out;
    if (s >= 3600) {
        out << s / 3600 << 'h';
        s %= 3600;
    }
    if (s >= 60) {
        out << s / 60 << 'm';
        s %= 60;
    }
    if (s > 0 || out.str().empty()) out << s << 's';
    return out.str();
}

GeoPoint GeoPoint::parse(std::string_view text) {
    std::size_t comma = text.find(',');
    if (comma == std::string_view::npos)
        raise(ErrorKind::MalformedRecord, "expected lat,lon: " + std::string(text));
    GeoPoint p;
    auto parse_double = [&](std::string_view part, double& out) {
        std::string s(part);
        std::size_t begin = s.find_first_not_of(' ');
        std::size_t end = s.find_last_not_of(' ');
        if (begin == std::string::npos)
            raise(ErrorKind::MalformedRecord, "empty coordinate: " + std::string(text));
        s = s.substr(begin, end - begin + 1);
        const char* first = s.data();
        const char* last = s.data() + s.size();
        auto result = std::from_chars(first, last, out);
        if (result.ec != std::errc{} || result.ptr != last)
            raise(ErrorKind::MalformedRecord, "bad coordinate: " + std::string(text));
    };
    parse_double(text.substr(0, comma), p.lat);
    parse_double(text.substr(comma + 1), p.lon);
    if (p.lat < -90.0 || p.lat > 90.0 || p.lon < -180.0 || p.lon > 180.0)
        raise(ErrorKind::MalformedRecord, "coordinate out of range: " + std::string(text));
    return p;
}

std::string GeoPoint::render() const {
    std::ostringstream out;
    out << lat << ',' << lon;
    return out.str();
}

bool valid_phone(std::string_view text) {
    if (text.empty()) return false;
    std::size_t digits = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c >= '0' && c <= '9') {
            ++digits;
        } else if (c == '+') {
            if (i != 0) return false;
        } else if (c == ' ' || c == '-' || c == '(' || c == ')') {
            continue;
        } else {
            return false;
        }
    }
    return digits >= 3 && digits <= 15;
}

}  // namespace epistwin
