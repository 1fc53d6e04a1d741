#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace covmap {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD. Throws DataError on malformed or impossible dates.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date d);

inline Date add_days(Date d, long n) { return d + std::chrono::days{n}; }
inline long days_between(Date from, Date to) { return (to - from).count(); }

}  // namespace covmap
