#include "covmap/dates.hpp"

#include <cstdio>

#include "covmap/errors.hpp"

namespace covmap {

Date parse_iso_date(std::string_view text) {
    using namespace std::chrono;
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string s(text);
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw DataError("malformed date '" + s + "'");
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw DataError("invalid date '" + s + "'");
    return sys_days{ymd};
}

std::string format_iso_date(Date date) {
    using namespace std::chrono;
    const year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace covmap
