#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "covmap/errors.hpp"

namespace covmap::detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    T value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return value;
}

/// Line-oriented CSV reader that checks the header and tracks line numbers.
class CsvReader {
public:
    CsvReader(const std::filesystem::path& path, std::string_view expected_header)
        : path_(path), in_(path) {
        if (!in_) throw DataError("cannot open " + path.string());
        std::string header;
        if (!std::getline(in_, header) || trim(header) != expected_header)
            throw DataError(path.string() + ":1: expected header '" +
                            std::string(expected_header) + "'");
        line_no_ = 1;
    }

    /// Next non-empty record, split on commas.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (trim(line).empty()) continue;
            fields = split(line);
            return true;
        }
        return false;
    }

    int line() const { return line_no_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(path_.string() + ":" + std::to_string(line_no_) + ": " + msg);
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    int line_no_ = 0;
};

/// Formats with 6 significant digits, the precision of all text outputs.
inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Round-trip precision, for model coefficients and checkpoints.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace covmap::detail
