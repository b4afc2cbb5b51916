#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "hpflex/errors.hpp"

namespace hpflex::csv {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

// Empty field -> NaN (a missing reading). Anything else must be a complete
// decimal number with '.' as separator.
inline double parse_number(std::string_view field, std::size_t line_no) {
    field = trim(field);
    if (field.empty()) return std::nan("");
    double v = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("line " + std::to_string(line_no) + ": not a number: '" +
                         std::string(field) + "'");
    return v;
}

struct Row {
    std::size_t line_no;
    std::vector<std::string_view> fields;
};

// Reads a whole CSV with a mandatory header. Lines are kept alive in `storage`.
struct Table {
    std::vector<std::string> header;
    std::vector<std::string> storage;
    std::vector<Row> rows;
};

inline Table read(std::istream& in, const std::vector<std::string>& expected_header) {
    Table t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        if (!have_header) {
            for (auto f : split(line)) t.header.emplace_back(f);
            if (t.header != expected_header) {
                std::string want;
                for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
                throw ParseError("unexpected CSV header '" + line + "', expected '" + want + "'");
            }
            have_header = true;
            continue;
        }
        t.storage.push_back(line);
    }
    if (!have_header) throw ParseError("empty CSV: header missing");
    // string_views are taken only after storage stops reallocating
    std::size_t data_line = 1;
    for (const auto& l : t.storage) {
        ++data_line;
        auto fields = split(l);
        if (fields.size() != expected_header.size())
            throw ParseError("row " + std::to_string(data_line) + ": expected " +
                             std::to_string(expected_header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        t.rows.push_back(Row{data_line, std::move(fields)});
    }
    return t;
}

inline Table read_file(const std::string& path, const std::vector<std::string>& expected_header) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return read(in, expected_header);
}

// Shortest round-trippable representation, so written files are stable
// across runs.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace hpflex::csv
