#pragma once

// Minimal RFC 4180-style CSV reading and writing (quoted fields, doubled quotes).

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace pragcheck::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;
    /// 1-based source line of each row, for error messages.
    std::vector<std::size_t> lines;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InvalidArgument("csv: missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

inline Table read(std::istream& in) {
    Table t;
    Row row;
    std::string field;
    bool quoted = false, any = false;
    std::size_t line = 1, row_line = 1;
    auto end_row = [&] {
        row.push_back(field);
        field.clear();
        const bool blank = row.size() == 1 && row[0].empty();
        if (!blank && row.front().rfind('#', 0) != 0) {
            if (t.header.empty()) {
                t.header = row;
            } else {
                t.rows.push_back(row);
                t.lines.push_back(row_line);
            }
        }
        row.clear();
        any = false;
    };
    char c;
    while (in.get(c)) {
        if (!any) row_line = line;
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
        } else if (c == '\r') {
            continue;
        } else if (c == '\n') {
            end_row();
            ++line;
        } else {
            field += c;
        }
    }
    if (quoted) throw InvalidArgument("csv: unterminated quoted field");
    if (any) end_row();
    return t;
}

inline Table read_string(const std::string& s) {
    std::istringstream in(s);
    return read(in);
}

inline std::string escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << escape(row[i]);
    }
    out << '\n';
}

} // namespace pragcheck::csv
