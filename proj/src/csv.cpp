#include "disagg/csv.hpp"

#include "disagg/error.hpp"

#include <fstream>
#include <sstream>

namespace disagg {

namespace {

// Splits one logical CSV record starting at `pos`; handles quoted fields
// with embedded separators, quotes, and newlines.
std::vector<std::string> parse_record(const std::string& text, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (;;) {
        if (pos >= text.size()) {
            if (quoted) fail(ErrorKind::data, "csv: unterminated quoted field");
            fields.push_back(field);
            return fields;
        }
        const char c = text[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field += '"';
                    pos += 2;
                } else {
                    quoted = false;
                    ++pos;
                }
            } else {
                field += c;
                ++pos;
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                ++pos;
                break;
            case ',':
                fields.push_back(field);
                field.clear();
                ++pos;
                break;
            case '\r':
                ++pos;
                if (pos < text.size() && text[pos] == '\n') ++pos;
                fields.push_back(field);
                return fields;
            case '\n':
                ++pos;
                fields.push_back(field);
                return fields;
            default:
                field += c;
                ++pos;
                break;
        }
    }
}

} // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::config, "cannot open input file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    CsvTable table;
    std::size_t pos = 0;
    if (text.empty()) fail(ErrorKind::data, "csv: empty file " + path);
    table.header = parse_record(text, pos);
    while (pos < text.size()) {
        // Skip a trailing blank line.
        if (text[pos] == '\n' && pos + 1 == text.size()) break;
        auto row = parse_record(text, pos);
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != table.header.size()) {
            fail(ErrorKind::data, "csv: row " + std::to_string(table.rows.size() + 2) +
                                      " has " + std::to_string(row.size()) + " fields, header has " +
                                      std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string csv_escape(const std::string& field) {
    bool needs_quotes = false;
    for (const char c : field) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quotes = true;
            break;
        }
    }
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

void CsvWriter::add_row(std::vector<std::string> row) {
    if (row.size() != header_.size()) {
        fail(ErrorKind::param, "csv: row width does not match header");
    }
    rows_.push_back(std::move(row));
}

std::string CsvWriter::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (i > 0) out += ',';
        out += csv_escape(header_[i]);
    }
    out += '\n';
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out += ',';
            out += csv_escape(row[i]);
        }
        out += '\n';
    }
    return out;
}

void CsvWriter::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::config, "cannot open output file: " + path);
    out << to_string();
}

} // namespace disagg
