#pragma once

// RFC 4180 CSV reading and writing: comma separators, a required header
// row, double quotes around fields containing separators or quotes.
// Floating-point values are emitted with 17 significant digits so files
// round-trip exactly.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace disagg {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    }
};

CsvTable read_csv(const std::string& path);

std::string csv_escape(const std::string& field);

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<std::string> row);
    void write(const std::string& path) const;
    std::string to_string() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace disagg
