#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hscls {

struct CsvRow {
    std::size_t line = 0;  // 1-based line on which the row starts
    std::vector<std::string> fields;
};

class CsvParseError : public std::runtime_error {
public:
    CsvParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// RFC-4180 reader: comma delimiter, double-quote quoting with "" escapes,
/// CRLF or LF line endings, quoted fields may span lines. A leading UTF-8 BOM
/// is skipped. Blank lines are ignored.
std::vector<CsvRow> parse_csv(std::string_view text);

/// Quotes a field only when it contains a comma, quote, CR or LF.
std::string csv_escape(std::string_view field);
/// Joins escaped fields with commas and appends a newline.
std::string csv_line(std::span<const std::string> fields);
inline std::string csv_line(std::initializer_list<std::string> fields) {
    return csv_line(std::span<const std::string>(fields.begin(), fields.size()));
}

}  // namespace hscls
