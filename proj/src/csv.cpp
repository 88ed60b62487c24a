#include "hscls/csv.hpp"

namespace hscls {

std::vector<CsvRow> parse_csv(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    std::size_t line = 1;
    std::size_t i = 0;
    bool in_quotes = false;
    bool field_started = false;  // distinguishes "" (empty quoted) from nothing
    bool row_has_content = false;
    std::size_t quote_line = 0;

    auto end_field = [&] {
        row.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        if (row_has_content || !row.fields.empty()) {
            end_field();
            rows.push_back(std::move(row));
        }
        row = CsvRow{};
        row_has_content = false;
        field.clear();
        field_started = false;
    };

    row.line = line;
    while (i < text.size()) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                    continue;
                }
                in_quotes = false;
                ++i;
                if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
                    throw CsvParseError(line, "unexpected character after closing quote");
                }
                continue;
            }
            if (c == '\n') ++line;
            field.push_back(c);
            ++i;
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty()) {
                    throw CsvParseError(line, "quote inside unquoted field");
                }
                in_quotes = true;
                quote_line = line;
                field_started = true;
                row_has_content = true;
                ++i;
                break;
            case ',':
                end_field();
                row_has_content = true;
                ++i;
                break;
            case '\r':
                ++i;
                if (i < text.size() && text[i] == '\n') ++i;
                end_row();
                row.line = ++line;
                break;
            case '\n':
                ++i;
                end_row();
                row.line = ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
                row_has_content = true;
                ++i;
        }
    }
    if (in_quotes) throw CsvParseError(quote_line, "unterminated quoted field");
    end_row();
    return rows;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string csv_line(std::span<const std::string> fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

}  // namespace hscls
