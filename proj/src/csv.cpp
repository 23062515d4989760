#include "ladder/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>

#include "ladder/error.hpp"

namespace ladder {

std::string format_float(float value, int precision) {
    require(std::isfinite(value), ErrorKind::numeric, "cannot format a non-finite value");
    if (value == 0.0f) value = 0.0f;  // drop the sign of -0
    char buf[64];
    const auto res = precision < 0 ? std::to_chars(buf, buf + sizeof buf, value)
                                   : std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, precision);
    require(res.ec == std::errc{}, ErrorKind::numeric, "float formatting failed");
    return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    require(columns_ > 0, ErrorKind::contract, "csv needs at least one column");
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    require(fields.size() == columns_, ErrorKind::dimension,
            "csv row has " + std::to_string(fields.size()) + " fields, header has " + std::to_string(columns_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) text_ += ',';
        text_ += quote(fields[i]);
    }
    text_ += '\n';
}

void CsvWriter::save(const std::filesystem::path& path) const { write_text(path, text_); }

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        any = true;
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    require(!quoted, ErrorKind::format, "unterminated quoted csv field");
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace ladder
