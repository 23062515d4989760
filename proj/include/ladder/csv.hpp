#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ladder {

/// Shortest round-trip decimal form; identical output on every run.
std::string format_float(float value, int precision = -1);

/// RFC-4180 style writer with "\n" line ends; fields are quoted only when needed.
class CsvWriter {
   public:
    explicit CsvWriter(std::vector<std::string> header);

    void row(const std::vector<std::string>& fields);
    const std::string& text() const noexcept { return text_; }
    void save(const std::filesystem::path& path) const;

   private:
    std::size_t columns_;
    std::string text_;
};

/// Parses CSV text produced by CsvWriter (quoted fields supported).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ladder
