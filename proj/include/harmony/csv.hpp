#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace harmony::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row

    /// Index of a header column, or -1.
    long column(std::string_view name) const;
};

/// RFC-4180 style reader: comma separator, double-quoted fields, header row required.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

/// Quotes the field when it contains a separator, quote or newline.
std::string escape(std::string_view field);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace harmony::csv
