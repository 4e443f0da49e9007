#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace selfportrait::csv {

struct Row {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and newlines.
// Throws MalformedRow on an unterminated quote.
std::vector<Row> read(std::istream& in);
std::vector<Row> read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string join(const std::vector<std::string>& fields);

}  // namespace selfportrait::csv
