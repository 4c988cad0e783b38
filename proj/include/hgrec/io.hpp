#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hgrec::io {

std::string read_text_file(const std::filesystem::path& path);
// Writes to a temp file in the same directory, then renames into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Shortest round-trip decimal form of an f64.
std::string format_double(double v);

std::vector<std::string_view> split_csv_line(std::string_view line);
double parse_double(std::string_view s, const std::string& context);
std::uint64_t parse_u64(std::string_view s, const std::string& context);

}  // namespace hgrec::io
