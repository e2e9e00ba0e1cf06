#pragma once

// Shared plumbing for the on-disk formats: exact number formatting, the
// header-plus-raw-doubles container and atomic file replacement.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imugest {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Appends `values` as little-endian IEEE-754 binary64.
void append_le_doubles(std::string& out, std::span<const double> values);
/// Decodes little-endian binary64 from `bytes` into `out` (sizes must agree).
void read_le_doubles(std::string_view bytes, std::span<double> out);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Marker line closing the text header of a binary container.
inline constexpr std::string_view kEndHeader = "end_header";

struct Container {
    std::vector<std::string> header;  // lines, without the end marker
    std::string payload;              // bytes after the end marker
};

std::string encode_container(const std::vector<std::string>& header, std::string_view payload);
/// nullopt if the end marker is missing.
std::optional<Container> decode_container(std::string_view bytes);

}  // namespace imugest
