#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coda::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, fsyncs it, then renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Appends one line and fsyncs before returning.
void append_line_durable(const std::filesystem::path& path, std::string_view line);

/// Little-endian float32 encoding, no header.
std::string encode_f32le(std::span<const float> values);
std::vector<float> decode_f32le(std::string_view bytes);

/// Splits a CSV line on commas. No quoting support; ids must not contain commas.
std::vector<std::string_view> split_csv(std::string_view line);
std::vector<std::string_view> split_lines(std::string_view text);

bool parse_float(std::string_view s, float& out);
bool parse_int(std::string_view s, long long& out);

/// Shortest representation that round-trips a float.
std::string format_float(float v);
/// Fixed format used by reports; stable across runs.
std::string format_double(double v);

}  // namespace coda::io
