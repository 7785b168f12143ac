#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pcmarg {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string encode_f64_le(std::span<const double> values);
std::vector<double> decode_f64_le(const std::string& bytes);

// 17 significant digits; round-trips every finite double.
std::string format_double(double v);

// FNV-1a 64-bit, lower-case hex.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace pcmarg
