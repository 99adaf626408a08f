#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qbnn::io {

/// Shortest exact decimal representation (round-trips bit-for-bit).
std::string format_double(double v);
double parse_double(const std::string& text);

std::string read_file(const std::string& path);

/// Write-temp-then-rename so partially written artifacts never appear.
void atomic_write(const std::string& path, const std::string& content);

uint64_t fnv1a64(const void* data, size_t n);
std::string file_digest_hex(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);

} // namespace qbnn::io
