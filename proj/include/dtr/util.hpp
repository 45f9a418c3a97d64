#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dtr {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// Content key for caches: hash(namespace ‖ 0x00 ‖ payload).
std::string content_key(std::string_view ns, std::string_view payload);

std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target, so readers never
// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

bool is_blank(std::string_view s) noexcept;

} // namespace dtr
