#pragma once

// Small text helpers shared by the sidecar, manifest, config and report
// writers. Numbers are printed in shortest round-trip form so that files are
// byte-stable across reruns.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace diforge {

std::string format_number(double value);

double parse_double(std::string_view text, std::string_view context);
std::int64_t parse_int(std::string_view text, std::string_view context);
std::vector<std::string> split(std::string_view text, char delimiter);
std::string trim(std::string_view text);

/// Ordered `key = value` document. Blank lines and `#` comments are skipped.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text, std::string_view context);
std::string render_key_values(const KeyValues& values);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace diforge
