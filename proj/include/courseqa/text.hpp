#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace courseqa::text {

// Lowercased ASCII alphanumeric runs. Bytes >= 0x80 are kept as token
// characters so UTF-8 words are not shredded.
std::vector<std::string> tokenize(std::string_view text);

// Lowercased whitespace-separated tokens (BERTScore segmentation).
std::vector<std::string> whitespace_tokens(std::string_view text);

std::size_t word_count(std::string_view text);

// Trim and collapse every whitespace run to a single space.
std::string normalize_whitespace(std::string_view text);

std::string trim(std::string_view text);

std::string replace_all(std::string_view text, std::string_view from, std::string_view to);

std::string crlf_to_lf(std::string_view text);

// Length of the UTF-8 sequence introduced by lead byte `c` (1 for invalid leads).
std::size_t utf8_sequence_length(unsigned char c);
inline bool utf8_is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

std::uint64_t fnv1a64(std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace courseqa::text

namespace courseqa::io {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path);

// Writes atomically through a sibling temporary file.
void write_file(const std::filesystem::path& path, std::string_view contents);

// Calls `on_record(json, line_number)` per non-blank line; malformed JSON is
// reported with its 1-based line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& on_record);

std::string to_jsonl(const std::vector<json>& records);

}  // namespace courseqa::io
