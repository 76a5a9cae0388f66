#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace awm {

using Json = nlohmann::json;

/// Compact form with sorted keys; the form used for hashing and on the wire.
std::string canonical_dump(const Json& value);

/// File form: sorted keys, two-space indent, LF endings, trailing newline.
std::string canonical_file_text(const Json& value);

std::string sha256_hex(std::string_view bytes);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see partial files.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace awm
