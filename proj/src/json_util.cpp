#include "awm/json_util.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "awm/errors.hpp"
#include "awm/sqlite.hpp"

namespace awm {

std::string canonical_dump(const Json& value) {
    // nlohmann's default object type is an ordered std::map, so keys come out sorted.
    return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

std::string canonical_file_text(const Json& value) {
    return value.dump(2, ' ', false, Json::error_handler_t::strict) + "\n";
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    return sqlite::hex_encode(std::string_view(reinterpret_cast<const char*>(digest), length));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("short write to " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace awm
