#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace legalrag {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Write via a temp file in the same directory, then rename into place.
/// Concurrent writers of the same path never interleave.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Error raised by a chat/embedding/rerank backend or the gateway around it.
class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& what, std::string request_hash = "")
        : std::runtime_error(what), request_hash_(std::move(request_hash)) {}

    const std::string& request_hash() const { return request_hash_; }

private:
    std::string request_hash_;
};

}  // namespace legalrag
