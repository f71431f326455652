#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace kf {

// FIPS 180-4 SHA-256, hex digest. Used for provenance hashes in sidecar files.
std::string sha256_hex(std::span<const uint8_t> data);

inline std::string sha256_hex(const std::string& s) {
    return sha256_hex(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

} // namespace kf
