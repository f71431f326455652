#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kf {

// Parses "0x1f" or "1f". Empty, overlong or non-hex input yields nullopt.
std::optional<uint64_t> parse_hex(std::string_view s);

// Lowercase, 0x-prefixed, no leading zeros (0 -> "0x0").
std::string format_hex(uint64_t v);

// Whitespace-separated tokens; consecutive separators collapse.
std::vector<std::string> split_ws(std::string_view line);

std::vector<std::string> split(std::string_view s, char sep);

std::string read_text_file(const std::filesystem::path& p);
std::vector<uint8_t> read_binary_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, std::string_view contents);
void write_binary_file(const std::filesystem::path& p, const std::vector<uint8_t>& bytes);

// Deterministic 64-bit generator for fixtures and tests (xorshift64*).
class SplitRng {
public:
    explicit SplitRng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next() {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    uint64_t below(uint64_t bound) { return bound ? next() % bound : 0; }

private:
    uint64_t state_;
};

} // namespace kf
