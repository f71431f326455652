#include "kf/util.hpp"

#include "kf/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace kf {

std::optional<uint64_t> parse_hex(std::string_view s) {
    if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
    if (s.empty() || s.size() > 16) return std::nullopt;
    uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, 16);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::string format_hex(uint64_t v) {
    char buf[19];
    auto [ptr, ec] = std::to_chars(buf + 2, buf + sizeof(buf), v, 16);
    buf[0] = '0';
    buf[1] = 'x';
    return std::string(buf, ptr);
}

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) i++;
        size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') i++;
        if (i > start) out.emplace_back(line.substr(start, i - start));
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); i++) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<uint8_t> read_binary_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open " + p.string());
    std::vector<uint8_t> bytes;
    in.seekg(0, std::ios::end);
    bytes.resize(static_cast<size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in && bytes.size() != 0) raise(Errc::IoError, "short read on " + p.string());
    return bytes;
}

void write_text_file(const std::filesystem::path& p, std::string_view contents) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::IoError, "cannot write " + p.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) raise(Errc::IoError, "short write on " + p.string());
}

void write_binary_file(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::IoError, "cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(Errc::IoError, "short write on " + p.string());
}

} // namespace kf
