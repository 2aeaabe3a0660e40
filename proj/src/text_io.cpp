#include "conceptvae/text_io.hpp"

#include <array>
#include <charconv>
#include <istream>
#include <stdexcept>

namespace conceptvae::text {

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) {
        throw std::runtime_error("cannot format number");
    }
    return std::string(buf.data(), ptr);
}

namespace {

template <typename T>
T parse_number(std::string_view text, const char* kind) {
    text = trim(text);
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || first == last) {
        throw std::invalid_argument(std::string("not a valid ") + kind + ": '" +
                                    std::string(text) + "'");
    }
    return value;
}

}  // namespace

double parse_double(std::string_view text) { return parse_number<double>(text, "number"); }
std::int64_t parse_int(std::string_view text) {
    return parse_number<std::int64_t>(text, "integer");
}
std::uint64_t parse_uint(std::string_view text) {
    return parse_number<std::uint64_t>(text, "unsigned integer");
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::string_view trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t");
    return text.substr(first, last - first + 1);
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) {
        return false;
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return true;
}

void expect_header(std::istream& in, std::string_view tag, std::string_view artifact) {
    std::string line;
    if (!next_line(in, line)) {
        throw std::runtime_error(std::string(artifact) + ": empty file");
    }
    if (line != tag) {
        throw std::runtime_error(std::string(artifact) + ": expected header '" +
                                 std::string(tag) + "', got '" + line + "'");
    }
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

}  // namespace conceptvae::text
