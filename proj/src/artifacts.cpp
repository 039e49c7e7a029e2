#include "voxgan/artifacts.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxgan {

namespace {

[[noreturn]] void fail(const std::string& why) { throw std::runtime_error("artifact: " + why); }

}  // namespace

void write_raw_f32(const std::vector<float>& values, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + path + "' for writing");
    std::vector<std::uint8_t> bytes;
    bytes.reserve(values.size() * 4);
    for (float f : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("write failed for '" + path + "'");
}

std::vector<float> read_raw_f32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0) fail("'" + path + "' length is not a multiple of 4");
    std::vector<float> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)])
                    << (8 * b);
        std::memcpy(&values[i], &bits, 4);
    }
    return values;
}

void write_text_file(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << text;
    if (!out) fail("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string format_g9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace voxgan
