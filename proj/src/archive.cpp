#include "voxgan/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace voxgan {

namespace {

constexpr char kMagic[4] = {'V', 'G', 'C', 'K'};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

[[noreturn]] void malformed(const std::string& why) {
    throw std::runtime_error("archive: " + why);
}

}  // namespace

void Archive::add(std::string name, Shape shape, std::vector<float> values) {
    if (name.empty()) malformed("array name must be nonempty");
    if (has(name)) malformed("duplicate array name '" + name + "'");
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        malformed("array '" + name + "' shape " + shape_str(shape) + " does not match " +
                  std::to_string(values.size()) + " values");
    arrays_.push_back({std::move(name), std::move(shape), std::move(values)});
}

bool Archive::has(const std::string& name) const {
    for (const ArchiveArray& a : arrays_)
        if (a.name == name) return true;
    return false;
}

const ArchiveArray& Archive::at(const std::string& name) const {
    for (const ArchiveArray& a : arrays_)
        if (a.name == name) return a;
    malformed("no array named '" + name + "'");
}

std::vector<std::uint8_t> Archive::to_bytes() const {
    nlohmann::json manifest;
    manifest["version"] = kFormatVersion;
    manifest["meta"] = meta_;
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const ArchiveArray& a : arrays_) {
        nlohmann::json e;
        e["name"] = a.name;
        e["shape"] = a.shape;
        e["dtype"] = "f32";
        e["offset"] = offset;
        entries.push_back(std::move(e));
        offset += 4 * a.values.size();
    }
    manifest["arrays"] = std::move(entries);
    std::string mtext = manifest.dump();

    std::vector<std::uint8_t> out;
    out.reserve(4 + 8 + mtext.size() + offset + 8);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u64(out, mtext.size());
    out.insert(out.end(), mtext.begin(), mtext.end());
    std::size_t payload_start = out.size();
    for (const ArchiveArray& a : arrays_)
        for (float v : a.values) put_f32(out, v);
    std::uint64_t checksum = fnv1a64(out.data() + payload_start, out.size() - payload_start);
    put_u64(out, checksum);
    return out;
}

Archive Archive::from_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 8 + 8) malformed("truncated file (header)");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) malformed("bad magic");
    std::uint64_t mlen = get_u64(bytes.data() + 4);
    if (4 + 8 + mlen + 8 > bytes.size()) malformed("truncated file (manifest)");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 12,
                                         bytes.begin() + 12 + static_cast<std::ptrdiff_t>(mlen));
    } catch (const nlohmann::json::exception& e) {
        malformed(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("version") || !manifest.contains("arrays"))
        malformed("manifest missing required fields");
    if (!manifest["version"].is_number_integer() ||
        manifest["version"].get<std::int64_t>() != kFormatVersion)
        malformed("format version mismatch: file has " + manifest["version"].dump() +
                  ", reader expects " + std::to_string(kFormatVersion));

    Archive ar;
    if (manifest.contains("meta")) ar.meta_ = manifest["meta"];

    const std::uint8_t* payload = bytes.data() + 12 + mlen;
    std::size_t payload_size = bytes.size() - 12 - mlen - 8;
    std::uint64_t expect_offset = 0;
    try {
        for (const nlohmann::json& e : manifest["arrays"]) {
            ArchiveArray a;
            a.name = e.at("name").get<std::string>();
            a.shape = e.at("shape").get<Shape>();
            for (std::int64_t dim : a.shape)
                if (dim < 0) malformed("array '" + a.name + "' has a negative extent");
            if (e.at("dtype").get<std::string>() != "f32")
                malformed("array '" + a.name + "' has unsupported dtype");
            std::uint64_t offset = e.at("offset").get<std::uint64_t>();
            if (offset != expect_offset)
                malformed("array '" + a.name + "' offset " + std::to_string(offset) +
                          " disagrees with payload position " + std::to_string(expect_offset));
            std::int64_t numel = shape_numel(a.shape);
            std::uint64_t nbytes = 4 * static_cast<std::uint64_t>(numel);
            if (offset + nbytes > payload_size) malformed("manifest/payload length disagreement");
            a.values.resize(static_cast<std::size_t>(numel));
            for (std::int64_t i = 0; i < numel; ++i)
                a.values[static_cast<std::size_t>(i)] = get_f32(payload + offset + 4 * i);
            expect_offset = offset + nbytes;
            ar.arrays_.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        malformed(std::string("malformed array manifest: ") + e.what());
    }
    if (expect_offset != payload_size) malformed("manifest/payload length disagreement");

    std::uint64_t stored = get_u64(bytes.data() + bytes.size() - 8);
    std::uint64_t actual = fnv1a64(payload, payload_size);
    if (stored != actual) malformed("payload checksum mismatch (corrupted file)");
    return ar;
}

void Archive::save(const std::string& path) const {
    std::vector<std::uint8_t> bytes = to_bytes();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) malformed("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) malformed("write failed for '" + path + "'");
}

Archive Archive::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) malformed("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return from_bytes(bytes);
}

}  // namespace voxgan
