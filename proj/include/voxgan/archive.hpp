#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

// One named float32 array inside an archive.
struct ArchiveArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

// Binary container for named float32 arrays plus a JSON metadata block.
// Used for network checkpoints, feature matrices, and classifier models.
//
// Layout: 4-byte magic "VGCK", little-endian u64 manifest length, the
// manifest (JSON: format version, per-array name/shape/dtype/byte-offset,
// free-form metadata), the payload of little-endian IEEE-754 32-bit floats,
// and a trailing little-endian u64 FNV-1a checksum of the payload bytes.
// Serialization is canonical, so write -> read -> write is byte-identical.
class Archive {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    nlohmann::json& meta() { return meta_; }
    const nlohmann::json& meta() const { return meta_; }

    void add(std::string name, Shape shape, std::vector<float> values);
    bool has(const std::string& name) const;
    const ArchiveArray& at(const std::string& name) const;
    const std::vector<ArchiveArray>& arrays() const { return arrays_; }

    std::vector<std::uint8_t> to_bytes() const;
    static Archive from_bytes(const std::vector<std::uint8_t>& bytes);

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

private:
    std::vector<ArchiveArray> arrays_;
    nlohmann::json meta_ = nlohmann::json::object();
};

}  // namespace voxgan
