#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace voxgan {

// Little-endian IEEE-754 float32 dump, no header; readers must know the
// shape from a sibling artifact (checkpoint manifest, CSV sidecar, ...).
void write_raw_f32(const std::vector<float>& values, const std::string& path);
std::vector<float> read_raw_f32(const std::string& path);

void write_text_file(const std::string& text, const std::string& path);
std::string read_text_file(const std::string& path);

// Shortest decimal representation that round-trips a double through text.
std::string format_g9(double v);

}  // namespace voxgan
