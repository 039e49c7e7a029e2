#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxgan/rng.hpp"
#include "voxgan/voxel.hpp"

namespace voxgan {

inline constexpr std::array<const char*, 5> kSyntheticClasses = {"box", "table", "chair",
                                                                 "cross", "sphere"};

// Parameter ranges (in voxels) for the procedural shape families. Every shape
// is placed with at least a one-voxel empty margin on all sides; positions
// and sizes are drawn per item from a stream derived from (seed, item index).
struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::string kind = "all";  // one class name, or "all" to cycle through them

    std::int64_t min_extent = 0, max_extent = 0;  // box sides, footprints, heights
    std::int64_t min_leg = 0, max_leg = 0;        // table/chair leg width
    std::int64_t min_slab = 0, max_slab = 0;      // table top / chair seat thickness
    std::int64_t min_arm = 0, max_arm = 0;        // cross bar width
    std::int64_t min_radius = 0, max_radius = 0;  // sphere radius

    static SyntheticSpec defaults(std::int64_t resolution, std::uint64_t seed);
    void validate(std::int64_t resolution) const;
};

struct SyntheticItem {
    std::int64_t label = 0;
    std::string class_name;
    VoxelGrid grid;
    std::vector<float> image;  // [3, image_size, image_size] row-major
};

struct SyntheticDataset {
    std::int64_t resolution = 0;
    std::int64_t image_size = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;
    std::vector<SyntheticItem> items;
};

// Three axis-aligned max-occupancy views of the grid, nearest-neighbor
// upscaled to image_size: channel 0 collapses z, channel 1 collapses y,
// channel 2 collapses x.
std::vector<float> project_orthographic(const VoxelGrid& g, std::int64_t image_size);

// n procedural shapes with paired projection images at 4x the grid
// resolution (the image encoder's input size for that profile).
SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec, std::int64_t n,
                                        std::int64_t resolution);

void save_dataset(const SyntheticDataset& ds, const std::string& dir);
SyntheticDataset load_dataset(const std::string& dir);

// 8-bit binary PPM (P6) with channels mapped to R/G/B.
void ppm_save(const std::vector<float>& image, std::int64_t size, const std::string& path);
std::vector<float> ppm_load(const std::string& path, std::int64_t& size);

}  // namespace voxgan
