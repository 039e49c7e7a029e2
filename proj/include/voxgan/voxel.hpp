#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxgan/tensor.hpp"

namespace voxgan {

// Cubic occupancy grid. Values live in [0,1]; most producers emit hard 0/1
// but network outputs are soft probabilities until binarized. Cells are laid
// out x-major, then y, then z fastest. The translate/scale strings carry the
// original binvox placement metadata verbatim so file round-trips are exact.
struct VoxelGrid {
    std::int64_t resolution = 0;
    std::vector<float> values;
    std::string translate = "0 0 0";
    std::string scale = "1";

    static VoxelGrid empty(std::int64_t resolution);

    std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return (x * resolution + y) * resolution + z;
    }
    float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return values[static_cast<std::size_t>(index(x, y, z))];
    }
    float& at(std::int64_t x, std::int64_t y, std::int64_t z) {
        return values[static_cast<std::size_t>(index(x, y, z))];
    }

    std::int64_t numel() const { return resolution * resolution * resolution; }
    void validate() const;
};

// Hard 0/1 grid: occupied where value exceeds the threshold.
VoxelGrid binarize(const VoxelGrid& g, float threshold);

std::int64_t occupied_count(const VoxelGrid& g, float threshold);

// Intersection-over-union of two binarized grids; 1.0 when both are empty.
double voxel_iou(const VoxelGrid& a, const VoxelGrid& b, float threshold = 0.5f);

// binvox codec. Header: "#binvox 1", "dim d d d", "translate ...",
// "scale ...", "data"; payload is (value byte, run length byte) pairs with
// runs of 1..255 in x-major / z / y-fastest order. The writer emits maximal
// runs, so canonical files survive read -> write byte-identically.
std::vector<std::uint8_t> binvox_write(const VoxelGrid& g, float threshold = 0.5f);
VoxelGrid binvox_read(const std::vector<std::uint8_t>& bytes);
void binvox_save(const VoxelGrid& g, const std::string& path, float threshold = 0.5f);
VoxelGrid binvox_load(const std::string& path);

// Resolution change. Each output cell takes the max over all source cells its
// spatial extent overlaps: downsampling is block max-occupancy, upsampling
// degenerates to nearest neighbor.
VoxelGrid resample(const VoxelGrid& g, std::int64_t target_resolution);

// Embeds the grid in a larger empty cube, centered (floor offsets).
VoxelGrid pad_center(const VoxelGrid& g, std::int64_t target_resolution);

// Binarizes at the threshold, then keeps only the largest 6-connected
// component (ties broken toward the component containing the smallest linear
// index). All-empty input yields an all-empty grid.
VoxelGrid largest_connected_component(const VoxelGrid& g, float threshold);

// Wavefront OBJ mesh of the binarized grid: unit-cube faces per occupied
// voxel, faces shared by two occupied voxels omitted, vertices deduplicated.
std::string export_obj(const VoxelGrid& g, float threshold);

// Bridges to the tensor stack: [1,1,r,r,r] single-sample layout.
template <typename T>
Tensor<T> tensor_from_grid(const VoxelGrid& g) {
    std::int64_t r = g.resolution;
    std::vector<T> v(g.values.begin(), g.values.end());
    return Tensor<T>::from_vector({1, 1, r, r, r}, std::move(v));
}

// Extracts sample `b` of a [n,1,r,r,r] batch as a grid.
template <typename T>
VoxelGrid grid_from_batch(const Tensor<T>& t, std::int64_t b) {
    const Shape& s = t.shape();
    if (s.size() != 5 || s[1] != 1 || s[2] != s[3] || s[3] != s[4])
        throw std::invalid_argument("grid_from_batch: expected [n,1,r,r,r], got " + shape_str(s));
    if (b < 0 || b >= s[0]) throw std::out_of_range("grid_from_batch: sample index");
    std::int64_t r = s[2];
    VoxelGrid g = VoxelGrid::empty(r);
    const T* src = t.data() + b * r * r * r;
    for (std::int64_t i = 0; i < r * r * r; ++i)
        g.values[static_cast<std::size_t>(i)] = static_cast<float>(src[i]);
    return g;
}

}  // namespace voxgan
