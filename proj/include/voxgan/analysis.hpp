#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxgan/losses.hpp"
#include "voxgan/models.hpp"
#include "voxgan/voxel.hpp"

namespace voxgan {

// Varying one latent coordinate: the generated grid per value plus a binary
// mask of the voxels whose occupancy differs between the smallest and the
// largest swept value.
struct SweepResult {
    std::int64_t dimension = 0;
    std::vector<float> values;
    std::vector<VoxelGrid> grids;
    VoxelGrid mask;
};

SweepResult sweep_dimension(Generator<float>& g, const std::vector<float>& z0,
                            std::int64_t dim, const std::vector<float>& values,
                            PriorKind prior, float threshold = 0.5f);

// Linear walk z(t) = (1-t)*z1 + t*z2 at t = i/(steps-1). The endpoint grids
// are generated from z1 and z2 verbatim, so they match direct generation
// bitwise. Requires steps >= 2.
std::vector<VoxelGrid> interpolate(Generator<float>& g, const std::vector<float>& z1,
                                   const std::vector<float>& z2, std::int64_t steps);

// Component-wise a - b + c (in double), clamped to the prior's support before
// generation; the uniform prior clamps to [0,1], the normal prior is
// unbounded.
std::vector<float> arithmetic_latent(const std::vector<float>& z_a,
                                     const std::vector<float>& z_b,
                                     const std::vector<float>& z_c, PriorKind prior);
VoxelGrid shape_arithmetic(Generator<float>& g, const std::vector<float>& z_a,
                           const std::vector<float>& z_b,
                           const std::vector<float>& z_c, PriorKind prior);

// Retrieval embedding: the last feature-bearing discriminator block (the one
// before the scalar head) max-pooled with window 2, flattened channel-major.
// 512 channels at 4^3 pool to 4096 values on the 64-cube profile.
std::vector<float> retrieval_feature(Discriminator<float>& d, const VoxelGrid& grid);

struct RetrievalHit {
    std::int64_t index = 0;
    double distance = 0.0;
};

// Euclidean distance in embedding space, ascending; ties break toward the
// lower corpus index. Returns min(k, corpus size) hits.
std::vector<RetrievalHit> nn_retrieve(Discriminator<float>& d, const VoxelGrid& query,
                                      const std::vector<VoxelGrid>& corpus,
                                      std::int64_t k);

// Saliency of one discriminator channel: backward from the channel's spatial
// sum with rectifier gradients gated to positive-input, positive-upstream
// coordinates (leaky rectifiers act as plain rectifiers during the pass).
// Returns |d activation / d input| scaled into [0,1] by its maximum. Pass
// guided = false to use the ordinary gradient instead.
VoxelGrid guided_backprop(Discriminator<float>& d, const VoxelGrid& grid,
                          std::int64_t layer, std::int64_t channel,
                          bool guided = true);

struct NeuronActivation {
    std::int64_t object = 0;  // dataset index
    float activation = 0.0f;  // spatial max of the channel's response
};

struct NeuronReport {
    std::int64_t layer = 0;
    std::int64_t channel = 0;
    std::vector<NeuronActivation> top;  // descending activation
    std::vector<VoxelGrid> saliency;    // aligned with `top`
};

// Per channel of the requested layer (default: the block before the scalar
// head), the k objects with the strongest spatial-max response, each with its
// guided-backprop saliency grid.
std::vector<NeuronReport> top_activating_objects(Discriminator<float>& d,
                                                 const std::vector<VoxelGrid>& dataset,
                                                 std::int64_t layer, std::int64_t k);

// Writes `base`.f32 (raw little-endian float32 scalar grid), `base`.obj (the
// occupancy surface), and `base`.csv (x,y,z,value rows for occupied voxels in
// linear-index order).
void save_scalar_overlay(const VoxelGrid& occupancy, const VoxelGrid& scalars,
                         float threshold, const std::string& base);

}  // namespace voxgan
