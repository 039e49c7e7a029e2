#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxgan/models.hpp"
#include "voxgan/synthetic.hpp"
#include "voxgan/voxel.hpp"

namespace voxgan {

// Rigid grid alignment: axis permutation, per-axis mirror, then an integer
// shift bounded by floor(0.10 * resolution) per axis. Shifted-out voxels
// drop; vacated voxels are empty.
struct AlignmentTransform {
    std::array<int, 3> perm = {0, 1, 2};   // output axis k reads source axis perm[k]
    std::array<bool, 3> flip = {false, false, false};
    std::array<int, 3> shift = {0, 0, 0};

    bool identity() const {
        return perm == std::array<int, 3>{0, 1, 2} &&
               flip == std::array<bool, 3>{false, false, false} &&
               shift == std::array<int, 3>{0, 0, 0};
    }
};

std::int64_t translation_budget(std::int64_t resolution);

VoxelGrid apply_alignment(const VoxelGrid& g, const AlignmentTransform& t);

// Average precision of a voxel ranking: voxels sorted by predicted occupancy
// descending, all voxels sharing a score entering as one group, and
// AP = sum_k (recall_k - recall_{k-1}) * precision_k over the groups.
// Requires at least one positive ground-truth voxel; truth must be 0/1.
double average_precision(const std::vector<float>& pred, const std::vector<float>& truth);

struct AlignedAp {
    double ap = 0.0;
    AlignmentTransform transform;
};

// Exhaustive search over all 6 permutations x 8 flip masks x (2b+1)^3 shifts
// of the prediction (1200 transforms at resolution 20). Deterministic: the
// first maximum in lexicographic (perm, flip, shift) enumeration order wins,
// and the scan stops early once a transform reaches AP = 1.
AlignedAp best_aligned_ap(const VoxelGrid& pred, const VoxelGrid& truth);

struct ApResult {
    std::vector<std::string> class_names;
    std::vector<double> class_ap;             // per class, index-aligned with names
    double mean_ap = 0.0;                     // unweighted mean over classes
    std::vector<int> instance_labels;
    std::vector<double> instance_ap;
    std::vector<AlignmentTransform> instance_alignment;
};

// Scores predictions against ground truth at the canonical 20-cube
// resolution (inputs at other resolutions are resampled first). Labels index
// into class_names and every class must appear at least once.
ApResult evaluate_predictions(const std::vector<VoxelGrid>& preds,
                              const std::vector<VoxelGrid>& truths,
                              const std::vector<int>& labels,
                              const std::vector<std::string>& class_names);

// Image -> encoder mean (no sampling) -> generator -> aligned AP against the
// paired ground-truth shape, grouped per class.
ApResult evaluate_reconstruction(ImageEncoder<float>& e, Generator<float>& g,
                                 const SyntheticDataset& ds);

inline constexpr std::int64_t kEvalResolution = 20;

// Two-column summary table (class, ap; final row the per-class mean) and the
// per-instance log with the chosen alignment.
std::string ap_table_csv(const ApResult& r);
std::string ap_instances_csv(const ApResult& r);

}  // namespace voxgan
