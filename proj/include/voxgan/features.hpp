#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxgan/models.hpp"
#include "voxgan/voxel.hpp"

namespace voxgan {

// One pooled discriminator layer inside a flattened feature vector.
struct FeatureSegment {
    int layer = 0;  // 1-based block index within the discriminator
    std::int64_t channels = 0;
    std::int64_t pooled_extent = 0;
    std::int64_t offset = 0;  // start position within the flat vector

    std::int64_t length() const {
        return channels * pooled_extent * pooled_extent * pooled_extent;
    }
};

struct FeatureVector {
    std::vector<float> values;
    std::vector<FeatureSegment> layout;

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
};

// Row-major sample matrix. `layout` is carried along when the rows came from
// discriminator features; raw-voxel matrices leave it empty.
struct FeatureMatrix {
    std::int64_t rows = 0;
    std::int64_t dim = 0;
    std::vector<float> values;
    std::vector<FeatureSegment> layout;

    const float* row(std::int64_t i) const { return values.data() + i * dim; }
};

// Pooling plan for a profile: every interior discriminator block (all but the
// first and the last) max-pooled down to a 2x2x2 spatial footprint. On the
// 64-cube profile that pools the 16/8/4-extent blocks with windows 8/4/2 and
// concatenates 1024 + 2048 + 4096 = 7168 values.
std::vector<FeatureSegment> feature_layout(const ScaleProfile& profile);
std::int64_t feature_length(const ScaleProfile& profile);

// Runs the discriminator in eval mode (running batch-norm statistics) and
// concatenates the pooled interior activations, channel-major. The training
// flag is restored afterwards.
FeatureVector extract_features(Discriminator<float>& d, const VoxelGrid& grid);
FeatureMatrix extract_feature_matrix(Discriminator<float>& d,
                                     const std::vector<VoxelGrid>& grids);

// Baseline representation: each grid flattened to its raw occupancy values.
FeatureMatrix raw_feature_matrix(const std::vector<VoxelGrid>& grids);

// One-vs-all linear classifier with L2-regularized hinge loss. The intercept
// is learned as an appended constant feature of 1.0, so it shares the L2
// penalty with the weights.
struct LinearSvmModel {
    std::int64_t feature_dim = 0;
    std::int64_t n_classes = 0;
    std::vector<float> weights;        // [n_classes, feature_dim] row-major
    std::vector<float> intercepts;     // [n_classes]
    std::vector<float> class_weights;  // per-class sample weight (1.0 unweighted)
    double regularization_c = 1.0;
    bool balanced = false;
    bool converged = false;

    double score(const float* feature, std::int64_t cls) const;
};

struct SvmPrediction {
    int label = 0;
    std::vector<double> scores;
};

// Solver diagnostics: per class, the negated dual objective after each full
// sweep. Exact coordinate minimization makes every trace non-increasing.
struct SvmTrainReport {
    bool converged = false;
    std::vector<std::vector<double>> objective_trace;
};

inline constexpr double kSvmStopTol = 1e-6;
inline constexpr int kSvmMaxSweeps = 1000;

// Minimizes, independently per class c with y_i = +/-1 against c:
//   0.5*||w||^2 + C * sum_i cw(label_i) * max(0, 1 - y_i * (w.x_i + b))
// where cw(cls) = n / (n_classes * n_cls) when balanced, else 1. Labels must
// be 0..k-1 with k >= 2 and every class populated. Deterministic dual
// coordinate descent in fixed sample order; stops when the largest projected
// gradient over a sweep drops below kSvmStopTol, else caps at kSvmMaxSweeps
// and reports converged = false.
LinearSvmModel svm_train(const FeatureMatrix& x, const std::vector<int>& labels,
                         double regularization_c, bool balanced,
                         SvmTrainReport* report = nullptr);

// Argmax of per-class scores; ties resolve to the lowest class index.
SvmPrediction svm_predict(const LinearSvmModel& model, const float* feature,
                          std::int64_t dim);
SvmPrediction svm_predict(const LinearSvmModel& model,
                          const std::vector<float>& feature);

double svm_accuracy(const LinearSvmModel& model, const FeatureMatrix& x,
                    const std::vector<int>& labels);

struct LimitedDataPoint {
    std::int64_t samples_per_class = 0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population standard deviation over seeds
    std::vector<double> per_seed_accuracy;
};

// For each budget: per seed, draw that many training rows per class (seeded
// shuffle, selected indices sorted ascending so the full budget reproduces
// the original training set exactly), fit, and score on the held-out set.
std::vector<LimitedDataPoint> limited_data_experiment(
    const FeatureMatrix& train_x, const std::vector<int>& train_y,
    const FeatureMatrix& test_x, const std::vector<int>& test_y,
    const std::vector<std::int64_t>& samples_per_class,
    const std::vector<std::uint64_t>& seeds, double regularization_c,
    bool balanced);

// Container persistence (same format as checkpoints: manifest + f32 payload).
void save_feature_matrix(const FeatureMatrix& m, const std::vector<int>& labels,
                         const std::string& path);
std::pair<FeatureMatrix, std::vector<int>> load_feature_matrix(
    const std::string& path);

void save_svm(const LinearSvmModel& model, const std::string& path);
LinearSvmModel load_svm(const std::string& path);

}  // namespace voxgan
