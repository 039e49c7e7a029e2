#include "voxgan/features.hpp"

#include <stdexcept>
#include <string>
#include <utility>

#include "voxgan/archive.hpp"
#include "voxgan/ops.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

std::vector<FeatureSegment> feature_layout(const ScaleProfile& profile) {
    profile.validate();
    const std::int64_t n = profile.n_layers();
    if (n < 3)
        throw std::invalid_argument(
            "features: profile '" + profile.name +
            "' has no interior discriminator layers to pool");
    std::vector<FeatureSegment> segments;
    std::int64_t extent = profile.resolution;
    std::int64_t offset = 0;
    for (std::int64_t i = 1; i <= n; ++i) {
        // Strided blocks halve the extent; the head block collapses it by 3.
        extent = i == n ? extent - 3 : (extent - 2) / 2 + 1;
        if (i == 1 || i == n) continue;
        if (extent < 2 || extent % 2 != 0)
            throw std::invalid_argument(
                "features: interior block extent " + std::to_string(extent) +
                " cannot pool down to 2");
        FeatureSegment seg;
        seg.layer = static_cast<int>(i);
        seg.channels = profile.disc_channels(i);
        seg.pooled_extent = 2;
        seg.offset = offset;
        segments.push_back(seg);
        offset += seg.length();
    }
    return segments;
}

std::int64_t feature_length(const ScaleProfile& profile) {
    std::int64_t total = 0;
    for (const FeatureSegment& seg : feature_layout(profile)) total += seg.length();
    return total;
}

namespace {

// Restores the discriminator's training flag on scope exit.
class EvalScope {
public:
    explicit EvalScope(Discriminator<float>& d) : d_(d), prev_(d.training()) {
        d_.set_training(false);
    }
    ~EvalScope() { d_.set_training(prev_); }
    EvalScope(const EvalScope&) = delete;
    EvalScope& operator=(const EvalScope&) = delete;

private:
    Discriminator<float>& d_;
    bool prev_;
};

}  // namespace

FeatureMatrix extract_feature_matrix(Discriminator<float>& d,
                                     const std::vector<VoxelGrid>& grids) {
    const ScaleProfile& profile = d.profile();
    const std::int64_t r = profile.resolution;
    for (const VoxelGrid& g : grids)
        if (g.resolution != r)
            throw std::invalid_argument(
                "features: grid resolution " + std::to_string(g.resolution) +
                " does not match profile resolution " + std::to_string(r));

    FeatureMatrix m;
    m.layout = feature_layout(profile);
    for (const FeatureSegment& seg : m.layout) m.dim += seg.length();
    m.rows = static_cast<std::int64_t>(grids.size());
    m.values.reserve(static_cast<std::size_t>(m.rows * m.dim));

    EvalScope eval(d);
    NoGradGuard no_grad;
    const std::int64_t chunk = 16;
    for (std::int64_t start = 0; start < m.rows; start += chunk) {
        const std::int64_t b = std::min(chunk, m.rows - start);
        std::vector<float> batch;
        batch.reserve(static_cast<std::size_t>(b * r * r * r));
        for (std::int64_t i = 0; i < b; ++i) {
            const std::vector<float>& v = grids[static_cast<std::size_t>(start + i)].values;
            batch.insert(batch.end(), v.begin(), v.end());
        }
        Tensor<float> x = Tensor<float>::from_vector({b, 1, r, r, r}, std::move(batch));
        DiscriminatorOutput<float> out = d.forward(x, /*capture=*/true);
        std::vector<Tensor<float>> pooled;
        pooled.reserve(m.layout.size());
        for (const FeatureSegment& seg : m.layout) {
            const Tensor<float>& act =
                out.activations[static_cast<std::size_t>(seg.layer - 1)];
            pooled.push_back(maxpool3d(act, act.shape()[2] / seg.pooled_extent));
        }
        for (std::int64_t i = 0; i < b; ++i)
            for (std::size_t s = 0; s < m.layout.size(); ++s) {
                const std::int64_t len = m.layout[s].length();
                const float* src = pooled[s].data() + i * len;
                m.values.insert(m.values.end(), src, src + len);
            }
    }
    return m;
}

FeatureVector extract_features(Discriminator<float>& d, const VoxelGrid& grid) {
    FeatureMatrix m = extract_feature_matrix(d, {grid});
    FeatureVector fv;
    fv.layout = std::move(m.layout);
    fv.values = std::move(m.values);
    return fv;
}

FeatureMatrix raw_feature_matrix(const std::vector<VoxelGrid>& grids) {
    FeatureMatrix m;
    m.rows = static_cast<std::int64_t>(grids.size());
    if (!grids.empty()) {
        const std::int64_t r = grids.front().resolution;
        for (const VoxelGrid& g : grids)
            if (g.resolution != r)
                throw std::invalid_argument(
                    "features: raw grids must share one resolution");
        m.dim = r * r * r;
        m.values.reserve(static_cast<std::size_t>(m.rows * m.dim));
        for (const VoxelGrid& g : grids)
            m.values.insert(m.values.end(), g.values.begin(), g.values.end());
    }
    return m;
}

namespace {

nlohmann::json layout_to_json(const std::vector<FeatureSegment>& layout) {
    nlohmann::json arr = nlohmann::json::array();
    for (const FeatureSegment& seg : layout)
        arr.push_back({{"layer", seg.layer},
                       {"channels", seg.channels},
                       {"pooled_extent", seg.pooled_extent},
                       {"offset", seg.offset}});
    return arr;
}

std::vector<FeatureSegment> layout_from_json(const nlohmann::json& arr) {
    std::vector<FeatureSegment> layout;
    for (const nlohmann::json& e : arr) {
        FeatureSegment seg;
        seg.layer = e.at("layer").get<int>();
        seg.channels = e.at("channels").get<std::int64_t>();
        seg.pooled_extent = e.at("pooled_extent").get<std::int64_t>();
        seg.offset = e.at("offset").get<std::int64_t>();
        layout.push_back(seg);
    }
    return layout;
}

}  // namespace

void save_feature_matrix(const FeatureMatrix& m, const std::vector<int>& labels,
                         const std::string& path) {
    if (static_cast<std::int64_t>(labels.size()) != m.rows)
        throw std::invalid_argument("features: one label per matrix row required");
    Archive a;
    a.meta()["kind"] = "feature-matrix";
    a.meta()["layout"] = layout_to_json(m.layout);
    a.add("features", {m.rows, m.dim}, m.values);
    std::vector<float> lab(labels.begin(), labels.end());
    a.add("labels", {m.rows}, lab);
    a.save(path);
}

std::pair<FeatureMatrix, std::vector<int>> load_feature_matrix(
    const std::string& path) {
    Archive a = Archive::load(path);
    if (!a.meta().contains("kind") || a.meta().at("kind") != "feature-matrix")
        throw std::runtime_error("features: '" + path + "' is not a feature matrix");
    const ArchiveArray& f = a.at("features");
    if (f.shape.size() != 2)
        throw std::runtime_error("features: feature array must be 2-D");
    FeatureMatrix m;
    m.rows = f.shape[0];
    m.dim = f.shape[1];
    m.values = f.values;
    if (a.meta().contains("layout"))
        m.layout = layout_from_json(a.meta().at("layout"));
    const ArchiveArray& l = a.at("labels");
    if (l.shape.size() != 1 || l.shape[0] != m.rows)
        throw std::runtime_error("features: labels must be one per row");
    std::vector<int> labels;
    labels.reserve(l.values.size());
    for (float v : l.values) {
        int iv = static_cast<int>(v);
        if (static_cast<float>(iv) != v || iv < 0)
            throw std::runtime_error("features: labels must be non-negative integers");
        labels.push_back(iv);
    }
    return {std::move(m), std::move(labels)};
}

void save_svm(const LinearSvmModel& model, const std::string& path) {
    Archive a;
    a.meta()["kind"] = "svm";
    a.meta()["C"] = model.regularization_c;
    a.meta()["balanced"] = model.balanced;
    a.meta()["converged"] = model.converged;
    a.add("weights", {model.n_classes, model.feature_dim}, model.weights);
    a.add("intercepts", {model.n_classes}, model.intercepts);
    a.add("class_weights", {model.n_classes}, model.class_weights);
    a.save(path);
}

LinearSvmModel load_svm(const std::string& path) {
    Archive a = Archive::load(path);
    if (!a.meta().contains("kind") || a.meta().at("kind") != "svm")
        throw std::runtime_error("features: '" + path + "' is not a classifier model");
    const ArchiveArray& w = a.at("weights");
    if (w.shape.size() != 2)
        throw std::runtime_error("features: weight array must be 2-D");
    LinearSvmModel m;
    m.n_classes = w.shape[0];
    m.feature_dim = w.shape[1];
    m.weights = w.values;
    const ArchiveArray& b = a.at("intercepts");
    const ArchiveArray& cw = a.at("class_weights");
    if (b.shape != Shape{m.n_classes} || cw.shape != Shape{m.n_classes})
        throw std::runtime_error("features: per-class array shape mismatch");
    m.intercepts = b.values;
    m.class_weights = cw.values;
    m.regularization_c = a.meta().at("C").get<double>();
    m.balanced = a.meta().at("balanced").get<bool>();
    m.converged = a.meta().at("converged").get<bool>();
    return m;
}

}  // namespace voxgan
