#include "voxgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "voxgan/artifacts.hpp"
#include "voxgan/ops.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

std::int64_t translation_budget(std::int64_t resolution) {
    return resolution / 10;  // floor(0.10 * resolution)
}

VoxelGrid apply_alignment(const VoxelGrid& g, const AlignmentTransform& t) {
    const std::int64_t r = g.resolution;
    VoxelGrid out = VoxelGrid::empty(r);
    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t y = 0; y < r; ++y)
            for (std::int64_t z = 0; z < r; ++z) {
                std::int64_t c[3] = {x - t.shift[0], y - t.shift[1], z - t.shift[2]};
                if (c[0] < 0 || c[0] >= r || c[1] < 0 || c[1] >= r || c[2] < 0 || c[2] >= r)
                    continue;  // shifted in from outside: stays empty
                for (int k = 0; k < 3; ++k)
                    if (t.flip[k]) c[k] = r - 1 - c[k];
                out.at(x, y, z) = g.values[static_cast<std::size_t>(
                    g.index(c[t.perm[0]], c[t.perm[1]], c[t.perm[2]]))];
            }
    return out;
}

double average_precision(const std::vector<float>& pred, const std::vector<float>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::invalid_argument("evaluation: prediction/truth length mismatch");
    std::int64_t positives = 0;
    for (float t : truth) {
        if (t != 0.0f && t != 1.0f)
            throw std::invalid_argument("evaluation: ground truth must be binary");
        if (t == 1.0f) ++positives;
    }
    if (positives == 0)
        throw std::invalid_argument("evaluation: ground truth has no positive voxels");

    std::vector<std::int64_t> order(pred.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&pred](std::int64_t a, std::int64_t b) {
        return pred[static_cast<std::size_t>(a)] > pred[static_cast<std::size_t>(b)];
    });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::int64_t seen = 0, hits = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // One tied group: every voxel sharing this score enters together.
        const float score = pred[static_cast<std::size_t>(order[i])];
        std::size_t j = i;
        while (j < order.size() && pred[static_cast<std::size_t>(order[j])] == score) {
            if (truth[static_cast<std::size_t>(order[j])] == 1.0f) ++hits;
            ++j;
        }
        seen += static_cast<std::int64_t>(j - i);
        const double recall = static_cast<double>(hits) / static_cast<double>(positives);
        const double precision = static_cast<double>(hits) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

AlignedAp best_aligned_ap(const VoxelGrid& pred, const VoxelGrid& truth) {
    if (pred.resolution != truth.resolution)
        throw std::invalid_argument("evaluation: prediction and truth resolutions differ");
    static constexpr std::array<std::array<int, 3>, 6> kPerms = {{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    const std::int64_t b = translation_budget(pred.resolution);

    AlignedAp best;
    best.ap = -1.0;
    AlignmentTransform t;
    for (const auto& perm : kPerms) {
        t.perm = perm;
        for (int mask = 0; mask < 8; ++mask) {
            t.flip = {(mask & 4) != 0, (mask & 2) != 0, (mask & 1) != 0};
            for (t.shift[0] = -b; t.shift[0] <= b; ++t.shift[0])
                for (t.shift[1] = -b; t.shift[1] <= b; ++t.shift[1])
                    for (t.shift[2] = -b; t.shift[2] <= b; ++t.shift[2]) {
                        VoxelGrid moved = apply_alignment(pred, t);
                        double ap = average_precision(moved.values, truth.values);
                        if (ap > best.ap) {
                            best.ap = ap;
                            best.transform = t;
                            if (ap == 1.0) return best;
                        }
                    }
        }
    }
    return best;
}

ApResult evaluate_predictions(const std::vector<VoxelGrid>& preds,
                              const std::vector<VoxelGrid>& truths,
                              const std::vector<int>& labels,
                              const std::vector<std::string>& class_names) {
    if (preds.size() != truths.size() || preds.size() != labels.size())
        throw std::invalid_argument("evaluation: preds, truths, labels must align");
    if (preds.empty()) throw std::invalid_argument("evaluation: nothing to evaluate");
    const std::int64_t k = static_cast<std::int64_t>(class_names.size());
    if (k < 1) throw std::invalid_argument("evaluation: no classes");

    ApResult res;
    res.class_names = class_names;
    res.instance_labels = labels;
    std::vector<double> class_sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::int64_t> class_count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int label = labels[i];
        if (label < 0 || label >= k)
            throw std::invalid_argument("evaluation: label " + std::to_string(label) +
                                        " outside the class table");
        VoxelGrid p = preds[i].resolution == kEvalResolution
                          ? preds[i]
                          : resample(preds[i], kEvalResolution);
        VoxelGrid g = truths[i].resolution == kEvalResolution
                          ? truths[i]
                          : resample(truths[i], kEvalResolution);
        AlignedAp scored = best_aligned_ap(p, g);
        res.instance_ap.push_back(scored.ap);
        res.instance_alignment.push_back(scored.transform);
        class_sum[static_cast<std::size_t>(label)] += scored.ap;
        ++class_count[static_cast<std::size_t>(label)];
    }
    double total = 0.0;
    for (std::int64_t c = 0; c < k; ++c) {
        if (class_count[static_cast<std::size_t>(c)] == 0)
            throw std::invalid_argument("evaluation: class '" +
                                        class_names[static_cast<std::size_t>(c)] +
                                        "' has no instances");
        res.class_ap.push_back(class_sum[static_cast<std::size_t>(c)] /
                               static_cast<double>(class_count[static_cast<std::size_t>(c)]));
        total += res.class_ap.back();
    }
    res.mean_ap = total / static_cast<double>(k);  // per-class averaging
    return res;
}

ApResult evaluate_reconstruction(ImageEncoder<float>& e, Generator<float>& g,
                                 const SyntheticDataset& ds) {
    if (ds.items.empty()) throw std::invalid_argument("evaluation: dataset is empty");
    const bool e_train = e.training(), g_train = g.training();
    e.set_training(false);
    g.set_training(false);
    std::vector<VoxelGrid> preds, truths;
    std::vector<int> labels;
    {
        NoGradGuard no_grad;
        const std::int64_t s = ds.image_size;
        for (const SyntheticItem& item : ds.items) {
            Tensor<float> img = Tensor<float>::from_vector(
                {1, 3, s, s}, std::vector<float>(item.image));
            EncoderOutput<float> enc = e.forward(img);
            preds.push_back(grid_from_batch(g.forward(enc.mu), 0));
            truths.push_back(item.grid);
            labels.push_back(item.label);
        }
    }
    e.set_training(e_train);
    g.set_training(g_train);

    // Restrict the class table to the classes the dataset actually holds
    // (single-class datasets list only that class).
    std::vector<int> remap(ds.class_names.size(), -1);
    std::vector<std::string> present;
    for (int label : labels) {
        if (label < 0 || label >= static_cast<int>(ds.class_names.size()))
            throw std::invalid_argument("evaluation: dataset label outside its class table");
        if (remap[static_cast<std::size_t>(label)] < 0) {
            remap[static_cast<std::size_t>(label)] = static_cast<int>(present.size());
            present.push_back(ds.class_names[static_cast<std::size_t>(label)]);
        }
    }
    for (int& label : labels) label = remap[static_cast<std::size_t>(label)];
    return evaluate_predictions(preds, truths, labels, present);
}

namespace {

std::string transform_str(const AlignmentTransform& t) {
    std::string s;
    for (int k = 0; k < 3; ++k) s += static_cast<char>('0' + t.perm[k]);
    s += ",";
    for (int k = 0; k < 3; ++k) s += t.flip[k] ? '1' : '0';
    s += "," + std::to_string(t.shift[0]) + "," + std::to_string(t.shift[1]) + "," +
         std::to_string(t.shift[2]);
    return s;
}

}  // namespace

std::string ap_table_csv(const ApResult& r) {
    std::string csv = "class,ap\n";
    for (std::size_t c = 0; c < r.class_names.size(); ++c)
        csv += r.class_names[c] + "," + format_g9(r.class_ap[c]) + "\n";
    csv += "mean," + format_g9(r.mean_ap) + "\n";
    return csv;
}

std::string ap_instances_csv(const ApResult& r) {
    std::string csv = "instance,label,class,ap,perm,flips,dx,dy,dz\n";
    for (std::size_t i = 0; i < r.instance_ap.size(); ++i) {
        const int label = r.instance_labels[i];
        csv += std::to_string(i) + "," + std::to_string(label) + "," +
               r.class_names[static_cast<std::size_t>(label)] + "," +
               format_g9(r.instance_ap[i]) + "," + transform_str(r.instance_alignment[i]) +
               "\n";
    }
    return csv;
}

}  // namespace voxgan
