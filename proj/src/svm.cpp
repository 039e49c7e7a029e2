#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxgan/features.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/training.hpp"

namespace voxgan {

double LinearSvmModel::score(const float* feature, std::int64_t cls) const {
    const float* w = weights.data() + cls * feature_dim;
    double s = 0.0;
    for (std::int64_t j = 0; j < feature_dim; ++j)
        s += static_cast<double>(w[j]) * static_cast<double>(feature[j]);
    return s + static_cast<double>(intercepts[static_cast<std::size_t>(cls)]);
}

namespace {

std::int64_t infer_classes(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("svm: no training samples");
    int max_label = 0;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("svm: labels must be non-negative");
        max_label = std::max(max_label, y);
    }
    const std::int64_t k = max_label + 1;
    if (k < 2) throw std::invalid_argument("svm: need at least two classes");
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    for (std::int64_t c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw std::invalid_argument("svm: class " + std::to_string(c) +
                                        " has no training samples");
    return k;
}

}  // namespace

LinearSvmModel svm_train(const FeatureMatrix& x, const std::vector<int>& labels,
                         double regularization_c, bool balanced,
                         SvmTrainReport* report) {
    if (static_cast<std::int64_t>(labels.size()) != x.rows)
        throw std::invalid_argument("svm: one label per feature row required");
    if (!(regularization_c > 0.0))
        throw std::invalid_argument("svm: regularization C must be positive");
    const std::int64_t n = x.rows;
    const std::int64_t dim = x.dim;
    const std::int64_t k = infer_classes(labels);

    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    std::vector<double> cw(static_cast<std::size_t>(k), 1.0);
    if (balanced)
        for (std::int64_t c = 0; c < k; ++c)
            cw[static_cast<std::size_t>(c)] =
                static_cast<double>(n) /
                (static_cast<double>(k) * static_cast<double>(counts[static_cast<std::size_t>(c)]));

    // Upper bound per sample's dual variable, and the squared norm of the
    // sample with the appended intercept feature (constant 1.0).
    std::vector<double> cap(static_cast<std::size_t>(n));
    std::vector<double> q(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        cap[static_cast<std::size_t>(i)] =
            regularization_c * cw[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        const float* xi = x.row(i);
        double sq = 1.0;
        for (std::int64_t j = 0; j < dim; ++j)
            sq += static_cast<double>(xi[j]) * static_cast<double>(xi[j]);
        q[static_cast<std::size_t>(i)] = sq;
    }

    LinearSvmModel model;
    model.feature_dim = dim;
    model.n_classes = k;
    model.weights.assign(static_cast<std::size_t>(k * dim), 0.0f);
    model.intercepts.assign(static_cast<std::size_t>(k), 0.0f);
    model.class_weights.assign(cw.begin(), cw.end());
    model.regularization_c = regularization_c;
    model.balanced = balanced;
    model.converged = true;
    if (report) {
        report->converged = true;
        report->objective_trace.assign(static_cast<std::size_t>(k), {});
    }

    // Dual coordinate descent per class: maximize
    //   sum_i a_i - 0.5 * || sum_i a_i y_i x~_i ||^2,  0 <= a_i <= cap_i,
    // one exactly-minimized coordinate at a time, in fixed sample order.
    std::vector<double> w(static_cast<std::size_t>(dim) + 1);
    std::vector<double> alpha(static_cast<std::size_t>(n));
    for (std::int64_t c = 0; c < k; ++c) {
        std::fill(w.begin(), w.end(), 0.0);
        std::fill(alpha.begin(), alpha.end(), 0.0);
        double alpha_sum = 0.0;
        bool class_converged = false;
        for (int sweep = 0; sweep < kSvmMaxSweeps && !class_converged; ++sweep) {
            double max_pg = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const float* xi = x.row(i);
                const double yi = labels[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
                double dot = w[static_cast<std::size_t>(dim)];
                for (std::int64_t j = 0; j < dim; ++j)
                    dot += w[static_cast<std::size_t>(j)] * static_cast<double>(xi[j]);
                const double g = yi * dot - 1.0;
                const double a = alpha[static_cast<std::size_t>(i)];
                const double upper = cap[static_cast<std::size_t>(i)];
                double pg = g;
                if (a <= 0.0 && g > 0.0) pg = 0.0;
                if (a >= upper && g < 0.0) pg = 0.0;
                max_pg = std::max(max_pg, std::abs(pg));
                if (pg == 0.0) continue;
                const double a_new =
                    std::clamp(a - g / q[static_cast<std::size_t>(i)], 0.0, upper);
                const double delta = a_new - a;
                if (delta == 0.0) continue;
                alpha[static_cast<std::size_t>(i)] = a_new;
                alpha_sum += delta;
                const double step = delta * yi;
                for (std::int64_t j = 0; j < dim; ++j)
                    w[static_cast<std::size_t>(j)] += step * static_cast<double>(xi[j]);
                w[static_cast<std::size_t>(dim)] += step;
            }
            if (report) {
                double wsq = 0.0;
                for (double v : w) wsq += v * v;
                report->objective_trace[static_cast<std::size_t>(c)].push_back(
                    0.5 * wsq - alpha_sum);
            }
            class_converged = max_pg < kSvmStopTol;
        }
        if (!class_converged) model.converged = false;
        for (std::int64_t j = 0; j < dim; ++j)
            model.weights[static_cast<std::size_t>(c * dim + j)] =
                static_cast<float>(w[static_cast<std::size_t>(j)]);
        model.intercepts[static_cast<std::size_t>(c)] =
            static_cast<float>(w[static_cast<std::size_t>(dim)]);
    }
    if (report) report->converged = model.converged;
    return model;
}

SvmPrediction svm_predict(const LinearSvmModel& model, const float* feature,
                          std::int64_t dim) {
    if (dim != model.feature_dim)
        throw std::invalid_argument(
            "svm: feature length " + std::to_string(dim) +
            " does not match model dimension " + std::to_string(model.feature_dim));
    SvmPrediction p;
    p.scores.resize(static_cast<std::size_t>(model.n_classes));
    for (std::int64_t c = 0; c < model.n_classes; ++c)
        p.scores[static_cast<std::size_t>(c)] = model.score(feature, c);
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < model.n_classes; ++c)
        if (p.scores[static_cast<std::size_t>(c)] > p.scores[static_cast<std::size_t>(best)])
            best = c;
    p.label = static_cast<int>(best);
    return p;
}

SvmPrediction svm_predict(const LinearSvmModel& model,
                          const std::vector<float>& feature) {
    return svm_predict(model, feature.data(),
                       static_cast<std::int64_t>(feature.size()));
}

double svm_accuracy(const LinearSvmModel& model, const FeatureMatrix& x,
                    const std::vector<int>& labels) {
    if (static_cast<std::int64_t>(labels.size()) != x.rows || x.rows == 0)
        throw std::invalid_argument("svm: one label per feature row required");
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < x.rows; ++i)
        if (svm_predict(model, x.row(i), x.dim).label == labels[static_cast<std::size_t>(i)])
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(x.rows);
}

namespace {

FeatureMatrix select_rows(const FeatureMatrix& x, const std::vector<std::int64_t>& idx) {
    FeatureMatrix out;
    out.rows = static_cast<std::int64_t>(idx.size());
    out.dim = x.dim;
    out.layout = x.layout;
    out.values.reserve(static_cast<std::size_t>(out.rows * out.dim));
    for (std::int64_t i : idx)
        out.values.insert(out.values.end(), x.row(i), x.row(i) + x.dim);
    return out;
}

}  // namespace

std::vector<LimitedDataPoint> limited_data_experiment(
    const FeatureMatrix& train_x, const std::vector<int>& train_y,
    const FeatureMatrix& test_x, const std::vector<int>& test_y,
    const std::vector<std::int64_t>& samples_per_class,
    const std::vector<std::uint64_t>& seeds, double regularization_c,
    bool balanced) {
    if (static_cast<std::int64_t>(train_y.size()) != train_x.rows)
        throw std::invalid_argument("svm: one label per training row required");
    if (seeds.empty()) throw std::invalid_argument("svm: at least one seed required");
    const std::int64_t k = infer_classes(train_y);
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < train_x.rows; ++i)
        by_class[static_cast<std::size_t>(train_y[static_cast<std::size_t>(i)])].push_back(i);

    std::vector<LimitedDataPoint> curve;
    for (std::int64_t budget : samples_per_class) {
        if (budget < 1) throw std::invalid_argument("svm: budget must be positive");
        for (std::int64_t c = 0; c < k; ++c)
            if (budget > static_cast<std::int64_t>(by_class[static_cast<std::size_t>(c)].size()))
                throw std::invalid_argument(
                    "svm: budget " + std::to_string(budget) + " exceeds the " +
                    std::to_string(by_class[static_cast<std::size_t>(c)].size()) +
                    " samples of class " + std::to_string(c));
        LimitedDataPoint point;
        point.samples_per_class = budget;
        for (std::uint64_t seed : seeds) {
            RngStream rng(seed);
            std::vector<std::int64_t> chosen;
            for (std::int64_t c = 0; c < k; ++c) {
                std::vector<std::int64_t> idx = by_class[static_cast<std::size_t>(c)];
                shuffle_indices(idx, rng);
                chosen.insert(chosen.end(), idx.begin(),
                              idx.begin() + static_cast<std::ptrdiff_t>(budget));
            }
            // Ascending order keeps the full-budget draw identical to the
            // original training set, solver sweep order included.
            std::sort(chosen.begin(), chosen.end());
            std::vector<int> sub_y;
            sub_y.reserve(chosen.size());
            for (std::int64_t i : chosen) sub_y.push_back(train_y[static_cast<std::size_t>(i)]);
            LinearSvmModel model =
                svm_train(select_rows(train_x, chosen), sub_y, regularization_c, balanced);
            point.per_seed_accuracy.push_back(svm_accuracy(model, test_x, test_y));
        }
        double mean = 0.0;
        for (double a : point.per_seed_accuracy) mean += a;
        mean /= static_cast<double>(point.per_seed_accuracy.size());
        double var = 0.0;
        for (double a : point.per_seed_accuracy) var += (a - mean) * (a - mean);
        var /= static_cast<double>(point.per_seed_accuracy.size());
        point.mean_accuracy = mean;
        point.std_accuracy = std::sqrt(var);
        curve.push_back(std::move(point));
    }
    return curve;
}

}  // namespace voxgan
