#include "voxgan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "voxgan/artifacts.hpp"
#include "voxgan/ops.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

namespace {

// Pins a network to eval mode (running batch-norm statistics) for the
// duration of an analysis call, restoring the caller's flag afterwards.
template <typename Net>
class EvalMode {
public:
    explicit EvalMode(Net& net) : net_(net), prev_(net.training()) {
        net_.set_training(false);
    }
    ~EvalMode() { net_.set_training(prev_); }
    EvalMode(const EvalMode&) = delete;
    EvalMode& operator=(const EvalMode&) = delete;

private:
    Net& net_;
    bool prev_;
};

void require_latent(const std::vector<float>& z, std::int64_t dim, const char* what) {
    if (static_cast<std::int64_t>(z.size()) != dim)
        throw std::invalid_argument(std::string("analysis: ") + what + " has length " +
                                    std::to_string(z.size()) + ", expected " +
                                    std::to_string(dim));
}

VoxelGrid generate_one(Generator<float>& g, const std::vector<float>& z) {
    Tensor<float> zt = Tensor<float>::from_vector(
        {1, static_cast<std::int64_t>(z.size())}, std::vector<float>(z));
    return grid_from_batch(g.forward(zt), 0);
}

}  // namespace

SweepResult sweep_dimension(Generator<float>& g, const std::vector<float>& z0,
                            std::int64_t dim, const std::vector<float>& values,
                            PriorKind prior, float threshold) {
    const std::int64_t latent = g.profile().latent_dim;
    require_latent(z0, latent, "base latent");
    if (dim < 0 || dim >= latent)
        throw std::invalid_argument("analysis: dimension " + std::to_string(dim) +
                                    " out of range for latent size " + std::to_string(latent));
    if (values.empty())
        throw std::invalid_argument("analysis: sweep needs at least one value");
    if (prior == PriorKind::uniform01)
        for (float v : values)
            if (!(v >= 0.0f && v <= 1.0f))
                throw std::invalid_argument(
                    "analysis: swept value " + std::to_string(v) +
                    " lies outside the uniform prior's [0,1] support");

    SweepResult res;
    res.dimension = dim;
    res.values = values;
    EvalMode<Generator<float>> eval(g);
    NoGradGuard no_grad;
    for (float v : values) {
        std::vector<float> z = z0;
        z[static_cast<std::size_t>(dim)] = v;
        res.grids.push_back(generate_one(g, z));
    }

    // Mask: occupancy flips between the smallest and the largest swept value.
    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] < values[imin]) imin = i;
        if (values[i] > values[imax]) imax = i;
    }
    VoxelGrid lo = binarize(res.grids[imin], threshold);
    VoxelGrid hi = binarize(res.grids[imax], threshold);
    res.mask = VoxelGrid::empty(lo.resolution);
    for (std::size_t i = 0; i < res.mask.values.size(); ++i)
        res.mask.values[i] = lo.values[i] != hi.values[i] ? 1.0f : 0.0f;
    return res;
}

std::vector<VoxelGrid> interpolate(Generator<float>& g, const std::vector<float>& z1,
                                   const std::vector<float>& z2, std::int64_t steps) {
    const std::int64_t latent = g.profile().latent_dim;
    require_latent(z1, latent, "first latent");
    require_latent(z2, latent, "second latent");
    if (steps < 2) throw std::invalid_argument("analysis: interpolation needs >= 2 steps");

    EvalMode<Generator<float>> eval(g);
    NoGradGuard no_grad;
    std::vector<VoxelGrid> grids;
    grids.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t i = 0; i < steps; ++i) {
        std::vector<float> z;
        if (i == 0) {
            z = z1;  // endpoints verbatim: bitwise equal to direct generation
        } else if (i == steps - 1) {
            z = z2;
        } else {
            const float t = static_cast<float>(i) / static_cast<float>(steps - 1);
            z.resize(z1.size());
            for (std::size_t j = 0; j < z.size(); ++j)
                // Coordinates shared by both endpoints pass through unchanged;
                // the rounded products would not always sum back to the
                // original value.
                z[j] = z1[j] == z2[j] ? z1[j] : (1.0f - t) * z1[j] + t * z2[j];
        }
        grids.push_back(generate_one(g, z));
    }
    return grids;
}

std::vector<float> arithmetic_latent(const std::vector<float>& z_a,
                                     const std::vector<float>& z_b,
                                     const std::vector<float>& z_c, PriorKind prior) {
    if (z_a.size() != z_b.size() || z_a.size() != z_c.size())
        throw std::invalid_argument("analysis: arithmetic operands must share one length");
    std::vector<float> z(z_a.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
        double v = static_cast<double>(z_a[j]) - static_cast<double>(z_b[j]) +
                   static_cast<double>(z_c[j]);
        if (prior == PriorKind::uniform01) v = std::clamp(v, 0.0, 1.0);
        z[j] = static_cast<float>(v);
    }
    return z;
}

VoxelGrid shape_arithmetic(Generator<float>& g, const std::vector<float>& z_a,
                           const std::vector<float>& z_b,
                           const std::vector<float>& z_c, PriorKind prior) {
    const std::int64_t latent = g.profile().latent_dim;
    require_latent(z_a, latent, "operand a");
    std::vector<float> z = arithmetic_latent(z_a, z_b, z_c, prior);
    EvalMode<Generator<float>> eval(g);
    NoGradGuard no_grad;
    return generate_one(g, z);
}

std::vector<float> retrieval_feature(Discriminator<float>& d, const VoxelGrid& grid) {
    const ScaleProfile& p = d.profile();
    if (grid.resolution != p.resolution)
        throw std::invalid_argument(
            "analysis: grid resolution " + std::to_string(grid.resolution) +
            " does not match profile resolution " + std::to_string(p.resolution));
    EvalMode<Discriminator<float>> eval(d);
    NoGradGuard no_grad;
    auto out = d.forward(tensor_from_grid<float>(grid), /*capture=*/true);
    const Tensor<float>& act = out.activations[out.activations.size() - 2];
    Tensor<float> pooled = maxpool3d(act, 2);
    return std::vector<float>(pooled.data(), pooled.data() + pooled.numel());
}

std::vector<RetrievalHit> nn_retrieve(Discriminator<float>& d, const VoxelGrid& query,
                                      const std::vector<VoxelGrid>& corpus,
                                      std::int64_t k) {
    if (corpus.empty()) throw std::invalid_argument("analysis: retrieval corpus is empty");
    if (k < 1) throw std::invalid_argument("analysis: retrieval needs k >= 1");
    std::vector<float> qf = retrieval_feature(d, query);
    std::vector<RetrievalHit> hits;
    hits.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::vector<float> cf = retrieval_feature(d, corpus[i]);
        double sq = 0.0;
        for (std::size_t j = 0; j < cf.size(); ++j) {
            double diff = static_cast<double>(qf[j]) - static_cast<double>(cf[j]);
            sq += diff * diff;
        }
        hits.push_back({static_cast<std::int64_t>(i), std::sqrt(sq)});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.index < b.index;
    });
    if (k < static_cast<std::int64_t>(hits.size())) hits.resize(static_cast<std::size_t>(k));
    return hits;
}

namespace {

void require_neuron(const ScaleProfile& p, std::int64_t layer, std::int64_t channel) {
    const std::int64_t n = p.n_layers();
    if (layer < 1 || layer > n)
        throw std::invalid_argument("analysis: layer " + std::to_string(layer) +
                                    " out of range 1.." + std::to_string(n));
    const std::int64_t ch = p.disc_channels(layer);
    if (channel < 0 || channel >= ch)
        throw std::invalid_argument("analysis: channel " + std::to_string(channel) +
                                    " out of range for the " + std::to_string(ch) +
                                    "-channel layer " + std::to_string(layer));
}

}  // namespace

VoxelGrid guided_backprop(Discriminator<float>& d, const VoxelGrid& grid,
                          std::int64_t layer, std::int64_t channel, bool guided) {
    const ScaleProfile& p = d.profile();
    if (grid.resolution != p.resolution)
        throw std::invalid_argument(
            "analysis: grid resolution " + std::to_string(grid.resolution) +
            " does not match profile resolution " + std::to_string(p.resolution));
    require_neuron(p, layer, channel);

    // Track gradients through the input only; the weights stay untouched.
    const bool was_trainable = d.block(0).w.requires_grad();
    d.set_trainable(false);
    EvalMode<Discriminator<float>> eval(d);
    Tensor<float> x = tensor_from_grid<float>(grid);
    x.set_requires_grad(true);
    auto out = d.forward(x, /*capture=*/true);
    Tensor<float> response =
        sum(slice_channels(out.activations[static_cast<std::size_t>(layer - 1)],
                           channel, channel + 1));
    if (guided) {
        GuidedBackpropGuard guard;
        response.backward();
    } else {
        response.backward();
    }
    d.set_trainable(was_trainable);

    const std::vector<float>& gx = x.grad();
    VoxelGrid saliency = VoxelGrid::empty(grid.resolution);
    float peak = 0.0f;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        saliency.values[i] = std::abs(gx[i]);
        peak = std::max(peak, saliency.values[i]);
    }
    if (peak > 0.0f)
        for (float& v : saliency.values) v /= peak;
    return saliency;
}

std::vector<NeuronReport> top_activating_objects(Discriminator<float>& d,
                                                 const std::vector<VoxelGrid>& dataset,
                                                 std::int64_t layer, std::int64_t k) {
    if (dataset.empty()) throw std::invalid_argument("analysis: dataset is empty");
    if (k < 1) throw std::invalid_argument("analysis: need k >= 1");
    const ScaleProfile& p = d.profile();
    require_neuron(p, layer, 0);
    const std::int64_t channels = p.disc_channels(layer);

    // Spatial-max response of every channel for every object.
    std::vector<std::vector<float>> response(
        static_cast<std::size_t>(channels),
        std::vector<float>(dataset.size(), 0.0f));
    {
        EvalMode<Discriminator<float>> eval(d);
        NoGradGuard no_grad;
        for (std::size_t o = 0; o < dataset.size(); ++o) {
            auto out = d.forward(tensor_from_grid<float>(dataset[o]), /*capture=*/true);
            const Tensor<float>& act =
                out.activations[static_cast<std::size_t>(layer - 1)];
            const std::int64_t spatial = act.numel() / channels;
            for (std::int64_t c = 0; c < channels; ++c) {
                const float* row = act.data() + c * spatial;
                float best = row[0];
                for (std::int64_t s = 1; s < spatial; ++s) best = std::max(best, row[s]);
                response[static_cast<std::size_t>(c)][o] = best;
            }
        }
    }

    const std::int64_t take = std::min<std::int64_t>(k, static_cast<std::int64_t>(dataset.size()));
    std::vector<NeuronReport> reports;
    reports.reserve(static_cast<std::size_t>(channels));
    for (std::int64_t c = 0; c < channels; ++c) {
        NeuronReport rep;
        rep.layer = layer;
        rep.channel = c;
        std::vector<std::int64_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
        const std::vector<float>& score = response[static_cast<std::size_t>(c)];
        std::sort(order.begin(), order.end(), [&score](std::int64_t a, std::int64_t b) {
            if (score[static_cast<std::size_t>(a)] != score[static_cast<std::size_t>(b)])
                return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
            return a < b;
        });
        for (std::int64_t i = 0; i < take; ++i) {
            const std::int64_t obj = order[static_cast<std::size_t>(i)];
            rep.top.push_back({obj, score[static_cast<std::size_t>(obj)]});
            rep.saliency.push_back(
                guided_backprop(d, dataset[static_cast<std::size_t>(obj)], layer, c));
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

void save_scalar_overlay(const VoxelGrid& occupancy, const VoxelGrid& scalars,
                         float threshold, const std::string& base) {
    if (occupancy.resolution != scalars.resolution)
        throw std::invalid_argument("analysis: overlay grids must share one resolution");
    write_raw_f32(scalars.values, base + ".f32");
    write_text_file(export_obj(occupancy, threshold), base + ".obj");
    std::string csv = "x,y,z,value\n";
    const std::int64_t r = occupancy.resolution;
    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t y = 0; y < r; ++y)
            for (std::int64_t z = 0; z < r; ++z)
                if (occupancy.at(x, y, z) > threshold) {
                    csv += std::to_string(x) + "," + std::to_string(y) + "," +
                           std::to_string(z) + "," +
                           format_g9(static_cast<double>(scalars.at(x, y, z))) + "\n";
                }
    write_text_file(csv, base + ".csv");
}

}  // namespace voxgan
