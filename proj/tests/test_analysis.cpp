#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxgan/analysis.hpp"
#include "voxgan/artifacts.hpp"
#include "voxgan/models.hpp"
#include "voxgan/ops.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/synthetic.hpp"
#include "voxgan/tensor.hpp"
#include "voxgan/voxel.hpp"

using namespace voxgan;

namespace {

std::string temp_path(const std::string& leaf) {
    auto dir = std::filesystem::temp_directory_path() / "voxgan_analysis_tests";
    std::filesystem::create_directories(dir);
    return (dir / leaf).string();
}

std::vector<float> random_latent(std::int64_t n, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<float> z(static_cast<std::size_t>(n));
    for (float& v : z) v = static_cast<float>(rng.uniform01());
    return z;
}

VoxelGrid random_grid(std::int64_t r, std::uint64_t seed) {
    VoxelGrid g = VoxelGrid::empty(r);
    RngStream rng(seed);
    for (float& v : g.values) v = static_cast<float>(rng.uniform01());
    return g;
}

// Direct single-sample generation in eval mode, the reference the analysis
// helpers must reproduce bitwise.
VoxelGrid generate_direct(Generator<float>& g, const std::vector<float>& z) {
    bool was = g.training();
    g.set_training(false);
    NoGradGuard no_grad;
    Tensor<float> zt = Tensor<float>::from_vector(
        {1, static_cast<std::int64_t>(z.size())}, std::vector<float>(z));
    VoxelGrid out = grid_from_batch(g.forward(zt), 0);
    g.set_training(was);
    return out;
}

}  // namespace

TEST_CASE("interpolation endpoints reproduce direct generation bitwise") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(50);
    Generator<float> g(p, rng);
    std::vector<float> z1 = random_latent(p.latent_dim, 1);
    std::vector<float> z2 = random_latent(p.latent_dim, 2);

    auto grids = interpolate(g, z1, z2, 5);
    REQUIRE(grids.size() == 5);
    CHECK(grids.front().values == generate_direct(g, z1).values);
    CHECK(grids.back().values == generate_direct(g, z2).values);

    // Midpoint of a 3-step walk is exactly the average latent.
    auto three = interpolate(g, z1, z2, 3);
    std::vector<float> mid(z1.size());
    for (std::size_t j = 0; j < mid.size(); ++j) mid[j] = (z1[j] + z2[j]) / 2.0f;
    CHECK(three[1].values == generate_direct(g, mid).values);

    // Identical endpoints collapse the whole walk.
    auto flat = interpolate(g, z1, z1, 4);
    for (const VoxelGrid& grid : flat) CHECK(grid.values == flat.front().values);

    CHECK_THROWS_AS(interpolate(g, z1, z2, 1), std::invalid_argument);
    std::vector<float> short_z(3, 0.5f);
    CHECK_THROWS_AS(interpolate(g, short_z, z2, 2), std::invalid_argument);
}

TEST_CASE("dimension sweep masks exactly the voxels that flip between extremes") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(51);
    Generator<float> g(p, rng);
    std::vector<float> z0 = random_latent(p.latent_dim, 3);

    SweepResult res = sweep_dimension(g, z0, 7, {0.0f, 0.25f, 1.0f}, PriorKind::uniform01);
    REQUIRE(res.grids.size() == 3);
    CHECK(res.dimension == 7);
    CHECK(res.mask.resolution == p.resolution);

    // Brute-force oracle: binarized diff of the two extreme grids.
    VoxelGrid lo = binarize(res.grids.front(), 0.5f);
    VoxelGrid hi = binarize(res.grids.back(), 0.5f);
    for (std::size_t i = 0; i < res.mask.values.size(); ++i) {
        float expect = lo.values[i] != hi.values[i] ? 1.0f : 0.0f;
        CHECK(res.mask.values[i] == expect);
        CHECK((res.mask.values[i] == 0.0f || res.mask.values[i] == 1.0f));
    }

    // The swept grids really are generations of the modified latent.
    std::vector<float> z_mid = z0;
    z_mid[7] = 0.25f;
    CHECK(res.grids[1].values == generate_direct(g, z_mid).values);

    // Identical values leave nothing to flip.
    SweepResult same = sweep_dimension(g, z0, 7, {0.5f, 0.5f}, PriorKind::uniform01);
    for (float v : same.mask.values) CHECK(v == 0.0f);

    CHECK_THROWS_AS(sweep_dimension(g, z0, p.latent_dim, {0.5f}, PriorKind::uniform01),
                    std::invalid_argument);
    CHECK_THROWS_AS(sweep_dimension(g, z0, -1, {0.5f}, PriorKind::uniform01),
                    std::invalid_argument);
    CHECK_THROWS_AS(sweep_dimension(g, z0, 7, {1.5f}, PriorKind::uniform01),
                    std::invalid_argument);
    // The normal prior has unbounded support.
    CHECK_NOTHROW(sweep_dimension(g, z0, 7, {-3.0f, 3.0f}, PriorKind::standard_normal));
}

TEST_CASE("a dimension with zero fan-out sweeps to an empty mask") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(52);
    Generator<float> g(p, rng);
    const std::int64_t dim = 11;
    // First-block weights are [latent, channels, 4, 4, 4]; silencing the
    // slice for one input channel makes the output independent of it.
    Tensor<float>& w = g.block(0).w;
    const std::int64_t slice = w.numel() / p.latent_dim;
    std::fill(w.data() + dim * slice, w.data() + (dim + 1) * slice, 0.0f);

    std::vector<float> z0 = random_latent(p.latent_dim, 4);
    SweepResult res = sweep_dimension(g, z0, dim, {0.0f, 1.0f}, PriorKind::uniform01);
    CHECK(res.grids[0].values == res.grids[1].values);
    for (float v : res.mask.values) CHECK(v == 0.0f);
}

TEST_CASE("shape arithmetic cancels operands and clamps to the prior support") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(53);
    Generator<float> g(p, rng);
    std::vector<float> za = random_latent(p.latent_dim, 5);
    std::vector<float> zb = random_latent(p.latent_dim, 6);
    std::vector<float> zc = random_latent(p.latent_dim, 7);

    CHECK(shape_arithmetic(g, za, zb, zb, PriorKind::uniform01).values ==
          generate_direct(g, za).values);
    CHECK(shape_arithmetic(g, za, za, zc, PriorKind::uniform01).values ==
          generate_direct(g, zc).values);

    std::vector<float> high(static_cast<std::size_t>(p.latent_dim), 0.9f);
    std::vector<float> low(static_cast<std::size_t>(p.latent_dim), 0.1f);
    std::vector<float> z = arithmetic_latent(high, low, high, PriorKind::uniform01);
    for (float v : z) CHECK(v == 1.0f);  // 0.9 - 0.1 + 0.9 caps at the support edge
    z = arithmetic_latent(low, high, low, PriorKind::uniform01);
    for (float v : z) CHECK(v == 0.0f);
    z = arithmetic_latent(high, low, high, PriorKind::standard_normal);
    for (float v : z) CHECK(v == doctest::Approx(1.7).epsilon(1e-6));

    std::vector<float> short_z(3, 0.5f);
    CHECK_THROWS_AS(arithmetic_latent(za, zb, short_z, PriorKind::uniform01),
                    std::invalid_argument);
    CHECK_THROWS_AS(shape_arithmetic(g, short_z, short_z, short_z, PriorKind::uniform01),
                    std::invalid_argument);
}

TEST_CASE("retrieval ranks the corpus by embedding distance") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(54);
    Discriminator<float> d(p, rng);
    std::vector<VoxelGrid> corpus;
    for (std::uint64_t s = 0; s < 12; ++s) corpus.push_back(random_grid(p.resolution, 300 + s));

    CHECK(retrieval_feature(d, corpus[0]).size() == 256);  // 32 channels * 2^3

    // Exhaustive oracle: pairwise distances sorted by (distance, index).
    std::vector<float> qf = retrieval_feature(d, corpus[4]);
    std::vector<RetrievalHit> expect;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::vector<float> cf = retrieval_feature(d, corpus[i]);
        double sq = 0.0;
        for (std::size_t j = 0; j < cf.size(); ++j) {
            double diff = static_cast<double>(qf[j]) - static_cast<double>(cf[j]);
            sq += diff * diff;
        }
        expect.push_back({static_cast<std::int64_t>(i), std::sqrt(sq)});
    }
    std::sort(expect.begin(), expect.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });

    auto full = nn_retrieve(d, corpus[4], corpus, 100);  // k beyond corpus: full ranking
    REQUIRE(full.size() == corpus.size());
    CHECK(full[0].index == 4);  // itself first, at exactly zero
    CHECK(full[0].distance == 0.0);
    for (std::size_t i = 0; i < full.size(); ++i) {
        CHECK(full[i].index == expect[i].index);
        CHECK(full[i].distance == doctest::Approx(expect[i].distance).epsilon(1e-12));
    }

    auto top3 = nn_retrieve(d, corpus[4], corpus, 3);
    REQUIRE(top3.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(top3[i].index == full[i].index);

    // A duplicated zero-distance pair resolves by corpus index.
    std::vector<VoxelGrid> dup = corpus;
    dup[5] = dup[2];
    auto tied = nn_retrieve(d, dup[2], dup, 2);
    CHECK(tied[0].index == 2);
    CHECK(tied[1].index == 5);
    CHECK(tied[1].distance == 0.0);

    CHECK_THROWS_AS(nn_retrieve(d, corpus[0], {}, 3), std::invalid_argument);
    CHECK_THROWS_AS(nn_retrieve(d, corpus[0], corpus, 0), std::invalid_argument);
}

TEST_CASE("guided rule gates rectifier gradients at the op level") {
    // Plain sum upstream (= +1 everywhere): gradient lands only where the
    // input was positive.
    Tensor<float> x = Tensor<float>::from_vector({4}, {-1.0f, 2.0f, -3.0f, 4.0f});
    x.set_requires_grad(true);
    {
        GuidedBackpropGuard guard;
        sum(relu(x)).backward();
    }
    CHECK(x.grad() == std::vector<float>{0.0f, 1.0f, 0.0f, 1.0f});

    // Negative upstream blocks everything.
    Tensor<float> y = Tensor<float>::from_vector({4}, {-1.0f, 2.0f, -3.0f, 4.0f});
    y.set_requires_grad(true);
    {
        GuidedBackpropGuard guard;
        sum(mul_scalar(relu(y), -1.0f)).backward();
    }
    CHECK(y.grad() == std::vector<float>{0.0f, 0.0f, 0.0f, 0.0f});

    // Leaky rectifiers drop their negative-side slope during a guided pass.
    Tensor<float> u = Tensor<float>::from_vector({2}, {-2.0f, 3.0f});
    u.set_requires_grad(true);
    {
        GuidedBackpropGuard guard;
        sum(leaky_relu(u, 0.2f)).backward();
    }
    CHECK(u.grad() == std::vector<float>{0.0f, 1.0f});
    Tensor<float> v = Tensor<float>::from_vector({2}, {-2.0f, 3.0f});
    v.set_requires_grad(true);
    sum(leaky_relu(v, 0.2f)).backward();  // ordinary pass keeps the slope
    CHECK(v.grad() == std::vector<float>{0.2f, 1.0f});
}

TEST_CASE("saliency grids are max-normalized and respect the guided flag") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(55);
    Discriminator<float> d(p, rng);
    VoxelGrid grid = random_grid(p.resolution, 400);

    VoxelGrid sal = guided_backprop(d, grid, 2, 3);
    CHECK(sal.resolution == p.resolution);
    float peak = 0.0f;
    for (float v : sal.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        peak = std::max(peak, v);
    }
    CHECK(peak == 1.0f);  // normalization anchors the maximum

    // With the gating disabled, the result is the ordinary input gradient.
    VoxelGrid plain = guided_backprop(d, grid, 2, 3, /*guided=*/false);
    d.set_trainable(false);
    d.set_training(false);
    Tensor<float> x = tensor_from_grid<float>(grid);
    x.set_requires_grad(true);
    auto out = d.forward(x, true);
    sum(slice_channels(out.activations[1], 3, 4)).backward();
    d.set_trainable(true);
    std::vector<float> expect = x.grad();
    float emax = 0.0f;
    for (float gv : expect) emax = std::max(emax, std::abs(gv));
    REQUIRE(emax > 0.0f);
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(plain.values[i] == std::abs(expect[i]) / emax);

    // The guarded pass must prune at least as much as the plain one.
    double guided_mass = 0.0, plain_mass = 0.0;
    for (float gv : sal.values) guided_mass += gv > 0.0f ? 1.0 : 0.0;
    for (float pv : plain.values) plain_mass += pv > 0.0f ? 1.0 : 0.0;
    CHECK(guided_mass <= plain_mass);

    CHECK_THROWS_AS(guided_backprop(d, grid, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(guided_backprop(d, grid, 9, 0), std::invalid_argument);
    CHECK_THROWS_AS(guided_backprop(d, grid, 2, 32), std::invalid_argument);
    VoxelGrid wrong = VoxelGrid::empty(p.resolution * 2);
    CHECK_THROWS_AS(guided_backprop(d, wrong, 2, 0), std::invalid_argument);
}

TEST_CASE("top activating objects are ranked by brute-force spatial maxima") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(56);
    Discriminator<float> d(p, rng);
    SyntheticSpec spec = SyntheticSpec::defaults(p.resolution, 123);
    SyntheticDataset ds = make_synthetic_dataset(spec, 3, p.resolution);
    std::vector<VoxelGrid> dataset;
    for (const SyntheticItem& it : ds.items) dataset.push_back(it.grid);

    auto reports = top_activating_objects(d, dataset, 2, 2);
    REQUIRE(reports.size() == 32);  // one per channel of the requested layer

    // Independent recompute of every object/channel response.
    d.set_training(false);
    std::vector<std::vector<float>> oracle(dataset.size());
    {
        NoGradGuard no_grad;
        for (std::size_t o = 0; o < dataset.size(); ++o) {
            auto out = d.forward(tensor_from_grid<float>(dataset[o]), true);
            const Tensor<float>& act = out.activations[1];
            const std::int64_t spatial = act.numel() / 32;
            for (std::int64_t c = 0; c < 32; ++c) {
                float best = act.data()[c * spatial];
                for (std::int64_t s = 1; s < spatial; ++s)
                    best = std::max(best, act.data()[c * spatial + s]);
                oracle[o].push_back(best);
            }
        }
    }

    for (const NeuronReport& rep : reports) {
        REQUIRE(rep.top.size() == 2);
        REQUIRE(rep.saliency.size() == 2);
        CHECK(rep.layer == 2);
        for (std::size_t i = 0; i < rep.top.size(); ++i) {
            const NeuronActivation& hit = rep.top[i];
            CHECK(hit.activation ==
                  oracle[static_cast<std::size_t>(hit.object)][static_cast<std::size_t>(rep.channel)]);
            if (i > 0) {
                bool ordered = rep.top[i - 1].activation > hit.activation ||
                               (rep.top[i - 1].activation == hit.activation &&
                                rep.top[i - 1].object < hit.object);
                CHECK(ordered);
            }
            CHECK(rep.saliency[i].resolution == p.resolution);
        }
        // The leader beats every object outside the report.
        float floor = rep.top.back().activation;
        for (std::size_t o = 0; o < dataset.size(); ++o) {
            bool listed = false;
            for (const NeuronActivation& hit : rep.top)
                if (hit.object == static_cast<std::int64_t>(o)) listed = true;
            if (!listed)
                CHECK(oracle[o][static_cast<std::size_t>(rep.channel)] <= floor);
        }
    }

    // k = 1 on two objects picks the argmax.
    std::vector<VoxelGrid> two = {dataset[0], dataset[1]};
    auto single = top_activating_objects(d, two, 2, 1);
    for (const NeuronReport& rep : single) {
        REQUIRE(rep.top.size() == 1);
        std::size_t c = static_cast<std::size_t>(rep.channel);
        std::int64_t argmax = oracle[0][c] >= oracle[1][c] ? 0 : 1;
        CHECK(rep.top[0].object == argmax);
    }

    // Duplicated objects tie and resolve by index.
    std::vector<VoxelGrid> dup = {dataset[0], dataset[1], dataset[0]};
    auto tied = top_activating_objects(d, dup, 2, 3);
    for (const NeuronReport& rep : tied) {
        std::size_t first = 0, second = 0;
        for (std::size_t i = 0; i < rep.top.size(); ++i) {
            if (rep.top[i].object == 0) first = i;
            if (rep.top[i].object == 2) second = i;
        }
        CHECK(first < second);  // equal scores keep dataset order
        CHECK(rep.top[first].activation == rep.top[second].activation);
    }

    CHECK_THROWS_AS(top_activating_objects(d, {}, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(top_activating_objects(d, dataset, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(top_activating_objects(d, dataset, 7, 1), std::invalid_argument);
}

TEST_CASE("scalar overlays write the raw grid, mesh, and csv sidecar") {
    VoxelGrid occ = VoxelGrid::empty(4);
    occ.at(1, 2, 3) = 1.0f;
    occ.at(0, 0, 0) = 1.0f;
    VoxelGrid sal = VoxelGrid::empty(4);
    sal.at(1, 2, 3) = 0.25f;
    sal.at(0, 0, 0) = 1.0f;
    sal.at(2, 2, 2) = 0.5f;  // scalar present on an unoccupied voxel: raw only

    std::string base = temp_path("overlay");
    save_scalar_overlay(occ, sal, 0.5f, base);

    CHECK(read_raw_f32(base + ".f32") == sal.values);
    CHECK(read_text_file(base + ".obj") == export_obj(occ, 0.5f));
    CHECK(read_text_file(base + ".csv") == "x,y,z,value\n0,0,0,1\n1,2,3,0.25\n");

    VoxelGrid mismatched = VoxelGrid::empty(8);
    CHECK_THROWS_AS(save_scalar_overlay(occ, mismatched, 0.5f, base), std::invalid_argument);
}
