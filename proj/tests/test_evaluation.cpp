#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "voxgan/evaluation.hpp"
#include "voxgan/models.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/synthetic.hpp"
#include "voxgan/training.hpp"
#include "voxgan/voxel.hpp"

using namespace voxgan;

namespace {

// Exhaustive reference: walk distinct scores from high to low, recounting
// hits and coverage from scratch at every threshold.
double ap_oracle(const std::vector<float>& pred, const std::vector<float>& truth) {
    std::int64_t positives = 0;
    for (float t : truth)
        if (t == 1.0f) ++positives;
    std::set<float, std::greater<float>> thresholds(pred.begin(), pred.end());
    double ap = 0.0, prev_recall = 0.0;
    for (float tau : thresholds) {
        std::int64_t hits = 0, seen = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] >= tau) {
                ++seen;
                if (truth[i] == 1.0f) ++hits;
            }
        }
        double recall = static_cast<double>(hits) / static_cast<double>(positives);
        double precision = static_cast<double>(hits) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// A lump of voxels kept `margin` away from every face, scattered enough to
// have no mirror or permutation symmetry.
VoxelGrid random_interior(std::int64_t r, std::int64_t margin, std::int64_t count,
                          std::uint64_t seed) {
    VoxelGrid g = VoxelGrid::empty(r);
    RngStream rng(seed);
    for (std::int64_t i = 0; i < count; ++i)
        g.at(rng.uniform_int(margin, r - 1 - margin),
             rng.uniform_int(margin, r - 1 - margin),
             rng.uniform_int(margin, r - 1 - margin)) = 1.0f;
    return g;
}

}  // namespace

TEST_CASE("alignment transforms move, mirror, and permute voxels exactly") {
    VoxelGrid g = VoxelGrid::empty(20);
    g.at(3, 4, 5) = 1.0f;

    AlignmentTransform shift;
    shift.shift = {1, 0, -2};
    VoxelGrid s = apply_alignment(g, shift);
    CHECK(occupied_count(s, 0.5f) == 1);
    CHECK(s.at(4, 4, 3) == 1.0f);

    AlignmentTransform mirror;
    mirror.flip = {true, false, false};
    VoxelGrid m = apply_alignment(g, mirror);
    CHECK(occupied_count(m, 0.5f) == 1);
    CHECK(m.at(16, 4, 5) == 1.0f);

    AlignmentTransform rot;
    rot.perm = {1, 2, 0};  // output (x,y,z) reads source (y,z,x)
    VoxelGrid p = apply_alignment(g, rot);
    CHECK(occupied_count(p, 0.5f) == 1);
    CHECK(p.at(5, 3, 4) == 1.0f);

    // Shifting past the face drops the voxel and leaves the vacated side empty.
    VoxelGrid edge = VoxelGrid::empty(20);
    edge.at(19, 0, 0) = 1.0f;
    AlignmentTransform off;
    off.shift = {1, 0, 0};
    CHECK(occupied_count(apply_alignment(edge, off), 0.5f) == 0);

    AlignmentTransform id;
    CHECK(id.identity());
    CHECK(apply_alignment(g, id).values == g.values);
}

TEST_CASE("alignment composes as permute, then flip, then translate") {
    VoxelGrid g = random_interior(12, 0, 60, 60);
    AlignmentTransform t;
    t.perm = {2, 0, 1};
    t.flip = {false, true, true};
    t.shift = {1, -1, 0};

    // Staged oracle, one stage at a time.
    const std::int64_t r = g.resolution;
    VoxelGrid permuted = VoxelGrid::empty(r);
    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t y = 0; y < r; ++y)
            for (std::int64_t z = 0; z < r; ++z) {
                std::int64_t c[3] = {x, y, z};
                permuted.at(x, y, z) = g.at(c[t.perm[0]], c[t.perm[1]], c[t.perm[2]]);
            }
    VoxelGrid flipped = VoxelGrid::empty(r);
    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t y = 0; y < r; ++y)
            for (std::int64_t z = 0; z < r; ++z)
                flipped.at(x, y, z) = permuted.at(t.flip[0] ? r - 1 - x : x,
                                                  t.flip[1] ? r - 1 - y : y,
                                                  t.flip[2] ? r - 1 - z : z);
    VoxelGrid moved = VoxelGrid::empty(r);
    for (std::int64_t x = 0; x < r; ++x)
        for (std::int64_t y = 0; y < r; ++y)
            for (std::int64_t z = 0; z < r; ++z) {
                std::int64_t sx = x - t.shift[0], sy = y - t.shift[1], sz = z - t.shift[2];
                if (sx < 0 || sx >= r || sy < 0 || sy >= r || sz < 0 || sz >= r) continue;
                moved.at(x, y, z) = flipped.at(sx, sy, sz);
            }

    CHECK(apply_alignment(g, t).values == moved.values);
}

TEST_CASE("average precision matches hand-worked rankings") {
    // Perfect separation.
    CHECK(average_precision({1.0f, 0.0f, 1.0f, 0.0f}, {1.0f, 0.0f, 1.0f, 0.0f}) == 1.0);

    // One constant group: AP equals the positive fraction.
    std::vector<float> flat(10, 0.7f);
    std::vector<float> truth(10, 0.0f);
    truth[2] = truth[5] = truth[9] = 1.0f;
    CHECK(average_precision(flat, truth) == 0.3);

    // Distinct scores, positives at ranks 1 and 3:
    // 0.5*1 + 0*(1/2) + 0.5*(2/3) = 5/6.
    CHECK(average_precision({0.9f, 0.8f, 0.7f, 0.6f}, {1.0f, 0.0f, 1.0f, 0.0f}) ==
          0.5 + 0.5 * (2.0 / 3.0));

    // A tie straddling both positives enters as one group of three.
    CHECK(average_precision({0.9f, 0.5f, 0.5f, 0.1f}, {0.0f, 1.0f, 1.0f, 0.0f}) ==
          2.0 / 3.0);

    CHECK_THROWS_AS(average_precision({0.5f, 0.5f}, {0.0f, 0.0f}), std::invalid_argument);
    CHECK_THROWS_AS(average_precision({0.5f}, {0.25f}), std::invalid_argument);
    CHECK_THROWS_AS(average_precision({0.5f}, {1.0f, 1.0f}), std::invalid_argument);
}

TEST_CASE("average precision is invariant under strictly monotone rescoring") {
    RngStream rng(70);
    std::vector<float> pred(300), truth(300, 0.0f);
    for (float& v : pred) v = static_cast<float>(rng.uniform01());
    for (std::size_t i = 0; i < truth.size(); i += 3) truth[i] = 1.0f;

    double base = average_precision(pred, truth);
    std::vector<float> halved(pred);
    for (float& v : halved) v *= 0.5f;  // exact, order-preserving
    CHECK(average_precision(halved, truth) == base);

    std::vector<float> rooted(pred);
    for (float& v : rooted) v = std::sqrt(v);
    CHECK(average_precision(rooted, truth) == base);
}

TEST_CASE("average precision agrees exactly with the exhaustive oracle") {
    RngStream rng(71);
    for (int instance = 0; instance < 50; ++instance) {
        std::vector<float> pred(216), truth(216, 0.0f);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            float u = static_cast<float>(rng.uniform01());
            // Half the voxels get coarse scores so tied groups actually occur.
            pred[i] = i % 2 == 0 ? std::round(u * 10.0f) / 10.0f : u;
            if (rng.uniform01() < 0.3) truth[i] = 1.0f;
        }
        truth[static_cast<std::size_t>(rng.uniform_int(0, 215))] = 1.0f;
        CHECK(average_precision(pred, truth) == ap_oracle(pred, truth));
    }
}

TEST_CASE("aligned search recovers every in-budget displacement exactly") {
    CHECK(translation_budget(20) == 2);
    CHECK(translation_budget(16) == 1);

    VoxelGrid truth = random_interior(20, 5, 30, 72);
    REQUIRE(occupied_count(truth, 0.5f) > 0);

    SUBCASE("identical grids align at the identity") {
        AlignedAp res = best_aligned_ap(truth, truth);
        CHECK(res.ap == 1.0);
        CHECK(res.transform.identity());
    }

    SUBCASE("in-budget shifts are undone") {
        AlignmentTransform t;
        t.shift = {2, 0, -1};
        VoxelGrid pred = apply_alignment(truth, t);
        AlignedAp res = best_aligned_ap(pred, truth);
        CHECK(res.ap == 1.0);
        CHECK(apply_alignment(pred, res.transform).values == truth.values);
    }

    SUBCASE("in-budget flips and permutations are undone") {
        AlignmentTransform t;
        t.perm = {1, 2, 0};
        t.flip = {true, false, true};
        t.shift = {-1, 2, 0};
        VoxelGrid pred = apply_alignment(truth, t);
        AlignedAp res = best_aligned_ap(pred, truth);
        CHECK(res.ap == 1.0);
        CHECK(apply_alignment(pred, res.transform).values == truth.values);
    }

    SUBCASE("out-of-budget shifts stay imperfect") {
        AlignmentTransform t;
        t.shift = {3, 0, 0};
        VoxelGrid pred = apply_alignment(truth, t);
        AlignedAp res = best_aligned_ap(pred, truth);
        CHECK(res.ap < 1.0);
    }

    SUBCASE("transforming the truth never scores below the raw ranking") {
        VoxelGrid pred = random_interior(20, 5, 25, 73);
        AlignmentTransform t;
        t.perm = {2, 1, 0};
        t.flip = {false, true, false};
        t.shift = {1, -2, 2};
        double raw = average_precision(pred.values, truth.values);
        CHECK(best_aligned_ap(pred, apply_alignment(truth, t)).ap >= raw);
    }

    VoxelGrid small = VoxelGrid::empty(10);
    CHECK_THROWS_AS(best_aligned_ap(small, truth), std::invalid_argument);
}

TEST_CASE("prediction scoring averages per class, then across classes") {
    VoxelGrid shape_a = random_interior(20, 4, 40, 74);
    VoxelGrid shape_b = random_interior(20, 4, 35, 75);

    // Constant half-confidence over a centered 16-cube, with all positives in
    // the 12-cube core: every in-budget alignment leaves the positives inside
    // the scored box, so the search cannot improve on hits / box volume.
    VoxelGrid blob = VoxelGrid::empty(20);
    for (std::int64_t x = 2; x < 18; ++x)
        for (std::int64_t y = 2; y < 18; ++y)
            for (std::int64_t z = 2; z < 18; ++z) blob.at(x, y, z) = 0.5f;
    VoxelGrid truth_c = VoxelGrid::empty(20);
    std::int64_t placed = 0;
    for (std::int64_t x = 4; x < 16 && placed < 512; ++x)
        for (std::int64_t y = 4; y < 16 && placed < 512; ++y)
            for (std::int64_t z = 4; z < 16 && placed < 512; ++z, ++placed)
                truth_c.at(x, y, z) = 1.0f;

    ApResult res = evaluate_predictions({shape_a, shape_b, blob},
                                        {shape_a, shape_b, truth_c}, {0, 0, 1},
                                        {"boxy", "flat"});
    REQUIRE(res.class_ap.size() == 2);
    CHECK(res.class_ap[0] == 1.0);             // both instances perfect
    CHECK(res.class_ap[1] == 512.0 / 4096.0);  // all hits in one constant group
    CHECK(res.mean_ap == (1.0 + 0.125) / 2.0);
    REQUIRE(res.instance_ap.size() == 3);
    CHECK(res.instance_alignment[0].identity());

    CHECK(ap_table_csv(res) == "class,ap\nboxy,1\nflat,0.125\nmean,0.5625\n");
    std::string log = ap_instances_csv(res);
    CHECK(log.substr(0, log.find('\n')) == "instance,label,class,ap,perm,flips,dx,dy,dz");
    CHECK(log.find("0,0,boxy,1,012,000,0,0,0\n") != std::string::npos);
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);

    // Inputs at other resolutions are brought to the canonical cube first; a
    // perfect pair stays perfect through the shared resampling.
    VoxelGrid small = random_interior(10, 2, 12, 76);
    ApResult up = evaluate_predictions({small}, {small}, {0}, {"only"});
    CHECK(up.class_ap[0] == 1.0);
    CHECK(up.mean_ap == up.class_ap[0]);  // single class: mean is the class AP

    CHECK_THROWS_AS(evaluate_predictions({shape_a}, {shape_a}, {0}, {"a", "ghost"}),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate_predictions({shape_a}, {shape_a}, {2}, {"a", "b"}),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate_predictions({}, {}, {}, {"a"}), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_predictions({shape_a}, {shape_a, shape_b}, {0}, {"a"}),
                    std::invalid_argument);
}

TEST_CASE("encoder-mean reconstruction produces a deterministic class table") {
    ScaleProfile p = ScaleProfile::tiny();
    RngStream rng(77);
    Generator<float> g(p, rng);
    ImageEncoder<float> e(p, rng);
    SyntheticSpec spec = SyntheticSpec::defaults(p.resolution, 500);
    SyntheticDataset ds = make_synthetic_dataset(spec, 5, p.resolution);

    ApResult res = evaluate_reconstruction(e, g, ds);
    REQUIRE(res.class_names.size() == 5);  // one instance of each class
    CHECK(res.instance_ap.size() == 5);
    double sum = 0.0;
    for (double ap : res.class_ap) {
        CHECK(ap >= 0.0);
        CHECK(ap <= 1.0);
        sum += ap;
    }
    CHECK(res.mean_ap == sum / 5.0);

    ApResult again = evaluate_reconstruction(e, g, ds);
    CHECK(again.instance_ap == res.instance_ap);
    CHECK(again.mean_ap == res.mean_ap);
}

TEST_CASE("the harness scores two differently trained models on one footing") {
    ScaleProfile p = ScaleProfile::tiny();
    SyntheticSpec spec = SyntheticSpec::defaults(p.resolution, 600);
    spec.kind = "chair";
    SyntheticDataset train = make_synthetic_dataset(spec, 8, p.resolution);
    SyntheticSpec held_spec = spec;
    held_spec.seed = 601;
    SyntheticDataset held = make_synthetic_dataset(held_spec, 2, p.resolution);

    VaeGanTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.lr_d = 1e-4;

    cfg.seed = 11;
    TrainResult first = train_vaegan(train, p, cfg);
    cfg.seed = 22;
    TrainResult second = train_vaegan(train, p, cfg);

    ApResult row1 = evaluate_reconstruction(*first.state.e, first.state.g, held);
    ApResult row2 = evaluate_reconstruction(*second.state.e, second.state.g, held);
    REQUIRE(row1.class_names == std::vector<std::string>{"chair"});
    REQUIRE(row2.class_names == row1.class_names);
    CHECK(row1.mean_ap == row1.class_ap[0]);
    for (const ApResult* r : {&row1, &row2}) {
        CHECK(r->mean_ap >= 0.0);
        CHECK(r->mean_ap <= 1.0);
        CHECK(std::isfinite(r->mean_ap));
    }
}
