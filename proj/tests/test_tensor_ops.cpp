#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxgan/ops.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/tensor.hpp"

using voxgan::RngStream;
using voxgan::Shape;
using voxgan::Tensor;

namespace {

Tensor<double> random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(voxgan::shape_numel(shape)));
    for (double& x : v) x = rng.normal() * scale;
    return Tensor<double>::from_vector(std::move(shape), std::move(v));
}

// Direct per-output-cell convolution sum with explicit zero padding; written
// against the textbook definition, independent of the production kernels.
std::vector<double> conv3d_oracle(const std::vector<double>& x, std::int64_t b, std::int64_t ci,
                                  std::int64_t d, std::int64_t h, std::int64_t w,
                                  const std::vector<double>& wt, std::int64_t co, std::int64_t k,
                                  std::int64_t s, std::int64_t p) {
    std::int64_t od = (d + 2 * p - k) / s + 1;
    std::int64_t oh = (h + 2 * p - k) / s + 1;
    std::int64_t ow = (w + 2 * p - k) / s + 1;
    std::vector<double> y(static_cast<std::size_t>(b * co * od * oh * ow), 0.0);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t o = 0; o < co; ++o)
            for (std::int64_t zd = 0; zd < od; ++zd)
                for (std::int64_t zh = 0; zh < oh; ++zh)
                    for (std::int64_t zw = 0; zw < ow; ++zw) {
                        double acc = 0.0;
                        for (std::int64_t c = 0; c < ci; ++c)
                            for (std::int64_t kd = 0; kd < k; ++kd)
                                for (std::int64_t kh = 0; kh < k; ++kh)
                                    for (std::int64_t kw = 0; kw < k; ++kw) {
                                        std::int64_t id = zd * s - p + kd;
                                        std::int64_t ih = zh * s - p + kh;
                                        std::int64_t iw = zw * s - p + kw;
                                        if (id < 0 || id >= d || ih < 0 || ih >= h || iw < 0 ||
                                            iw >= w)
                                            continue;
                                        acc += x[((bi * ci + c) * d + id) * h * w + ih * w + iw] *
                                               wt[(((o * ci + c) * k + kd) * k + kh) * k + kw];
                                    }
                        y[((bi * co + o) * od + zd) * oh * ow + zh * ow + zw] = acc;
                    }
    return y;
}

// Transposed convolution by its defining relation: output cell (co, o...)
// collects x[ci, t] * w[ci, co, kappa] over every (t, kappa) with
// t*s - p + kappa == o.
std::vector<double> conv3d_transpose_oracle(const std::vector<double>& x, std::int64_t b,
                                            std::int64_t ci, std::int64_t d, std::int64_t h,
                                            std::int64_t w, const std::vector<double>& wt,
                                            std::int64_t co, std::int64_t k, std::int64_t s,
                                            std::int64_t p) {
    std::int64_t od = (d - 1) * s + k - 2 * p;
    std::int64_t oh = (h - 1) * s + k - 2 * p;
    std::int64_t ow = (w - 1) * s + k - 2 * p;
    std::vector<double> y(static_cast<std::size_t>(b * co * od * oh * ow), 0.0);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t o = 0; o < co; ++o)
            for (std::int64_t zd = 0; zd < od; ++zd)
                for (std::int64_t zh = 0; zh < oh; ++zh)
                    for (std::int64_t zw = 0; zw < ow; ++zw) {
                        double acc = 0.0;
                        for (std::int64_t c = 0; c < ci; ++c)
                            for (std::int64_t td = 0; td < d; ++td)
                                for (std::int64_t th = 0; th < h; ++th)
                                    for (std::int64_t tw = 0; tw < w; ++tw) {
                                        std::int64_t kd = zd + p - td * s;
                                        std::int64_t kh = zh + p - th * s;
                                        std::int64_t kw = zw + p - tw * s;
                                        if (kd < 0 || kd >= k || kh < 0 || kh >= k || kw < 0 ||
                                            kw >= k)
                                            continue;
                                        acc += x[((bi * ci + c) * d + td) * h * w + th * w + tw] *
                                               wt[(((c * co + o) * k + kd) * k + kh) * k + kw];
                                    }
                        y[((bi * co + o) * od + zd) * oh * ow + zh * ow + zw] = acc;
                    }
    return y;
}

std::vector<double> conv2d_oracle(const std::vector<double>& x, std::int64_t b, std::int64_t ci,
                                  std::int64_t h, std::int64_t w, const std::vector<double>& wt,
                                  std::int64_t co, std::int64_t k, std::int64_t s, std::int64_t p) {
    std::int64_t oh = (h + 2 * p - k) / s + 1;
    std::int64_t ow = (w + 2 * p - k) / s + 1;
    std::vector<double> y(static_cast<std::size_t>(b * co * oh * ow), 0.0);
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t o = 0; o < co; ++o)
            for (std::int64_t zh = 0; zh < oh; ++zh)
                for (std::int64_t zw = 0; zw < ow; ++zw) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < ci; ++c)
                        for (std::int64_t kh = 0; kh < k; ++kh)
                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                std::int64_t ih = zh * s - p + kh;
                                std::int64_t iw = zw * s - p + kw;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                                acc += x[(bi * ci + c) * h * w + ih * w + iw] *
                                       wt[((o * ci + c) * k + kh) * k + kw];
                            }
                    y[(bi * co + o) * oh * ow + zh * ow + zw] = acc;
                }
    return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

TEST_CASE("elementwise and scalar ops compute expected values") {
    auto a = Tensor<double>::from_vector({4}, {1.0, -2.0, 3.0, 0.5});
    auto b = Tensor<double>::from_vector({4}, {2.0, 0.5, -1.0, 4.0});
    auto sum_ab = voxgan::add(a, b);
    CHECK(sum_ab.values() == std::vector<double>{3.0, -1.5, 2.0, 4.5});
    auto diff = voxgan::sub(a, b);
    CHECK(diff.values() == std::vector<double>{-1.0, -2.5, 4.0, -3.5});
    auto prod = voxgan::mul(a, b);
    CHECK(prod.values() == std::vector<double>{2.0, -1.0, -3.0, 2.0});
    CHECK(voxgan::add_scalar(a, 1.0).values() == std::vector<double>{2.0, -1.0, 4.0, 1.5});
    CHECK(voxgan::mul_scalar(a, -2.0).values() == std::vector<double>{-2.0, 4.0, -6.0, -1.0});
    CHECK(voxgan::sum(a).item() == doctest::Approx(2.5));
    CHECK(voxgan::mean(a).item() == doctest::Approx(0.625));

    auto clamped = voxgan::clamp(a, -1.0, 1.0);
    CHECK(clamped.values() == std::vector<double>{1.0, -1.0, 1.0, 0.5});

    CHECK_THROWS_AS((void)voxgan::add(a, Tensor<double>::zeros({3})), std::invalid_argument);
}

TEST_CASE("activations match their definitions") {
    auto x = Tensor<double>::from_vector({5}, {-3.0, -1.0, 0.0, 0.5, 2.0});
    auto r = voxgan::relu(x);
    CHECK(r.values() == std::vector<double>{0.0, 0.0, 0.0, 0.5, 2.0});
    auto lr = voxgan::leaky_relu(x, 0.2);
    CHECK(lr.values()[0] == doctest::Approx(-0.6));
    CHECK(lr.values()[1] == doctest::Approx(-0.2));
    CHECK(lr.values()[4] == doctest::Approx(2.0));
    auto s = voxgan::sigmoid(Tensor<double>::from_vector({3}, {0.0, 100.0, -100.0}));
    CHECK(s.values()[0] == doctest::Approx(0.5));
    CHECK(s.values()[1] == doctest::Approx(1.0));
    CHECK(s.values()[2] == doctest::Approx(0.0));
    for (double v : s.values()) CHECK(std::isfinite(v));
}

TEST_CASE("conv3d matches the all-ones hand example") {
    // 4^3 ones, kernel 4^3 ones, stride 2, pad 1 -> 2^3 output; every output
    // cell covers a 3x3x3 block of real input, value 27.
    auto x = Tensor<double>::full({1, 1, 4, 4, 4}, 1.0);
    auto w = Tensor<double>::full({1, 1, 4, 4, 4}, 1.0);
    auto y = voxgan::conv3d(x, w, Tensor<double>(), 2, 1);
    CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
    for (double v : y.values()) CHECK(v == doctest::Approx(27.0));

    auto zeros = Tensor<double>::zeros({1, 1, 4, 4, 4});
    auto yz = voxgan::conv3d(zeros, w, Tensor<double>(), 2, 1);
    for (double v : yz.values()) CHECK(v == 0.0);
}

TEST_CASE("conv3d agrees with the nested-loop oracle on random configurations") {
    RngStream rng(101);
    for (int iter = 0; iter < 12; ++iter) {
        std::int64_t b = rng.uniform_int(1, 2);
        std::int64_t ci = rng.uniform_int(1, 3);
        std::int64_t co = rng.uniform_int(1, 3);
        std::int64_t k = rng.uniform_int(1, 4);
        std::int64_t s = rng.uniform_int(1, 3);
        std::int64_t p = rng.uniform_int(0, 2);
        std::int64_t d = rng.uniform_int(std::max<std::int64_t>(1, k - 2 * p), 6);
        if (d + 2 * p < k) d = k;
        auto x = random_tensor({b, ci, d, d, d}, rng);
        auto w = random_tensor({co, ci, k, k, k}, rng);
        auto y = voxgan::conv3d(x, w, Tensor<double>(), s, p);
        auto expect = conv3d_oracle(x.values(), b, ci, d, d, d, w.values(), co, k, s, p);
        REQUIRE(y.values().size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(y.values()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv3d bias adds per output channel") {
    RngStream rng(7);
    auto x = random_tensor({2, 2, 5, 5, 5}, rng);
    auto w = random_tensor({3, 2, 3, 3, 3}, rng);
    auto bias = Tensor<double>::from_vector({3}, {0.5, -1.0, 2.0});
    auto y0 = voxgan::conv3d(x, w, Tensor<double>(), 2, 1);
    auto y1 = voxgan::conv3d(x, w, bias, 2, 1);
    std::int64_t spatial = y0.shape()[2] * y0.shape()[3] * y0.shape()[4];
    for (std::int64_t bi = 0; bi < 2; ++bi)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t i = 0; i < spatial; ++i) {
                std::int64_t idx = (bi * 3 + c) * spatial + i;
                CHECK(y1.values()[idx] ==
                      doctest::Approx(y0.values()[idx] + bias.values()[c]));
            }
}

TEST_CASE("conv3d_transpose matches the defining-relation oracle") {
    RngStream rng(202);
    for (int iter = 0; iter < 12; ++iter) {
        std::int64_t b = rng.uniform_int(1, 2);
        std::int64_t ci = rng.uniform_int(1, 3);
        std::int64_t co = rng.uniform_int(1, 3);
        std::int64_t k = rng.uniform_int(1, 4);
        std::int64_t s = rng.uniform_int(1, 3);
        std::int64_t p = rng.uniform_int(0, (k - 1) / 2);
        std::int64_t d = rng.uniform_int(2, 5);
        auto x = random_tensor({b, ci, d, d, d}, rng);
        auto w = random_tensor({ci, co, k, k, k}, rng);
        auto y = voxgan::conv3d_transpose(x, w, Tensor<double>(), s, p);
        auto expect = conv3d_transpose_oracle(x.values(), b, ci, d, d, d, w.values(), co, k, s, p);
        REQUIRE(y.values().size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(y.values()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv3d_transpose shape chain doubles extent at stride 2, k 4, pad 1") {
    RngStream rng(3);
    auto x = random_tensor({1, 4, 4, 4, 4}, rng, 0.1);
    auto w = random_tensor({4, 2, 4, 4, 4}, rng, 0.1);
    auto y = voxgan::conv3d_transpose(x, w, Tensor<double>(), 2, 1);
    CHECK(y.shape() == Shape{1, 2, 8, 8, 8});

    auto z = random_tensor({1, 3, 1, 1, 1}, rng, 0.1);
    auto w2 = random_tensor({3, 5, 4, 4, 4}, rng, 0.1);
    auto y2 = voxgan::conv3d_transpose(z, w2, Tensor<double>(), 1, 0);
    CHECK(y2.shape() == Shape{1, 5, 4, 4, 4});
}

TEST_CASE("conv3d and conv3d_transpose are linear adjoints") {
    // <conv3d(x, W), y> == <x, conv3d_transpose(y, W)> with the same weight
    // tensor read in both layouts. Configurations are drawn so the strided
    // output tiles the input exactly.
    RngStream rng(303);
    int done = 0;
    while (done < 20) {
        std::int64_t ci = rng.uniform_int(1, 3);
        std::int64_t co = rng.uniform_int(1, 3);
        std::int64_t k = rng.uniform_int(1, 4);
        std::int64_t s = rng.uniform_int(1, 3);
        std::int64_t p = rng.uniform_int(0, 2);
        std::int64_t d = rng.uniform_int(k, 7);
        if ((d + 2 * p - k) % s != 0 || d + 2 * p < k) continue;
        auto x = random_tensor({1, ci, d, d, d}, rng);
        // One weight tensor serves both directions: conv3d reads it as
        // [out, in, k^3]; the transpose reads dim 0 as its own input channels.
        auto w = random_tensor({co, ci, k, k, k}, rng);
        std::int64_t od = (d + 2 * p - k) / s + 1;
        auto fwd = voxgan::conv3d(x, w, Tensor<double>(), s, p);
        REQUIRE(fwd.shape() == Shape{1, co, od, od, od});
        auto y = random_tensor({1, co, od, od, od}, rng);
        auto back = voxgan::conv3d_transpose(y, w, Tensor<double>(), s, p);
        REQUIRE(back.shape() == x.shape());
        double lhs = dot(fwd.values(), y.values());
        double rhs = dot(x.values(), back.values());
        double denom = std::max({std::fabs(lhs), std::fabs(rhs), 1e-9});
        CHECK(std::fabs(lhs - rhs) / denom < 1e-6);
        ++done;
    }
}

TEST_CASE("conv2d matches the nested-loop oracle and the expected shapes") {
    RngStream rng(404);
    for (int iter = 0; iter < 10; ++iter) {
        std::int64_t b = rng.uniform_int(1, 2);
        std::int64_t ci = rng.uniform_int(1, 3);
        std::int64_t co = rng.uniform_int(1, 4);
        std::int64_t k = rng.uniform_int(1, 5);
        std::int64_t s = rng.uniform_int(1, 4);
        std::int64_t p = rng.uniform_int(0, 2);
        std::int64_t h = rng.uniform_int(k, 9);
        auto x = random_tensor({b, ci, h, h}, rng);
        auto w = random_tensor({co, ci, k, k}, rng);
        auto y = voxgan::conv2d(x, w, Tensor<double>(), s, p);
        auto expect = conv2d_oracle(x.values(), b, ci, h, h, w.values(), co, k, s, p);
        REQUIRE(y.values().size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(y.values()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
    }

    // Identity kernel passes the input through.
    auto x = random_tensor({1, 1, 6, 6}, rng);
    auto wid = Tensor<double>::full({1, 1, 1, 1}, 1.0);
    auto y = voxgan::conv2d(x, wid, Tensor<double>(), 1, 0);
    CHECK(y.values() == x.values());

    // 256 -> 63 with k=11, s=4, p=2; 8 -> 1 with k=8, s=1, p=0 (shape math only).
    CHECK((256 + 2 * 2 - 11) / 4 + 1 == 63);
    CHECK((8 + 2 * 0 - 8) / 1 + 1 == 1);
}

TEST_CASE("batchnorm normalizes per channel in train mode") {
    RngStream rng(55);
    std::int64_t b = 4, c = 3, spatial = 8;
    std::vector<double> v(static_cast<std::size_t>(b * c * spatial));
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t cc = 0; cc < c; ++cc)
            for (std::int64_t i = 0; i < spatial; ++i)
                v[(bi * c + cc) * spatial + i] = rng.normal() * 2.0 + 5.0;
    auto x = Tensor<double>::from_vector({b, c, spatial, 1, 1}, std::move(v));
    auto gamma = Tensor<double>::full({c}, 1.0);
    auto beta = Tensor<double>::zeros({c});
    auto rm = Tensor<double>::zeros({c});
    auto rv = Tensor<double>::full({c}, 1.0);
    auto y = voxgan::batchnorm(x, gamma, beta, rm, rv, true);
    for (std::int64_t cc = 0; cc < c; ++cc) {
        double mean = 0.0, var = 0.0;
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t i = 0; i < spatial; ++i) mean += y.values()[(bi * c + cc) * spatial + i];
        mean /= static_cast<double>(b * spatial);
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t i = 0; i < spatial; ++i) {
                double d = y.values()[(bi * c + cc) * spatial + i] - mean;
                var += d * d;
            }
        var /= static_cast<double>(b * spatial);
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
        // Running stats moved toward the batch stats with momentum 0.1.
        CHECK(rm.values()[cc] != 0.0);
    }

    // gamma=2, beta=3 rescales the normalized output.
    auto gamma2 = Tensor<double>::full({c}, 2.0);
    auto beta2 = Tensor<double>::full({c}, 3.0);
    auto rm2 = Tensor<double>::zeros({c});
    auto rv2 = Tensor<double>::full({c}, 1.0);
    auto y2 = voxgan::batchnorm(x, gamma2, beta2, rm2, rv2, true);
    for (std::size_t i = 0; i < y2.values().size(); ++i)
        CHECK(y2.values()[i] == doctest::Approx(y.values()[i] * 2.0 + 3.0).epsilon(1e-9));
}

TEST_CASE("batchnorm eval mode applies the running statistics") {
    auto x = Tensor<double>::from_vector({1, 1, 4, 1, 1}, {1.0, 2.0, 3.0, 4.0});
    auto gamma = Tensor<double>::full({1}, 1.0);
    auto beta = Tensor<double>::zeros({1});
    auto rm = Tensor<double>::zeros({1});
    auto rv = Tensor<double>::full({1}, 1.0);
    auto y = voxgan::batchnorm(x, gamma, beta, rm, rv, false);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-4));
    // Running buffers are untouched in eval mode.
    CHECK(rm.values()[0] == 0.0);
    CHECK(rv.values()[0] == 1.0);
}

TEST_CASE("batchnorm rejects degenerate training batches") {
    auto x = Tensor<double>::from_vector({1, 2, 1, 1, 1}, {1.0, 2.0});
    auto gamma = Tensor<double>::full({2}, 1.0);
    auto beta = Tensor<double>::zeros({2});
    auto rm = Tensor<double>::zeros({2});
    auto rv = Tensor<double>::full({2}, 1.0);
    CHECK_THROWS_AS((void)voxgan::batchnorm(x, gamma, beta, rm, rv, true), std::invalid_argument);
    CHECK_NOTHROW((void)voxgan::batchnorm(x, gamma, beta, rm, rv, false));
}

TEST_CASE("maxpool3d takes block maxima and pads short edges with -inf behavior") {
    // 1x128x16^3 pooled by 8 -> 2^3 cells per channel: 1024 values total.
    RngStream rng(66);
    auto big = random_tensor({1, 128, 16, 16, 16}, rng);
    auto pooled = voxgan::maxpool3d(big, 8);
    CHECK(pooled.shape() == Shape{1, 128, 2, 2, 2});
    CHECK(pooled.numel() == 1024);

    auto con = Tensor<double>::full({1, 1, 4, 4, 4}, 3.5);
    auto pc = voxgan::maxpool3d(con, 2);
    for (double v : pc.values()) CHECK(v == 3.5);

    // Non-divisible extent: the trailing window only sees real elements.
    auto x = Tensor<double>::from_vector({1, 1, 1, 1, 5}, {1.0, 5.0, 2.0, -3.0, -4.0});
    auto y = voxgan::maxpool3d(x, 2);
    CHECK(y.shape() == Shape{1, 1, 1, 1, 3});
    CHECK(y.values() == std::vector<double>{5.0, 2.0, -4.0});
}

TEST_CASE("reshape and slice_channels rearrange data without changing values") {
    auto x = Tensor<double>::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = voxgan::reshape(x, {3, 2});
    CHECK(r.values() == x.values());
    CHECK_THROWS_AS((void)voxgan::reshape(x, {4, 2}), std::invalid_argument);

    auto s = voxgan::slice_channels(x, 1, 3);
    CHECK(s.shape() == Shape{2, 2});
    CHECK(s.values() == std::vector<double>{2, 3, 5, 6});
    CHECK_THROWS_AS((void)voxgan::slice_channels(x, 2, 2), std::invalid_argument);
}

TEST_CASE("forward results are bit-identical across repeated runs") {
    RngStream rng(77);
    auto x = random_tensor({2, 2, 6, 6, 6}, rng);
    auto w = random_tensor({3, 2, 3, 3, 3}, rng);
    auto y1 = voxgan::conv3d(x, w, Tensor<double>(), 2, 1);
    auto y2 = voxgan::conv3d(x, w, Tensor<double>(), 2, 1);
    CHECK(y1.values() == y2.values());
}
