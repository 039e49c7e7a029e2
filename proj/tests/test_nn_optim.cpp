#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxgan/adam.hpp"
#include "voxgan/losses.hpp"
#include "voxgan/ops.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/tensor.hpp"

using voxgan::PriorKind;
using voxgan::RngStream;
using voxgan::Tensor;

namespace {

// KL(N(m, exp(lv)) || N(0,1)) in one dimension by Simpson quadrature of
// q(x) * ln(q(x)/p(x)) over a wide interval.
double kl_quadrature(double m, double lv) {
    double sd = std::exp(0.5 * lv);
    double lo = m - 12.0 * sd - 12.0;
    double hi = m + 12.0 * sd + 12.0;
    int n = 200000;  // even
    double h = (hi - lo) / n;
    auto integrand = [&](double x) {
        double q = std::exp(-0.5 * (x - m) * (x - m) / (sd * sd)) / (sd * std::sqrt(2.0 * M_PI));
        if (q < 1e-300) return 0.0;
        double logp = -0.5 * x * x - 0.5 * std::log(2.0 * M_PI);
        double logq = -0.5 * (x - m) * (x - m) / (sd * sd) - std::log(sd) -
                      0.5 * std::log(2.0 * M_PI);
        return q * (logq - logp);
    };
    double acc = integrand(lo) + integrand(hi);
    for (int i = 1; i < n; ++i) acc += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace

TEST_CASE("adversarial pair value matches hand-computed cases") {
    auto near_one = Tensor<double>::from_vector({1}, {1.0 - 1e-7});
    auto near_zero = Tensor<double>::from_vector({1}, {1e-7});
    CHECK(voxgan::bce_pair_loss(near_one, near_zero).item() ==
          doctest::Approx(0.0).epsilon(1e-5));

    auto half = Tensor<double>::from_vector({1}, {0.5});
    CHECK(voxgan::bce_pair_loss(half, half).item() == doctest::Approx(2.0 * std::log(0.5)));

    auto bad = Tensor<double>::from_vector({1}, {1.2});
    CHECK_THROWS_AS((void)voxgan::bce_pair_loss(bad, half), std::domain_error);
    CHECK_THROWS_AS((void)voxgan::g_loss_nonsat(Tensor<double>::from_vector({1}, {-0.1})),
                    std::domain_error);
}

TEST_CASE("generator objective gradient at 0.5 is -2") {
    auto d_fake = Tensor<double>::from_vector({1}, {0.5});
    d_fake.set_requires_grad(true);
    voxgan::g_loss_nonsat(d_fake).backward();
    CHECK(d_fake.grad()[0] == doctest::Approx(-2.0));
}

TEST_CASE("the two players push the fake score in opposite directions") {
    // Minimizing -log(x) drives the fake score up (negative gradient);
    // minimizing -log(1-x) drives it down (positive gradient) — everywhere
    // on (0,1).
    for (double v : {0.05, 0.3, 0.5, 0.7, 0.95}) {
        auto x_g = Tensor<double>::from_vector({1}, {v});
        x_g.set_requires_grad(true);
        voxgan::g_loss_nonsat(x_g).backward();
        CHECK(x_g.grad()[0] < 0.0);

        auto real = Tensor<double>::from_vector({1}, {0.5});
        auto x_d = Tensor<double>::from_vector({1}, {v});
        x_d.set_requires_grad(true);
        voxgan::d_loss(real, x_d).backward();
        CHECK(x_d.grad()[0] > 0.0);
    }
}

TEST_CASE("d_accuracy counts both halves at threshold 0.5") {
    auto real = Tensor<double>::from_vector({4}, {0.9, 0.6, 0.4, 0.51});
    auto fake = Tensor<double>::from_vector({4}, {0.1, 0.7, 0.49, 0.5});
    // real correct: 3 (scores > 0.5); fake correct: 2 (scores < 0.5)
    CHECK(voxgan::d_accuracy(real, fake) == doctest::Approx(5.0 / 8.0));
}

TEST_CASE("kl_gaussian matches analytic and quadrature values") {
    auto z = Tensor<double>::zeros({4});
    CHECK(voxgan::kl_gaussian(z, z).item() == 0.0);

    auto mu1 = Tensor<double>::from_vector({1}, {1.0});
    auto lv0 = Tensor<double>::zeros({1});
    CHECK(voxgan::kl_gaussian(mu1, lv0).item() == doctest::Approx(0.5));

    RngStream rng(11);
    for (int i = 0; i < 5; ++i) {
        double m = rng.normal();
        double lv = rng.normal() * 0.7;
        auto mu = Tensor<double>::from_vector({1}, {m});
        auto logv = Tensor<double>::from_vector({1}, {lv});
        double expect = kl_quadrature(m, lv);
        CHECK(voxgan::kl_gaussian(mu, logv).item() == doctest::Approx(expect).epsilon(1e-6));
    }

    // Non-negativity, zero only at the standard normal itself.
    for (int i = 0; i < 20; ++i) {
        auto mu = Tensor<double>::from_vector({3}, {rng.normal(), rng.normal(), rng.normal()});
        auto lv = Tensor<double>::from_vector({3}, {rng.normal(), rng.normal(), rng.normal()});
        CHECK(voxgan::kl_gaussian(mu, lv).item() >= 0.0);
    }

    // Batched [B, D] averages per-sample KL over the batch.
    auto mu_b = Tensor<double>::from_vector({2, 1}, {1.0, 0.0});
    auto lv_b = Tensor<double>::zeros({2, 1});
    CHECK(voxgan::kl_gaussian(mu_b, lv_b).item() == doctest::Approx(0.25));
}

TEST_CASE("recon_l2 is the per-sample Euclidean norm, batch-averaged") {
    auto a = Tensor<double>::from_vector({4}, {1.0, 2.0, 3.0, 4.0});
    CHECK(voxgan::recon_l2(a, a).item() == 0.0);

    auto p = Tensor<double>::from_vector({8}, {0.5, 0, 0.5, 0, 0.5, 0, 0.5, 0});
    auto t = Tensor<double>::zeros({8});
    CHECK(voxgan::recon_l2(p, t).item() == doctest::Approx(1.0));

    RngStream rng(12);
    std::vector<double> pv(24), tv(24);
    for (double& v : pv) v = rng.normal();
    for (double& v : tv) v = rng.normal();
    double acc0 = 0.0, acc1 = 0.0;
    for (int i = 0; i < 12; ++i) {
        acc0 += (pv[i] - tv[i]) * (pv[i] - tv[i]);
        acc1 += (pv[i + 12] - tv[i + 12]) * (pv[i + 12] - tv[i + 12]);
    }
    double expect = 0.5 * (std::sqrt(acc0) + std::sqrt(acc1));
    auto pb = Tensor<double>::from_vector({2, 12}, pv);
    auto tb = Tensor<double>::from_vector({2, 12}, tv);
    CHECK(voxgan::recon_l2(pb, tb).item() == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS((void)voxgan::recon_l2(pb, Tensor<double>::zeros({2, 11})),
                    std::invalid_argument);
}

TEST_CASE("latent sampling honors the documented moments and determinism") {
    RngStream rng(1234);
    auto u = voxgan::sample_latent<double>(rng, PriorKind::uniform01, 1, 100000);
    double mean = 0.0;
    for (double v : u.values()) mean += v;
    mean /= 1e5;
    double var = 0.0;
    for (double v : u.values()) var += (v - mean) * (v - mean);
    var /= 1e5;
    CHECK(mean > 0.495);
    CHECK(mean < 0.505);
    CHECK(var > 0.080);
    CHECK(var < 0.087);
    for (double v : u.values()) {
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }

    RngStream rng2(1234);
    auto n = voxgan::sample_latent<double>(rng2, PriorKind::standard_normal, 1, 100000);
    double nmean = 0.0;
    for (double v : n.values()) nmean += v;
    nmean /= 1e5;
    CHECK(std::fabs(nmean) < 0.01);

    RngStream a(77), b(77);
    auto za = voxgan::sample_latent<double>(a, PriorKind::standard_normal, 2, 50);
    auto zb = voxgan::sample_latent<double>(b, PriorKind::standard_normal, 2, 50);
    CHECK(za.values() == zb.values());

    RngStream s1 = RngStream::substream(9, 4);
    RngStream s2 = RngStream::substream(9, 4);
    RngStream s3 = RngStream::substream(9, 5);
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(s1.next_u64() != s3.next_u64());
}

TEST_CASE("reparameterize reduces to its limiting cases") {
    auto mu = Tensor<double>::from_vector({1, 3}, {1.0, -2.0, 0.5});
    auto eps = Tensor<double>::from_vector({1, 3}, {0.3, -0.7, 2.0});

    // Strongly negative log-variance: z collapses to mu.
    auto lv_tiny = Tensor<double>::full({1, 3}, -50.0);  // clamped to -20
    auto z1 = voxgan::reparameterize(mu, lv_tiny, eps);
    for (int i = 0; i < 3; ++i)
        CHECK(z1.values()[i] == doctest::Approx(mu.values()[i]).epsilon(1e-4));

    // mu=0, lv=0: z equals the noise draw.
    auto zero = Tensor<double>::zeros({1, 3});
    auto z2 = voxgan::reparameterize(zero, zero, eps);
    CHECK(z2.values() == eps.values());

    // d(sum z)/d(mu) = 1.
    auto mu_g = Tensor<double>::from_vector({1, 3}, {0.1, 0.2, 0.3});
    mu_g.set_requires_grad(true);
    voxgan::sum(voxgan::reparameterize(mu_g, zero, eps)).backward();
    CHECK(mu_g.grad() == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("Adam first step is approximately -lr and zero gradients are a no-op") {
    auto theta = Tensor<double>::zeros({1});
    theta.set_requires_grad(true);
    voxgan::Adam<double> opt({theta}, 0.001);
    theta.zero_grad();
    // Plant gradient 1 by hand.
    theta.node()->ensure_grad();
    theta.node()->grad[0] = 1.0;
    opt.step();
    CHECK(theta.values()[0] == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(opt.step_count() == 1);

    auto frozen = Tensor<double>::from_vector({2}, {1.5, -2.5});
    frozen.set_requires_grad(true);
    voxgan::Adam<double> opt2({frozen}, 0.1);
    for (int i = 0; i < 5; ++i) {
        opt2.zero_grad();
        opt2.step();
    }
    CHECK(frozen.values() == std::vector<double>{1.5, -2.5});
}

TEST_CASE("Adam treats parameters independently and order-invariantly") {
    auto a = Tensor<double>::zeros({2});
    auto b = Tensor<double>::zeros({2});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    voxgan::Adam<double> opt({a, b}, 0.01);
    a.node()->ensure_grad();
    b.node()->ensure_grad();
    a.node()->grad = {1.0, -2.0};
    b.node()->grad = {1.0, -2.0};
    opt.step();
    CHECK(a.values() == b.values());

    // Same gradients fed through the reversed registration order.
    auto c = Tensor<double>::zeros({2});
    auto d = Tensor<double>::zeros({2});
    c.set_requires_grad(true);
    d.set_requires_grad(true);
    voxgan::Adam<double> opt_rev({d, c}, 0.01);
    c.node()->ensure_grad();
    d.node()->ensure_grad();
    c.node()->grad = {1.0, -2.0};
    d.node()->grad = {1.0, -2.0};
    opt_rev.step();
    CHECK(c.values() == a.values());
    CHECK(d.values() == b.values());
}

TEST_CASE("Adam drives a quadratic toward its minimum") {
    auto w = Tensor<double>::from_vector({1}, {3.0});
    w.set_requires_grad(true);
    voxgan::Adam<double> opt({w}, 0.05);
    for (int i = 0; i < 400; ++i) {
        opt.zero_grad();
        auto loss = voxgan::sum(voxgan::mul(w, w));
        loss.backward();
        opt.step();
    }
    CHECK(std::fabs(w.values()[0]) < 0.05);
}
