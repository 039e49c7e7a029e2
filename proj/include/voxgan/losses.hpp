#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxgan/ops.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

// Latent prior. The adversarial model samples z uniformly on [0,1]; the
// image-conditioned model uses a standard normal. The prior a model was
// trained with is recorded in its checkpoint.
enum class PriorKind { uniform01, standard_normal };

inline const char* prior_name(PriorKind p) {
    return p == PriorKind::uniform01 ? "uniform01" : "standard_normal";
}

inline PriorKind prior_from_name(const std::string& name) {
    if (name == "uniform01") return PriorKind::uniform01;
    if (name == "standard_normal") return PriorKind::standard_normal;
    throw std::invalid_argument("unknown latent prior '" + name + "'");
}

// Scores are clamped this far inside (0,1) before any log.
inline constexpr double kProbEps = 1e-7;

// Clamp bounds applied to log-variances before exponentiation.
inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

template <typename T>
Tensor<T> sample_latent(RngStream& rng, PriorKind prior, std::int64_t batch, std::int64_t dim) {
    if (batch < 1 || dim < 1) throw std::invalid_argument("sample_latent: batch and dim must be positive");
    std::vector<T> v(static_cast<std::size_t>(batch * dim));
    for (T& x : v)
        x = static_cast<T>(prior == PriorKind::uniform01 ? rng.uniform01() : rng.normal());
    return Tensor<T>::from_vector({batch, dim}, std::move(v));
}

template <typename T>
Tensor<T> normal_tensor(RngStream& rng, Shape shape) {
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (T& x : v) x = static_cast<T>(rng.normal());
    return Tensor<T>::from_vector(std::move(shape), std::move(v));
}

namespace detail {

template <typename T>
void require_probabilities(const char* op, const Tensor<T>& t) {
    for (const T& v : t.values())
        if (!(v >= T(0) && v <= T(1)))
            throw std::domain_error(std::string(op) + ": score " + std::to_string(v) +
                                    " outside [0,1]");
}

template <typename T>
Tensor<T> mean_log_prob(const Tensor<T>& p) {
    return mean(log(clamp(p, static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps))));
}

}  // namespace detail

// Value both adversarial players see: mean log d_real + mean log(1 - d_fake).
// Perfect discrimination gives 0; both-at-0.5 gives 2*log(0.5).
template <typename T>
Tensor<T> bce_pair_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
    detail::require_probabilities("bce_pair_loss", d_real);
    detail::require_probabilities("bce_pair_loss", d_fake);
    return add(detail::mean_log_prob(d_real),
               detail::mean_log_prob(add_scalar(neg(d_fake), T(1))));
}

// Discriminator minimizes the negated pair value.
template <typename T>
Tensor<T> d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
    return neg(bce_pair_loss(d_real, d_fake));
}

// Generator minimizes -mean log d_fake (non-saturating form).
template <typename T>
Tensor<T> g_loss_nonsat(const Tensor<T>& d_fake) {
    detail::require_probabilities("g_loss_nonsat", d_fake);
    return neg(detail::mean_log_prob(d_fake));
}

// Fraction of correct real/fake calls at threshold 0.5 over both halves of
// the batch.
template <typename T>
double d_accuracy(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
    std::int64_t correct = 0;
    for (const T& v : d_real.values())
        if (v > T(0.5)) ++correct;
    for (const T& v : d_fake.values())
        if (v < T(0.5)) ++correct;
    return static_cast<double>(correct) /
           static_cast<double>(d_real.numel() + d_fake.numel());
}

// KL(N(mu, exp(log_var)) || N(0, I)) = 1/2 * sum(exp(lv) + mu^2 - 1 - lv),
// averaged over the batch for rank-2 [B, D] inputs (rank-1 = one sample).
template <typename T>
Tensor<T> kl_gaussian(const Tensor<T>& mu, const Tensor<T>& log_var) {
    detail::require_same_shape("kl_gaussian", mu, log_var);
    if (mu.shape().empty() || mu.shape().size() > 2)
        throw std::invalid_argument("kl_gaussian: expected [dim] or [batch, dim], got " +
                                    shape_str(mu.shape()));
    std::int64_t batch = mu.shape().size() == 2 ? mu.shape()[0] : 1;
    const T* mv = mu.data();
    const T* lv = log_var.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < mu.numel(); ++i) {
        double m = static_cast<double>(mv[i]);
        double l = static_cast<double>(lv[i]);
        acc += 0.5 * (std::exp(l) + m * m - 1.0 - l);
    }
    T inv_b = T(1) / static_cast<T>(batch);
    return detail::make_op<T>(
        "kl_gaussian", {}, {static_cast<T>(acc / static_cast<double>(batch))},
        {mu.node(), log_var.node()}, [inv_b](TensorNode<T>& n) {
            const T* m = n.parents[0]->data.data();
            const T* l = n.parents[1]->data.data();
            T gout = n.grad[0] * inv_b;
            if (detail::wants_grad(n, 0)) {
                T* g = detail::grad_buffer(n, 0);
                for (std::size_t i = 0; i < n.parents[0]->data.size(); ++i)
                    g[i] += gout * m[i];
            }
            if (detail::wants_grad(n, 1)) {
                T* g = detail::grad_buffer(n, 1);
                for (std::size_t i = 0; i < n.parents[1]->data.size(); ++i)
                    g[i] += gout * T(0.5) * (std::exp(l[i]) - T(1));
            }
        });
}

// Per-sample (unsquared) Euclidean norm of pred - target, averaged over the
// batch. Rank-1 inputs are one sample; otherwise the first extent is the
// batch. The gradient at an exactly-zero residual is defined as zero.
template <typename T>
Tensor<T> recon_l2(const Tensor<T>& pred, const Tensor<T>& target) {
    detail::require_same_shape("recon_l2", pred, target);
    if (pred.numel() == 0) throw std::invalid_argument("recon_l2: empty tensors");
    std::int64_t batch = pred.shape().size() >= 2 ? pred.shape()[0] : 1;
    std::int64_t per = pred.numel() / batch;
    const T* pv = pred.data();
    const T* tv = target.data();
    auto norms = std::make_shared<std::vector<T>>(static_cast<std::size_t>(batch));
    double total = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
            double d = static_cast<double>(pv[b * per + i]) - static_cast<double>(tv[b * per + i]);
            acc += d * d;
        }
        double norm = std::sqrt(acc);
        (*norms)[static_cast<std::size_t>(b)] = static_cast<T>(norm);
        total += norm;
    }
    T inv_b = T(1) / static_cast<T>(batch);
    return detail::make_op<T>(
        "recon_l2", {}, {static_cast<T>(total / static_cast<double>(batch))},
        {pred.node(), target.node()}, [norms, batch, per, inv_b](TensorNode<T>& n) {
            const T* p = n.parents[0]->data.data();
            const T* t = n.parents[1]->data.data();
            T gout = n.grad[0] * inv_b;
            bool want_p = detail::wants_grad(n, 0);
            bool want_t = detail::wants_grad(n, 1);
            T* gp = want_p ? detail::grad_buffer(n, 0) : nullptr;
            T* gt = want_t ? detail::grad_buffer(n, 1) : nullptr;
            for (std::int64_t b = 0; b < batch; ++b) {
                T norm = (*norms)[static_cast<std::size_t>(b)];
                if (norm == T(0)) continue;
                T scale = gout / norm;
                for (std::int64_t i = 0; i < per; ++i) {
                    T diff = p[b * per + i] - t[b * per + i];
                    if (gp) gp[b * per + i] += scale * diff;
                    if (gt) gt[b * per + i] -= scale * diff;
                }
            }
        });
}

// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) supplied as a constant
// tensor; gradients flow to mu and log_var only. Log-variances are clamped to
// [-20, 20] before exponentiation.
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& log_var, const Tensor<T>& eps) {
    detail::require_same_shape("reparameterize", mu, log_var);
    detail::require_same_shape("reparameterize", mu, eps);
    Tensor<T> sigma =
        exp(mul_scalar(clamp(log_var, static_cast<T>(kLogVarMin), static_cast<T>(kLogVarMax)),
                       T(0.5)));
    return add(mu, mul(sigma, eps));
}

}  // namespace voxgan
