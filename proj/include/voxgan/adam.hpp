#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "voxgan/tensor.hpp"

namespace voxgan {

// Bias-corrected Adam over a fixed parameter list. Parameters keep their
// graph identity (the optimizer holds the same nodes the model registered),
// so data updated here is what the next forward pass reads. Per-parameter
// state is independent; step order is the registration order.
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Tensor<T>> params, double lr, double beta1 = 0.5,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (lr_ < 0.0) throw std::invalid_argument("Adam: negative learning rate");
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].values().size(), T(0));
            v_[i].assign(params_[i].values().size(), T(0));
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            const std::vector<T>& g = params_[p].grad();
            T* w = params_[p].data();
            T* m = m_[p].data();
            T* v = v_[p].data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                m[i] = static_cast<T>(beta1_) * m[i] + static_cast<T>(1.0 - beta1_) * g[i];
                v[i] = static_cast<T>(beta2_) * v[i] + static_cast<T>(1.0 - beta2_) * g[i] * g[i];
                double mhat = static_cast<double>(m[i]) / bc1;
                double vhat = static_cast<double>(v[i]) / bc2;
                w[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void zero_grad() {
        for (Tensor<T>& p : params_) p.zero_grad();
    }

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

    std::size_t size() const { return params_.size(); }
    std::vector<T>& moment1(std::size_t i) { return m_[i]; }
    std::vector<T>& moment2(std::size_t i) { return v_[i]; }
    const std::vector<T>& moment1(std::size_t i) const { return m_[i]; }
    const std::vector<T>& moment2(std::size_t i) const { return v_[i]; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::int64_t t_ = 0;
};

}  // namespace voxgan
