#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxgan/detail/conv_kernels.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& t, std::size_t rank, const char* what) {
    if (t.shape().size() != rank)
        throw std::invalid_argument(std::string(op) + ": " + what + " must have rank " +
                                    std::to_string(rank) + ", got shape " + shape_str(t.shape()));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("add", a, b);
    std::vector<T> out(a.values());
    const T* bp = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i];
    return detail::make_op<T>("add", a.shape(), std::move(out), {a.node(), b.node()},
                              [](TensorNode<T>& n) {
                                  for (std::size_t pi = 0; pi < 2; ++pi) {
                                      if (!detail::wants_grad(n, pi)) continue;
                                      T* g = detail::grad_buffer(n, pi);
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          g[i] += n.grad[i];
                                  }
                              });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("sub", a, b);
    std::vector<T> out(a.values());
    const T* bp = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
    return detail::make_op<T>("sub", a.shape(), std::move(out), {a.node(), b.node()},
                              [](TensorNode<T>& n) {
                                  if (detail::wants_grad(n, 0)) {
                                      T* g = detail::grad_buffer(n, 0);
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          g[i] += n.grad[i];
                                  }
                                  if (detail::wants_grad(n, 1)) {
                                      T* g = detail::grad_buffer(n, 1);
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          g[i] -= n.grad[i];
                                  }
                              });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<T> out(a.values());
    const T* bp = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
    return detail::make_op<T>("mul", a.shape(), std::move(out), {a.node(), b.node()},
                              [](TensorNode<T>& n) {
                                  const T* av = n.parents[0]->data.data();
                                  const T* bv = n.parents[1]->data.data();
                                  if (detail::wants_grad(n, 0)) {
                                      T* g = detail::grad_buffer(n, 0);
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          g[i] += n.grad[i] * bv[i];
                                  }
                                  if (detail::wants_grad(n, 1)) {
                                      T* g = detail::grad_buffer(n, 1);
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          g[i] += n.grad[i] * av[i];
                                  }
                              });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.values());
    for (T& v : out) v += c;
    return detail::make_op<T>("add_scalar", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                              });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    std::vector<T> out(a.values());
    for (T& v : out) v *= c;
    return detail::make_op<T>("mul_scalar", a.shape(), std::move(out), {a.node()},
                              [c](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      g[i] += n.grad[i] * c;
                              });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return mul_scalar(a, T(-1));
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (T& v : out) v = std::log(v);
    return detail::make_op<T>("log", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  const T* x = n.parents[0]->data.data();
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      g[i] += n.grad[i] / x[i];
                              });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (T& v : out) v = std::exp(v);
    return detail::make_op<T>("exp", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      g[i] += n.grad[i] * n.data[i];
                              });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (T& v : out) {
        if (v >= T(0)) {
            v = T(1) / (T(1) + std::exp(-v));
        } else {
            T e = std::exp(v);
            v = e / (T(1) + e);
        }
    }
    return detail::make_op<T>("sigmoid", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                      T y = n.data[i];
                                      g[i] += n.grad[i] * y * (T(1) - y);
                                  }
                              });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.values());
    for (T& v : out)
        if (v < T(0)) v = T(0);
    return detail::make_op<T>("relu", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  const T* x = n.parents[0]->data.data();
                                  T* g = detail::grad_buffer(n, 0);
                                  const bool guided = guided_backprop_enabled();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                      if (x[i] <= T(0)) continue;
                                      if (guided && n.grad[i] <= T(0)) continue;
                                      g[i] += n.grad[i];
                                  }
                              });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    std::vector<T> out(a.values());
    for (T& v : out)
        if (v < T(0)) v *= slope;
    return detail::make_op<T>("leaky_relu", a.shape(), std::move(out), {a.node()},
                              [slope](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  const T* x = n.parents[0]->data.data();
                                  T* g = detail::grad_buffer(n, 0);
                                  const bool guided = guided_backprop_enabled();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                      if (guided) {
                                          // Treated as a plain rectifier while a
                                          // guided pass is active.
                                          if (x[i] > T(0) && n.grad[i] > T(0)) g[i] += n.grad[i];
                                      } else {
                                          g[i] += n.grad[i] * (x[i] > T(0) ? T(1) : slope);
                                      }
                                  }
                              });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    if (!(lo <= hi))
        throw std::invalid_argument("clamp: lower bound exceeds upper bound");
    std::vector<T> out(a.values());
    for (T& v : out) v = v < lo ? lo : (v > hi ? hi : v);
    return detail::make_op<T>("clamp", a.shape(), std::move(out), {a.node()},
                              [lo, hi](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  const T* x = n.parents[0]->data.data();
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      if (x[i] >= lo && x[i] <= hi) g[i] += n.grad[i];
                              });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = 0;
    for (const T& v : a.values()) acc += v;
    return detail::make_op<T>("sum", {}, {acc}, {a.node()}, [](TensorNode<T>& n) {
        if (!detail::wants_grad(n, 0)) return;
        T* g = detail::grad_buffer(n, 0);
        T gout = n.grad[0];
        for (std::size_t i = 0; i < n.parents[0]->data.size(); ++i) g[i] += gout;
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    T acc = 0;
    for (const T& v : a.values()) acc += v;
    T inv_n = T(1) / static_cast<T>(a.numel());
    return detail::make_op<T>("mean", {}, {acc * inv_n}, {a.node()}, [inv_n](TensorNode<T>& n) {
        if (!detail::wants_grad(n, 0)) return;
        T* g = detail::grad_buffer(n, 0);
        T gout = n.grad[0] * inv_n;
        for (std::size_t i = 0; i < n.parents[0]->data.size(); ++i) g[i] += gout;
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    std::vector<T> out(a.values());
    return detail::make_op<T>("reshape", std::move(shape), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                              });
}

// Contiguous channel strip x[:, c0:c1, ...] of a [B, C, ...] tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::int64_t c0, std::int64_t c1) {
    if (a.shape().size() < 2)
        throw std::invalid_argument("slice_channels: need a [batch, channels, ...] tensor, got " +
                                    shape_str(a.shape()));
    std::int64_t batch = a.shape()[0];
    std::int64_t ch = a.shape()[1];
    if (c0 < 0 || c1 > ch || c0 >= c1)
        throw std::invalid_argument("slice_channels: range [" + std::to_string(c0) + ", " +
                                    std::to_string(c1) + ") invalid for " + std::to_string(ch) +
                                    " channels");
    std::int64_t spatial = a.numel() / (batch * ch);
    Shape out_shape = a.shape();
    out_shape[1] = c1 - c0;
    std::vector<T> out(static_cast<std::size_t>(batch * (c1 - c0) * spatial));
    const T* src = a.data();
    for (std::int64_t b = 0; b < batch; ++b)
        std::copy(src + (b * ch + c0) * spatial, src + (b * ch + c1) * spatial,
                  out.begin() + b * (c1 - c0) * spatial);
    return detail::make_op<T>(
        "slice_channels", std::move(out_shape), std::move(out), {a.node()},
        [batch, ch, c0, c1, spatial](TensorNode<T>& n) {
            if (!detail::wants_grad(n, 0)) return;
            T* g = detail::grad_buffer(n, 0);
            for (std::int64_t b = 0; b < batch; ++b) {
                const T* gs = n.grad.data() + b * (c1 - c0) * spatial;
                T* gd = g + (b * ch + c0) * spatial;
                for (std::int64_t i = 0; i < (c1 - c0) * spatial; ++i) gd[i] += gs[i];
            }
        });
}

namespace detail {

template <typename T>
void add_channel_bias(T* y, const T* bias, std::int64_t batch, std::int64_t ch,
                      std::int64_t spatial) {
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t c = 0; c < ch; ++c) {
            T bv = bias[c];
            T* row = y + (b * ch + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) row[i] += bv;
        }
}

template <typename T>
void accumulate_channel_bias_grad(const T* gy, T* gbias, std::int64_t batch, std::int64_t ch,
                                  std::int64_t spatial) {
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t c = 0; c < ch; ++c) {
            const T* row = gy + (b * ch + c) * spatial;
            T acc = 0;
            for (std::int64_t i = 0; i < spatial; ++i) acc += row[i];
            gbias[c] += acc;
        }
}

}  // namespace detail

// x: [B, Cin, D, H, W], w: [Cout, Cin, k, k, k], bias: [Cout] or empty.
// Output extent per axis: floor((n + 2p - k) / s) + 1.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::int64_t stride,
                 std::int64_t pad) {
    detail::require_rank("conv3d", x, 5, "input");
    detail::require_rank("conv3d", w, 5, "weight");
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    std::int64_t batch = xs[0], cin = xs[1], d = xs[2], h = xs[3], wd = xs[4];
    std::int64_t cout = ws[0], k = ws[2];
    if (ws[1] != cin)
        throw std::invalid_argument("conv3d: input has " + std::to_string(cin) +
                                    " channels but weight expects " + std::to_string(ws[1]));
    if (ws[3] != k || ws[4] != k)
        throw std::invalid_argument("conv3d: kernel must be cubic, got " + shape_str(ws));
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv3d: bad stride/pad");
    std::int64_t od = (d + 2 * pad - k) / stride + 1;
    std::int64_t oh = (h + 2 * pad - k) / stride + 1;
    std::int64_t ow = (wd + 2 * pad - k) / stride + 1;
    if (d + 2 * pad < k || od < 1)
        throw std::invalid_argument("conv3d: kernel " + std::to_string(k) +
                                    " does not fit input extent " + std::to_string(d) +
                                    " with pad " + std::to_string(pad));
    bool has_bias = !bias.empty();
    if (has_bias && (bias.shape() != Shape{cout}))
        throw std::invalid_argument("conv3d: bias shape " + shape_str(bias.shape()) +
                                    " does not match " + std::to_string(cout) + " channels");

    std::vector<T> out(static_cast<std::size_t>(batch * cout * od * oh * ow), T(0));
    detail::conv3d_gather(x.data(), w.data(), out.data(), batch, cin, cout, d, h, wd, od, oh, ow, k,
                          stride, pad, cin * k * k * k, k * k * k);
    if (has_bias) detail::add_channel_bias(out.data(), bias.data(), batch, cout, od * oh * ow);

    std::vector<std::shared_ptr<TensorNode<T>>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto backward = [batch, cin, cout, d, h, wd, od, oh, ow, k, stride, pad,
                     has_bias](TensorNode<T>& n) {
        const T* xv = n.parents[0]->data.data();
        const T* wv = n.parents[1]->data.data();
        const T* gy = n.grad.data();
        if (detail::wants_grad(n, 0))
            detail::conv3d_scatter(gy, wv, detail::grad_buffer(n, 0), batch, cout, cin, od, oh, ow,
                                   d, h, wd, k, stride, pad, k * k * k, cin * k * k * k);
        if (detail::wants_grad(n, 1))
            detail::conv3d_dweight(xv, gy, detail::grad_buffer(n, 1), batch, cin, cout, d, h, wd,
                                   od, oh, ow, k, stride, pad, k * k * k, cin * k * k * k);
        if (has_bias && detail::wants_grad(n, 2))
            detail::accumulate_channel_bias_grad(gy, detail::grad_buffer(n, 2), batch, cout,
                                                 od * oh * ow);
    };
    return detail::make_op<T>("conv3d", {batch, cout, od, oh, ow}, std::move(out),
                              std::move(parents), std::move(backward));
}

// x: [B, Cin, D, H, W], w: [Cin, Cout, k, k, k], bias: [Cout] or empty.
// Output extent per axis: (n - 1) * s + k - 2p.
template <typename T>
Tensor<T> conv3d_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::int64_t stride, std::int64_t pad) {
    detail::require_rank("conv3d_transpose", x, 5, "input");
    detail::require_rank("conv3d_transpose", w, 5, "weight");
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    std::int64_t batch = xs[0], cin = xs[1], d = xs[2], h = xs[3], wd = xs[4];
    std::int64_t cout = ws[1], k = ws[2];
    if (ws[0] != cin)
        throw std::invalid_argument("conv3d_transpose: input has " + std::to_string(cin) +
                                    " channels but weight expects " + std::to_string(ws[0]));
    if (ws[3] != k || ws[4] != k)
        throw std::invalid_argument("conv3d_transpose: kernel must be cubic, got " + shape_str(ws));
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv3d_transpose: bad stride/pad");
    std::int64_t od = (d - 1) * stride + k - 2 * pad;
    std::int64_t oh = (h - 1) * stride + k - 2 * pad;
    std::int64_t ow = (wd - 1) * stride + k - 2 * pad;
    if (od < 1 || oh < 1 || ow < 1)
        throw std::invalid_argument("conv3d_transpose: output extent would be non-positive");
    bool has_bias = !bias.empty();
    if (has_bias && (bias.shape() != Shape{cout}))
        throw std::invalid_argument("conv3d_transpose: bias shape " + shape_str(bias.shape()) +
                                    " does not match " + std::to_string(cout) + " channels");

    std::vector<T> out(static_cast<std::size_t>(batch * cout * od * oh * ow), T(0));
    detail::conv3d_scatter(x.data(), w.data(), out.data(), batch, cin, cout, d, h, wd, od, oh, ow,
                           k, stride, pad, k * k * k, cout * k * k * k);
    if (has_bias) detail::add_channel_bias(out.data(), bias.data(), batch, cout, od * oh * ow);

    std::vector<std::shared_ptr<TensorNode<T>>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto backward = [batch, cin, cout, d, h, wd, od, oh, ow, k, stride, pad,
                     has_bias](TensorNode<T>& n) {
        const T* xv = n.parents[0]->data.data();
        const T* wv = n.parents[1]->data.data();
        const T* gy = n.grad.data();
        if (detail::wants_grad(n, 0))
            detail::conv3d_gather(gy, wv, detail::grad_buffer(n, 0), batch, cout, cin, od, oh, ow,
                                  d, h, wd, k, stride, pad, cout * k * k * k, k * k * k);
        if (detail::wants_grad(n, 1))
            detail::conv3d_dweight(gy, xv, detail::grad_buffer(n, 1), batch, cout, cin, od, oh, ow,
                                   d, h, wd, k, stride, pad, k * k * k, cout * k * k * k);
        if (has_bias && detail::wants_grad(n, 2))
            detail::accumulate_channel_bias_grad(gy, detail::grad_buffer(n, 2), batch, cout,
                                                 od * oh * ow);
    };
    return detail::make_op<T>("conv3d_transpose", {batch, cout, od, oh, ow}, std::move(out),
                              std::move(parents), std::move(backward));
}

// x: [B, Cin, H, W], w: [Cout, Cin, k, k], bias: [Cout] or empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::int64_t stride,
                 std::int64_t pad) {
    detail::require_rank("conv2d", x, 4, "input");
    detail::require_rank("conv2d", w, 4, "weight");
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    std::int64_t batch = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
    std::int64_t cout = ws[0], k = ws[2];
    if (ws[1] != cin)
        throw std::invalid_argument("conv2d: input has " + std::to_string(cin) +
                                    " channels but weight expects " + std::to_string(ws[1]));
    if (ws[3] != k)
        throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(ws));
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    std::int64_t oh = (h + 2 * pad - k) / stride + 1;
    std::int64_t ow = (wd + 2 * pad - k) / stride + 1;
    if (h + 2 * pad < k || oh < 1)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(k) +
                                    " does not fit input extent " + std::to_string(h) +
                                    " with pad " + std::to_string(pad));
    bool has_bias = !bias.empty();
    if (has_bias && (bias.shape() != Shape{cout}))
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                    " does not match " + std::to_string(cout) + " channels");

    std::vector<T> out(static_cast<std::size_t>(batch * cout * oh * ow), T(0));
    detail::conv2d_gather(x.data(), w.data(), out.data(), batch, cin, cout, h, wd, oh, ow, k,
                          stride, pad, cin * k * k, k * k);
    if (has_bias) detail::add_channel_bias(out.data(), bias.data(), batch, cout, oh * ow);

    std::vector<std::shared_ptr<TensorNode<T>>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto backward = [batch, cin, cout, h, wd, oh, ow, k, stride, pad, has_bias](TensorNode<T>& n) {
        const T* xv = n.parents[0]->data.data();
        const T* wv = n.parents[1]->data.data();
        const T* gy = n.grad.data();
        if (detail::wants_grad(n, 0))
            detail::conv2d_scatter(gy, wv, detail::grad_buffer(n, 0), batch, cout, cin, oh, ow, h,
                                   wd, k, stride, pad, k * k, cin * k * k);
        if (detail::wants_grad(n, 1))
            detail::conv2d_dweight(xv, gy, detail::grad_buffer(n, 1), batch, cin, cout, h, wd, oh,
                                   ow, k, stride, pad, k * k, cin * k * k);
        if (has_bias && detail::wants_grad(n, 2))
            detail::accumulate_channel_bias_grad(gy, detail::grad_buffer(n, 2), batch, cout,
                                                 oh * ow);
    };
    return detail::make_op<T>("conv2d", {batch, cout, oh, ow}, std::move(out), std::move(parents),
                              std::move(backward));
}

// Channel-wise batch normalization over a [B, C, ...] tensor. In training
// mode the batch statistics are used and the running buffers are updated in
// place (they are plain buffers, not graph nodes); in eval mode the running
// statistics are used as constants. Statistics are accumulated in double to
// keep the normalization well conditioned in float graphs.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                    T momentum = T(0.1), T eps = T(1e-5)) {
    if (x.shape().size() < 3)
        throw std::invalid_argument("batchnorm: need a [batch, channels, spatial...] tensor, got " +
                                    shape_str(x.shape()));
    std::int64_t batch = x.shape()[0];
    std::int64_t ch = x.shape()[1];
    std::int64_t spatial = x.numel() / (batch * ch);
    for (const Tensor<T>* t :
         std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var})
        if (t->shape() != Shape{ch})
            throw std::invalid_argument("batchnorm: parameter shape " + shape_str(t->shape()) +
                                        " does not match " + std::to_string(ch) + " channels");

    std::vector<T> use_mean(static_cast<std::size_t>(ch));
    std::vector<T> invstd(static_cast<std::size_t>(ch));
    std::int64_t n_per_ch = batch * spatial;
    if (training && n_per_ch < 2)
        throw std::invalid_argument(
            "batchnorm: training statistics need at least 2 values per channel, got " +
            std::to_string(n_per_ch));
    const T* xv = x.data();

    if (training) {
        for (std::int64_t c = 0; c < ch; ++c) {
            double s = 0.0, s2 = 0.0;
            for (std::int64_t b = 0; b < batch; ++b) {
                const T* row = xv + (b * ch + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    double v = static_cast<double>(row[i]);
                    s += v;
                    s2 += v * v;
                }
            }
            double m = s / static_cast<double>(n_per_ch);
            double var = s2 / static_cast<double>(n_per_ch) - m * m;
            if (var < 0.0) var = 0.0;
            use_mean[c] = static_cast<T>(m);
            invstd[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            double unbiased = n_per_ch > 1
                                  ? var * static_cast<double>(n_per_ch) /
                                        static_cast<double>(n_per_ch - 1)
                                  : var;
            running_mean.data()[c] = static_cast<T>(
                (1.0 - static_cast<double>(momentum)) *
                    static_cast<double>(running_mean.data()[c]) +
                static_cast<double>(momentum) * m);
            running_var.data()[c] = static_cast<T>(
                (1.0 - static_cast<double>(momentum)) * static_cast<double>(running_var.data()[c]) +
                static_cast<double>(momentum) * unbiased);
        }
    } else {
        for (std::int64_t c = 0; c < ch; ++c) {
            use_mean[c] = running_mean.data()[c];
            invstd[c] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) +
                                static_cast<double>(eps)));
        }
    }

    std::vector<T> out(x.values().size());
    const T* gv = gamma.data();
    const T* bv = beta.data();
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t c = 0; c < ch; ++c) {
            const T* row = xv + (b * ch + c) * spatial;
            T* orow = out.data() + (b * ch + c) * spatial;
            T m = use_mean[c], is = invstd[c], g = gv[c], bb = bv[c];
            for (std::int64_t i = 0; i < spatial; ++i) orow[i] = (row[i] - m) * is * g + bb;
        }

    auto backward = [batch, ch, spatial, training, use_mean, invstd](TensorNode<T>& n) {
        const T* xv2 = n.parents[0]->data.data();
        const T* gv2 = n.parents[1]->data.data();
        const T* gy = n.grad.data();
        std::int64_t n_per = batch * spatial;
        bool want_x = detail::wants_grad(n, 0);
        bool want_gamma = detail::wants_grad(n, 1);
        bool want_beta = detail::wants_grad(n, 2);
        T* gx = want_x ? detail::grad_buffer(n, 0) : nullptr;
        T* gg = want_gamma ? detail::grad_buffer(n, 1) : nullptr;
        T* gb = want_beta ? detail::grad_buffer(n, 2) : nullptr;
        for (std::int64_t c = 0; c < ch; ++c) {
            T m = use_mean[c], is = invstd[c], g = gv2[c];
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (std::int64_t b = 0; b < batch; ++b) {
                const T* xrow = xv2 + (b * ch + c) * spatial;
                const T* grow = gy + (b * ch + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    double dy = static_cast<double>(grow[i]);
                    sum_gy += dy;
                    sum_gy_xhat += dy * static_cast<double>((xrow[i] - m) * is);
                }
            }
            if (gb) gb[c] += static_cast<T>(sum_gy);
            if (gg) gg[c] += static_cast<T>(sum_gy_xhat);
            if (!gx) continue;
            if (training) {
                double mean_gy = sum_gy / static_cast<double>(n_per);
                double mean_gy_xhat = sum_gy_xhat / static_cast<double>(n_per);
                for (std::int64_t b = 0; b < batch; ++b) {
                    const T* xrow = xv2 + (b * ch + c) * spatial;
                    const T* grow = gy + (b * ch + c) * spatial;
                    T* gxrow = gx + (b * ch + c) * spatial;
                    for (std::int64_t i = 0; i < spatial; ++i) {
                        double xhat = static_cast<double>((xrow[i] - m) * is);
                        double dy = static_cast<double>(grow[i]);
                        gxrow[i] += static_cast<T>(static_cast<double>(g) *
                                                   static_cast<double>(is) *
                                                   (dy - mean_gy - xhat * mean_gy_xhat));
                    }
                }
            } else {
                T scale = g * is;
                for (std::int64_t b = 0; b < batch; ++b) {
                    const T* grow = gy + (b * ch + c) * spatial;
                    T* gxrow = gx + (b * ch + c) * spatial;
                    for (std::int64_t i = 0; i < spatial; ++i) gxrow[i] += grow[i] * scale;
                }
            }
        }
    };
    return detail::make_op<T>("batchnorm", x.shape(), std::move(out),
                              {x.node(), gamma.node(), beta.node()}, std::move(backward));
}

// Max pooling over non-overlapping k^3 blocks of a [B, C, D, H, W] tensor.
// Extents that k does not divide are conceptually padded with -inf on the
// high side (windows are clipped to the input). Ties keep the first
// (lowest-index) element, so backward routing is deterministic.
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, std::int64_t k) {
    detail::require_rank("maxpool3d", x, 5, "input");
    const Shape& xs = x.shape();
    std::int64_t batch = xs[0], ch = xs[1], d = xs[2], h = xs[3], wd = xs[4];
    if (k < 1) throw std::invalid_argument("maxpool3d: window must be positive");
    std::int64_t od = (d + k - 1) / k, oh = (h + k - 1) / k, ow = (wd + k - 1) / k;
    std::vector<T> out(static_cast<std::size_t>(batch * ch * od * oh * ow));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    const T* xv = x.data();
    std::size_t oi = 0;
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t c = 0; c < ch; ++c) {
            const T* xc = xv + (b * ch + c) * d * h * wd;
            std::int64_t base = (b * ch + c) * d * h * wd;
            for (std::int64_t zd = 0; zd < od; ++zd)
                for (std::int64_t zh = 0; zh < oh; ++zh)
                    for (std::int64_t zw = 0; zw < ow; ++zw) {
                        std::int64_t kd = std::min(k, d - zd * k);
                        std::int64_t kh = std::min(k, h - zh * k);
                        std::int64_t kw = std::min(k, wd - zw * k);
                        T best = xc[(zd * k * h + zh * k) * wd + zw * k];
                        std::int64_t best_idx = (zd * k * h + zh * k) * wd + zw * k;
                        for (std::int64_t i = 0; i < kd; ++i)
                            for (std::int64_t j = 0; j < kh; ++j)
                                for (std::int64_t l = 0; l < kw; ++l) {
                                    std::int64_t idx =
                                        ((zd * k + i) * h + zh * k + j) * wd + zw * k + l;
                                    if (xc[idx] > best) {
                                        best = xc[idx];
                                        best_idx = idx;
                                    }
                                }
                        out[oi] = best;
                        (*argmax)[oi] = base + best_idx;
                        ++oi;
                    }
        }
    return detail::make_op<T>("maxpool3d", {batch, ch, od, oh, ow}, std::move(out), {x.node()},
                              [argmax](TensorNode<T>& n) {
                                  if (!detail::wants_grad(n, 0)) return;
                                  T* g = detail::grad_buffer(n, 0);
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      g[(*argmax)[i]] += n.grad[i];
                              });
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (const T& v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace voxgan
