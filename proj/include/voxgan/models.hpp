#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "voxgan/ops.hpp"
#include "voxgan/rng.hpp"
#include "voxgan/tensor.hpp"

namespace voxgan {

struct ConvSpec {
    std::int64_t out_channels;
    std::int64_t kernel;
    std::int64_t stride;
    std::int64_t pad;
};

// Shared parameterization of the volumetric networks, so the 64-cube
// architecture and a 16-cube desk-scale variant run through one code path.
struct ScaleProfile {
    std::string name;
    std::int64_t resolution;
    std::int64_t base_channels;
    std::int64_t latent_dim = 200;

    // Volumetric layer count; the spatial chain is 4 -> 8 -> ... -> resolution
    // on the generator side and its reverse on the discriminator side.
    std::int64_t n_layers() const {
        std::int64_t n = 1, r = 4;
        while (r < resolution) {
            r *= 2;
            ++n;
        }
        return n;
    }

    std::int64_t image_size() const { return resolution * 4; }

    // Generator layer i (1-based) output channels: widest first, capped at
    // 8*base, ending in a single occupancy channel.
    std::int64_t gen_channels(std::int64_t i) const {
        std::int64_t n = n_layers();
        if (i == n) return 1;
        std::int64_t c = base_channels << (n - 1 - i);
        return std::min<std::int64_t>(c, 8 * base_channels);
    }

    // Discriminator mirrors the generator: narrow first, scalar head last.
    std::int64_t disc_channels(std::int64_t i) const {
        std::int64_t n = n_layers();
        if (i == n) return 1;
        std::int64_t c = base_channels << (i - 1);
        return std::min<std::int64_t>(c, 8 * base_channels);
    }

    // Image encoder stack: strided convolutions collapsing the image to a
    // single spatial cell holding 2*latent_dim values (mean + log-variance).
    std::vector<ConvSpec> encoder_layers() const {
        std::vector<ConvSpec> layers;
        if (name == "full") {
            layers = {{64, 11, 4, 2}, {128, 5, 2, 2}, {256, 5, 2, 2}, {512, 5, 2, 2},
                      {2 * latent_dim, 8, 1, 0}};
            return layers;
        }
        // Derived variants halve with a 7/5/5/... stack until extent 8, then a
        // kernel-8 layer consumes the remainder, mirroring the full stack's
        // final layer.
        std::int64_t extent = image_size();
        std::int64_t i = 1;
        while (extent > 8) {
            std::int64_t k = layers.empty() ? 7 : 5;
            std::int64_t p = layers.empty() ? 3 : 2;
            std::int64_t c = std::min<std::int64_t>(base_channels << (i - 1), 8 * base_channels);
            layers.push_back({c, k, 2, p});
            extent /= 2;
            ++i;
        }
        layers.push_back({2 * latent_dim, 8, 1, 0});
        return layers;
    }

    void validate() const {
        if (resolution < 8 || (resolution & (resolution - 1)) != 0)
            throw std::invalid_argument("ScaleProfile: resolution must be a power of 2, >= 8; got " +
                                        std::to_string(resolution));
        if (base_channels < 1 || latent_dim < 1)
            throw std::invalid_argument("ScaleProfile: channels and latent dim must be positive");
    }

    static ScaleProfile full() { return {"full", 64, 64, 200}; }
    static ScaleProfile tiny() { return {"tiny", 16, 16, 200}; }

    static ScaleProfile from_name(const std::string& n) {
        if (n == "full") return full();
        if (n == "tiny") return tiny();
        throw std::invalid_argument("unknown profile '" + n + "' (expected full or tiny)");
    }
};

inline bool operator==(const ScaleProfile& a, const ScaleProfile& b) {
    return a.name == b.name && a.resolution == b.resolution &&
           a.base_channels == b.base_channels && a.latent_dim == b.latent_dim;
}

namespace detail {

inline constexpr double kWeightInitStd = 0.02;

template <typename T>
Tensor<T> init_conv_weight(Shape shape, RngStream& rng) {
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (T& x : v) x = static_cast<T>(rng.normal() * kWeightInitStd);
    Tensor<T> t = Tensor<T>::from_vector(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

}  // namespace detail

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;

    void init(std::int64_t ch) {
        gamma = Tensor<T>::full({ch}, T(1));
        gamma.set_requires_grad(true);
        beta = Tensor<T>::zeros({ch});
        beta.set_requires_grad(true);
        running_mean = Tensor<T>::zeros({ch});
        running_var = Tensor<T>::full({ch}, T(1));
    }
};

template <typename T>
struct ConvBlock {
    Tensor<T> w;
    Tensor<T> bias;  // empty except on the final block of each network
    bool has_bn = false;
    BatchNormLayer<T> bn;
    std::int64_t kernel = 4;
    std::int64_t stride = 1;
    std::int64_t pad = 0;
};

namespace detail {

template <typename T>
void collect_block_params(const std::string& prefix, ConvBlock<T>& blk,
                          std::vector<std::pair<std::string, Tensor<T>>>& out) {
    out.emplace_back(prefix + ".w", blk.w);
    if (!blk.bias.empty()) out.emplace_back(prefix + ".b", blk.bias);
    if (blk.has_bn) {
        out.emplace_back(prefix + ".bn.gamma", blk.bn.gamma);
        out.emplace_back(prefix + ".bn.beta", blk.bn.beta);
    }
}

template <typename T>
void collect_block_buffers(const std::string& prefix, ConvBlock<T>& blk,
                           std::vector<std::pair<std::string, Tensor<T>>>& out) {
    if (blk.has_bn) {
        out.emplace_back(prefix + ".bn.running_mean", blk.bn.running_mean);
        out.emplace_back(prefix + ".bn.running_var", blk.bn.running_var);
    }
}

}  // namespace detail

// Latent vector -> occupancy cube. Transposed-convolution stack, kernel 4
// throughout, batch-norm + ReLU between layers, sigmoid head with bias.
template <typename T>
class Generator {
public:
    Generator(ScaleProfile profile, RngStream& rng) : profile_(std::move(profile)) {
        profile_.validate();
        std::int64_t n = profile_.n_layers();
        std::int64_t cin = profile_.latent_dim;
        for (std::int64_t i = 1; i <= n; ++i) {
            ConvBlock<T> blk;
            std::int64_t cout = profile_.gen_channels(i);
            blk.kernel = 4;
            blk.stride = i == 1 ? 1 : 2;
            blk.pad = i == 1 ? 0 : 1;
            blk.w = detail::init_conv_weight<T>({cin, cout, 4, 4, 4}, rng);
            if (i == n) {
                blk.bias = Tensor<T>::zeros({cout});
                blk.bias.set_requires_grad(true);
            } else {
                blk.has_bn = true;
                blk.bn.init(cout);
            }
            blocks_.push_back(std::move(blk));
            cin = cout;
        }
    }

    const ScaleProfile& profile() const { return profile_; }
    std::size_t n_blocks() const { return blocks_.size(); }
    ConvBlock<T>& block(std::size_t i) { return blocks_[i]; }

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    Tensor<T> forward(const Tensor<T>& z) {
        if (z.shape().size() != 2 || z.shape()[1] != profile_.latent_dim)
            throw std::invalid_argument("Generator: latent batch must be [n, " +
                                        std::to_string(profile_.latent_dim) + "], got " +
                                        shape_str(z.shape()));
        Tensor<T> x = reshape(z, {z.shape()[0], profile_.latent_dim, 1, 1, 1});
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            ConvBlock<T>& blk = blocks_[i];
            x = conv3d_transpose(x, blk.w, blk.bias, blk.stride, blk.pad);
            if (i + 1 < blocks_.size()) {
                x = batchnorm(x, blk.bn.gamma, blk.bn.beta, blk.bn.running_mean,
                              blk.bn.running_var, training_);
                x = relu(x);
            } else {
                x = sigmoid(x);
            }
        }
        return x;
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            detail::collect_block_params("l" + std::to_string(i + 1), blocks_[i], out);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_buffers() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            detail::collect_block_buffers("l" + std::to_string(i + 1), blocks_[i], out);
        return out;
    }

    void set_trainable(bool on) {
        for (auto& [name, p] : named_parameters()) p.set_requires_grad(on);
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (auto& [name, p] : named_parameters()) n += p.numel();
        return n;
    }

private:
    ScaleProfile profile_;
    std::vector<ConvBlock<T>> blocks_;
    bool training_ = true;
};

template <typename T>
struct DiscriminatorOutput {
    Tensor<T> score;                      // [batch], sigmoid confidence
    std::vector<Tensor<T>> activations;   // post-activation per block when captured
};

// Occupancy cube -> real/synthetic confidence. Strided convolutions, leaky
// ReLU (0.2) + batch-norm on all but the head block.
template <typename T>
class Discriminator {
public:
    static constexpr T kLeakySlope = T(0.2);

    Discriminator(ScaleProfile profile, RngStream& rng) : profile_(std::move(profile)) {
        profile_.validate();
        std::int64_t n = profile_.n_layers();
        std::int64_t cin = 1;
        for (std::int64_t i = 1; i <= n; ++i) {
            ConvBlock<T> blk;
            std::int64_t cout = profile_.disc_channels(i);
            blk.kernel = 4;
            blk.stride = i == n ? 1 : 2;
            blk.pad = i == n ? 0 : 1;
            blk.w = detail::init_conv_weight<T>({cout, cin, 4, 4, 4}, rng);
            if (i == n) {
                blk.bias = Tensor<T>::zeros({cout});
                blk.bias.set_requires_grad(true);
            } else {
                blk.has_bn = true;
                blk.bn.init(cout);
            }
            blocks_.push_back(std::move(blk));
            cin = cout;
        }
    }

    const ScaleProfile& profile() const { return profile_; }
    std::size_t n_blocks() const { return blocks_.size(); }
    ConvBlock<T>& block(std::size_t i) { return blocks_[i]; }

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    DiscriminatorOutput<T> forward(const Tensor<T>& x, bool capture = false) {
        std::int64_t r = profile_.resolution;
        if (x.shape().size() != 5 || x.shape()[1] != 1 || x.shape()[2] != r ||
            x.shape()[3] != r || x.shape()[4] != r)
            throw std::invalid_argument("Discriminator: input must be [n, 1, " +
                                        std::to_string(r) + "^3], got " + shape_str(x.shape()));
        DiscriminatorOutput<T> out;
        Tensor<T> h = x;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            ConvBlock<T>& blk = blocks_[i];
            h = conv3d(h, blk.w, blk.bias, blk.stride, blk.pad);
            if (i + 1 < blocks_.size()) {
                h = batchnorm(h, blk.bn.gamma, blk.bn.beta, blk.bn.running_mean,
                              blk.bn.running_var, training_);
                h = leaky_relu(h, kLeakySlope);
            } else {
                h = sigmoid(h);
            }
            if (capture) out.activations.push_back(h);
        }
        out.score = reshape(h, {x.shape()[0]});
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            detail::collect_block_params("l" + std::to_string(i + 1), blocks_[i], out);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_buffers() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            detail::collect_block_buffers("l" + std::to_string(i + 1), blocks_[i], out);
        return out;
    }

    void set_trainable(bool on) {
        for (auto& [name, p] : named_parameters()) p.set_requires_grad(on);
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (auto& [name, p] : named_parameters()) n += p.numel();
        return n;
    }

private:
    ScaleProfile profile_;
    std::vector<ConvBlock<T>> blocks_;
    bool training_ = true;
};

template <typename T>
struct EncoderOutput {
    Tensor<T> mu;       // [batch, latent]
    Tensor<T> log_var;  // [batch, latent]
};

// RGB image -> variational latent code. Strided 2-D convolutions with
// batch-norm + ReLU, final block emitting 2*latent values per image.
template <typename T>
class ImageEncoder {
public:
    ImageEncoder(ScaleProfile profile, RngStream& rng) : profile_(std::move(profile)) {
        profile_.validate();
        std::vector<ConvSpec> specs = profile_.encoder_layers();
        std::int64_t cin = 3;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const ConvSpec& sp = specs[i];
            ConvBlock<T> blk;
            blk.kernel = sp.kernel;
            blk.stride = sp.stride;
            blk.pad = sp.pad;
            blk.w = detail::init_conv_weight<T>({sp.out_channels, cin, sp.kernel, sp.kernel}, rng);
            if (i + 1 == specs.size()) {
                blk.bias = Tensor<T>::zeros({sp.out_channels});
                blk.bias.set_requires_grad(true);
            } else {
                blk.has_bn = true;
                blk.bn.init(sp.out_channels);
            }
            blocks_.push_back(std::move(blk));
            cin = sp.out_channels;
        }
    }

    const ScaleProfile& profile() const { return profile_; }
    std::size_t n_blocks() const { return blocks_.size(); }
    ConvBlock<T>& block(std::size_t i) { return blocks_[i]; }

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    EncoderOutput<T> forward(const Tensor<T>& image) {
        std::int64_t s = profile_.image_size();
        if (image.shape().size() != 4 || image.shape()[1] != 3 || image.shape()[2] != s ||
            image.shape()[3] != s)
            throw std::invalid_argument("ImageEncoder: input must be [n, 3, " +
                                        std::to_string(s) + ", " + std::to_string(s) +
                                        "], got " + shape_str(image.shape()));
        Tensor<T> h = image;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            ConvBlock<T>& blk = blocks_[i];
            h = conv2d(h, blk.w, blk.bias, blk.stride, blk.pad);
            if (i + 1 < blocks_.size()) {
                h = batchnorm(h, blk.bn.gamma, blk.bn.beta, blk.bn.running_mean,
                              blk.bn.running_var, training_);
                h = relu(h);
            }
        }
        std::int64_t latent = profile_.latent_dim;
        Tensor<T> flat = reshape(h, {image.shape()[0], 2 * latent});
        EncoderOutput<T> out;
        out.mu = slice_channels(flat, 0, latent);
        out.log_var = slice_channels(flat, latent, 2 * latent);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            detail::collect_block_params("l" + std::to_string(i + 1), blocks_[i], out);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_buffers() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            detail::collect_block_buffers("l" + std::to_string(i + 1), blocks_[i], out);
        return out;
    }

    void set_trainable(bool on) {
        for (auto& [name, p] : named_parameters()) p.set_requires_grad(on);
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (auto& [name, p] : named_parameters()) n += p.numel();
        return n;
    }

private:
    ScaleProfile profile_;
    std::vector<ConvBlock<T>> blocks_;
    bool training_ = true;
};

}  // namespace voxgan
