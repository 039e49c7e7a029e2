#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace voxgan {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {
inline thread_local bool grad_enabled = true;
inline thread_local bool guided_backprop = false;
inline thread_local std::uint64_t next_node_seq = 1;
}  // namespace detail

inline bool grad_mode_enabled() { return detail::grad_enabled; }
inline bool guided_backprop_enabled() { return detail::guided_backprop; }

// Disables graph construction for its scope (inference, data prep, metrics).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// While active, rectifier backward passes additionally zero out coordinates
// whose upstream gradient is negative (and leaky rectifiers behave like plain
// ones). Used for saliency maps; has no effect on forward computation.
class GuidedBackpropGuard {
public:
    GuidedBackpropGuard() : prev_(detail::guided_backprop) { detail::guided_backprop = true; }
    ~GuidedBackpropGuard() { detail::guided_backprop = prev_; }
    GuidedBackpropGuard(const GuidedBackpropGuard&) = delete;
    GuidedBackpropGuard& operator=(const GuidedBackpropGuard&) = delete;

private:
    bool prev_;
};

// One vertex of the computation graph. `seq` increases monotonically with
// creation order, so sorting a reachable set by descending seq yields a valid
// reverse-topological schedule (an op's output is always created after all of
// its inputs).
template <typename T>
struct TensorNode {
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily; same length as data once touched
    Shape shape;
    bool requires_grad = false;
    std::uint64_t seq;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    TensorNode() : seq(detail::next_node_seq++) {}

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode<T>>()) {}

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data.assign(static_cast<std::size_t>(shape_numel(t.node_->shape)), T(0));
        return t;
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.node_->data.begin(), t.node_->data.end(), value);
        return t;
    }

    static Tensor from_vector(Shape shape, std::vector<T> values) {
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
            throw std::invalid_argument("Tensor::from_vector: " + std::to_string(values.size()) +
                                        " values do not fill shape " + shape_str(shape));
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(values);
        return t;
    }

    static Tensor scalar(T value) { return from_vector({}, {value}); }

    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return node_->numel(); }
    bool empty() const { return node_->data.empty(); }

    T* data() { return node_->data.data(); }
    const T* data() const { return node_->data.data(); }
    std::vector<T>& values() { return node_->data; }
    const std::vector<T>& values() const { return node_->data; }

    T item() const {
        if (numel() != 1)
            throw std::runtime_error("Tensor::item: tensor of shape " + shape_str(shape()) +
                                     " is not a scalar");
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }

    Tensor& set_requires_grad(bool on) {
        if (on && node_->backward_fn)
            throw std::runtime_error("set_requires_grad: node already has a backward function");
        node_->requires_grad = on;
        return *this;
    }

    // Gradient buffer; zeros if backward has not reached this tensor yet.
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

    // Leaf copy that shares no graph history with the source.
    Tensor detach() const {
        Tensor t;
        t.node_->shape = node_->shape;
        t.node_->data = node_->data;
        return t;
    }

    Tensor clone() const { return detach(); }

    // Reverse-mode sweep from a scalar. Interior gradients are recomputed from
    // scratch each call; leaf gradients accumulate across calls.
    void backward() {
        if (numel() != 1)
            throw std::runtime_error("backward: root tensor of shape " + shape_str(shape()) +
                                     " is not a scalar");

        std::vector<TensorNode<T>*> reachable;
        std::unordered_set<TensorNode<T>*> seen;
        std::vector<TensorNode<T>*> stack{node_.get()};
        seen.insert(node_.get());
        while (!stack.empty()) {
            TensorNode<T>* n = stack.back();
            stack.pop_back();
            reachable.push_back(n);
            for (const auto& p : n->parents)
                if (seen.insert(p.get()).second) stack.push_back(p.get());
        }

        for (TensorNode<T>* n : reachable)
            if (n->backward_fn) n->grad.assign(n->data.size(), T(0));

        node_->ensure_grad();
        node_->grad[0] += T(1);

        std::sort(reachable.begin(), reachable.end(),
                  [](const TensorNode<T>* a, const TensorNode<T>* b) { return a->seq > b->seq; });
        for (TensorNode<T>* n : reachable)
            if (n->backward_fn) n->backward_fn(*n);
    }

    std::shared_ptr<TensorNode<T>>& node() { return node_; }
    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

// Assembles an op result: installs parents and the backward closure only when
// gradients are enabled and at least one input can receive them.
template <typename T>
Tensor<T> make_op(const char* name, Shape shape, std::vector<T> data,
                  std::vector<std::shared_ptr<TensorNode<T>>> parents,
                  std::function<void(TensorNode<T>&)> backward) {
    Tensor<T> out = Tensor<T>::from_vector(std::move(shape), std::move(data));
    TensorNode<T>& n = *out.node();
    n.op = name;
    bool track = grad_enabled;
    if (track) {
        track = false;
        for (const auto& p : parents)
            if (p->requires_grad) { track = true; break; }
    }
    if (track) {
        n.requires_grad = true;
        n.parents = std::move(parents);
        n.backward_fn = std::move(backward);
    }
    return out;
}

template <typename T>
bool wants_grad(TensorNode<T>& n, std::size_t i) {
    return n.parents[i]->requires_grad;
}

template <typename T>
T* grad_buffer(TensorNode<T>& n, std::size_t i) {
    n.parents[i]->ensure_grad();
    return n.parents[i]->grad.data();
}

}  // namespace detail
}  // namespace voxgan
