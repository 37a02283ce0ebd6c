#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hipass/tensor.hpp"

namespace hipass::nn {

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
    void accumulate(const Tensor& g);
};

/// Handle to a node of the tape. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var parameter(Tensor value, std::string name);

    explicit operator bool() const noexcept { return static_cast<bool>(node_); }

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::string& name() const { return node_->name; }

    /// Gradient, or zeros of the value's shape when nothing flowed back.
    Tensor grad() const;
    void zero_grad();

    Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Disables tape recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Seeds d(root)/d(root) = 1 and runs the tape in reverse topological order.
/// `root` must hold a single element.
void backward(const Var& root);

/// Named trainable tensors of one model.
class ParameterSet {
public:
    Var add(std::string name, Tensor init);
    const std::vector<Var>& all() const noexcept { return params_; }
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const;
    void zero_grad();
    std::size_t scalar_count() const;

private:
    std::vector<Var> params_;
};

// Primitive operations. Every op records its backward on the tape when any
// input requires a gradient.

/// Cross-correlation of x [Cin,H,W] with w [Cout,Cin,K,K], zero padding
/// `pad`, stride `stride`; `bias` [Cout] may be empty.
Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride = 1, std::size_t pad = 0);

Var leaky_relu(const Var& x, double slope = 0.1);
Var relu(const Var& x);
Var softplus(const Var& x);
/// |x| with d|x|/dx = 0 at x = 0.
Var abs(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double s);
/// Concatenation along axis 0.
Var concat(const std::vector<Var>& parts);
/// [C,H,W] -> [C]
Var global_avg_pool(const Var& x);
/// w [out,in] x [in] + b [out]
Var dense(const Var& x, const Var& w, const Var& bias);
Var pixel_shuffle(const Var& x, std::size_t scale);
Var pixel_unshuffle(const Var& x, std::size_t scale);
Var reshape(const Var& x, Shape shape);
/// Bilinear backward warp; the flow is a constant (no gradient to it).
Var bilinear_warp_stopgrad(const Var& x, const Tensor& flow);
/// Sum over j of alpha[j] * basis[j]; basis is [M,...], result [...].
Var combine(const Var& alpha, const Tensor& basis);
/// Space-time filter of window [C,T,H,W] with kernel [T,K,K]: true spatial
/// convolution, replicate padding, taps aligned with frames.
Var conv3d_temporal(const Var& window, const Var& kernel);
/// Mean over elements of sqrt((pred - target)^2 + eps^2); result [1].
Var charbonnier_loss(const Var& pred, const Tensor& target, double eps = 1e-3);
/// Sum of all elements; result [1].
Var sum(const Var& x);
/// Mean of all elements; result [1].
Var mean(const Var& x);

}  // namespace hipass::nn
