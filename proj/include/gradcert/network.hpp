/*
 * Copyright 2026 The gradcert authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GRADCERT_NETWORK_HPP
#define GRADCERT_NETWORK_HPP

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "gradcert/autodiff.hpp"
#include "gradcert/random.hpp"
#include "gradcert/tensor.hpp"

namespace gradcert {

// All supported activations are monotone non-decreasing.
enum class Activation { ReLU, Softplus, Sigmoid, Tanh, Identity };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Softplus: return "softplus";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

template <typename C>
C apply_activation(Activation a, const C& x) {
    switch (a) {
        case Activation::ReLU: return relu(x);
        case Activation::Softplus: return softplus(x);
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Tanh: return tanh(x);
        case Activation::Identity: return x;
    }
    throw ContractError("unknown activation");
}

/// sigma'(x) as an expression in the carrier. relu' follows the subgradient
/// convention relu'(0) = 0.
template <typename C>
C activation_derivative(Activation a, const C& x) {
    switch (a) {
        case Activation::ReLU: return step(x);
        case Activation::Softplus: return sigmoid(x);
        case Activation::Sigmoid: {
            C s = sigmoid(x);
            C one = make_const(x, Tensor::ones(value_of(x).shape()));
            return mul(s, sub(one, s));
        }
        case Activation::Tanh: {
            C th = tanh(x);
            C one = make_const(x, Tensor::ones(value_of(x).shape()));
            return sub(one, mul(th, th));
        }
        case Activation::Identity:
            return make_const(x, Tensor::ones(value_of(x).shape()));
    }
    throw ContractError("unknown activation");
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct DenseSpec {
    std::size_t out_features = 0;
};

struct Conv2DSpec {
    std::size_t filters = 0, kh = 0, kw = 0, stride = 1, pad = 0;
};

struct FlattenSpec {};

/// One layer: an affine map (dense, or convolution realized as im2col +
/// matmul) or a flatten marker, followed by a monotone activation.
struct LayerSpec {
    std::variant<DenseSpec, Conv2DSpec, FlattenSpec> kind;
    Activation activation = Activation::Identity;
    Tensor W; // dense: {out,in}; conv: {filters, c*kh*kw}; flatten: empty
    Tensor b; // {out,1} / {filters,1} / empty

    std::size_t in_size = 0;
    std::size_t out_size = 0;
    ConvGeom geom; // valid for conv layers only

    bool is_dense() const { return std::holds_alternative<DenseSpec>(kind); }
    bool is_conv() const { return std::holds_alternative<Conv2DSpec>(kind); }
    bool is_flatten() const { return std::holds_alternative<FlattenSpec>(kind); }
    bool has_params() const { return !is_flatten(); }
};

/// Ordered layers with composing shapes. The parameter vector theta is
/// exactly the union of all layer weights and biases.
class Network {
public:
    Network() = default;

    /// input_shape: {n} for vectors or {c,h,w} for images.
    explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {
        if (input_shape_.empty() || shape_size(input_shape_) == 0)
            throw ContractError("network input shape must be non-empty");
        if (input_shape_.size() == 3) {
            cur_c_ = input_shape_[0];
            cur_h_ = input_shape_[1];
            cur_w_ = input_shape_[2];
            spatial_ = true;
        }
    }

    Network& add_dense(std::size_t out_features, Activation act) {
        if (spatial_)
            throw ContractError("add_dense: flatten the spatial input first");
        LayerSpec L;
        L.kind = DenseSpec{out_features};
        L.activation = act;
        L.in_size = current_size();
        L.out_size = out_features;
        L.W = Tensor({out_features, L.in_size});
        L.b = Tensor({out_features, 1});
        layers_.push_back(std::move(L));
        return *this;
    }

    Network& add_conv2d(std::size_t filters, std::size_t kh, std::size_t kw,
                        std::size_t stride, std::size_t pad, Activation act) {
        if (!spatial_)
            throw ContractError("add_conv2d: input is not spatial (c,h,w)");
        if (kh > cur_h_ + 2 * pad || kw > cur_w_ + 2 * pad)
            throw DimensionError("add_conv2d: kernel larger than padded input");
        LayerSpec L;
        L.kind = Conv2DSpec{filters, kh, kw, stride, pad};
        L.activation = act;
        L.geom = ConvGeom{cur_c_, cur_h_, cur_w_, kh, kw, stride, pad};
        L.in_size = L.geom.in_size();
        L.out_size = filters * L.geom.positions();
        L.W = Tensor({filters, L.geom.patch()});
        L.b = Tensor({filters, 1});
        cur_h_ = L.geom.out_h();
        cur_w_ = L.geom.out_w();
        cur_c_ = filters;
        layers_.push_back(std::move(L));
        return *this;
    }

    Network& add_flatten() {
        LayerSpec L;
        L.kind = FlattenSpec{};
        L.activation = Activation::Identity;
        L.in_size = current_size();
        L.out_size = L.in_size;
        spatial_ = false;
        layers_.push_back(std::move(L));
        return *this;
    }

    const Shape& input_shape() const { return input_shape_; }
    std::size_t input_size() const { return shape_size(input_shape_); }
    std::size_t layer_count() const { return layers_.size(); }
    const LayerSpec& layer(std::size_t i) const { return layers_[i]; }
    LayerSpec& layer(std::size_t i) { return layers_[i]; }
    const std::vector<LayerSpec>& layers() const { return layers_; }

    /// Output dimension m (the class count for classifiers).
    std::size_t class_count() const {
        return layers_.empty() ? input_size() : layers_.back().out_size;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& L : layers_) n += L.W.size() + L.b.size();
        return n;
    }

private:
    std::size_t current_size() const {
        if (layers_.empty()) return input_size();
        return layers_.back().out_size;
    }

    std::vector<LayerSpec> layers_;
    Shape input_shape_;
    std::size_t cur_c_ = 0, cur_h_ = 0, cur_w_ = 0;
    bool spatial_ = false;
};

/// He-style normal init for weights, zero biases.
inline void init_parameters(Network& net, Rng& rng, double weight_scale = 1.0) {
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        LayerSpec& L = net.layer(k);
        if (!L.has_params()) continue;
        const std::size_t fan_in = L.W.shape()[1];
        const double sd = weight_scale * std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < L.W.size(); ++i) L.W[i] = rng.normal(0.0, sd);
        for (std::size_t i = 0; i < L.b.size(); ++i) L.b[i] = 0.0;
    }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind { CrossEntropy, ClassLogit, SquaredError };

struct LossSpec {
    LossKind kind = LossKind::CrossEntropy;
    std::size_t class_index = 0;
    Tensor target; // SquaredError only

    static LossSpec cross_entropy(std::size_t c) { return {LossKind::CrossEntropy, c, {}}; }
    static LossSpec class_logit(std::size_t c) { return {LossKind::ClassLogit, c, {}}; }
    static LossSpec squared_error(Tensor y) { return {LossKind::SquaredError, 0, std::move(y)}; }
};

inline void check_loss(const LossSpec& loss, std::size_t m) {
    if (loss.kind == LossKind::SquaredError) {
        if (loss.target.size() != m)
            throw DimensionError("squared-error target size " +
                                 std::to_string(loss.target.size()) +
                                 " does not match output size " + std::to_string(m));
    } else if (loss.class_index >= m) {
        throw ContractError("loss class index " + std::to_string(loss.class_index) +
                            " out of range for " + std::to_string(m) + " outputs");
    }
}

/// Scalar loss of the logits. Works on tensors and tape variables.
template <typename C>
C loss_value_generic(const LossSpec& loss, const C& logits) {
    const Tensor& zv = value_of(logits);
    check_loss(loss, zv.size());
    switch (loss.kind) {
        case LossKind::CrossEntropy: {
            // log-sum-exp(z) - z_c; the constant shift cancels algebraically.
            double s0 = zv[0];
            for (std::size_t i = 1; i < zv.size(); ++i) s0 = std::max(s0, zv[i]);
            C lse = add_scalar(log(sum(exp(add_scalar(logits, -s0)))), s0);
            C zc = sum(mul(logits, make_const(logits, onehot(loss.class_index, zv.size()))));
            return sub(lse, zc);
        }
        case LossKind::ClassLogit:
            return sum(mul(logits, make_const(logits, onehot(loss.class_index, zv.size()))));
        case LossKind::SquaredError: {
            C d = sub(logits, make_const(logits, loss.target));
            return sum(mul(d, d));
        }
    }
    throw ContractError("unknown loss kind");
}

/// Gradient of the loss w.r.t. the logits (the backward-pass seed d^(K)).
template <typename C>
C loss_seed_generic(const LossSpec& loss, const C& logits) {
    const Tensor& zv = value_of(logits);
    check_loss(loss, zv.size());
    switch (loss.kind) {
        case LossKind::CrossEntropy: {
            double s0 = zv[0];
            for (std::size_t i = 1; i < zv.size(); ++i) s0 = std::max(s0, zv[i]);
            C e = exp(add_scalar(logits, -s0));
            C sm = div(e, bcast(sum(e), zv.shape()));
            return sub(sm, make_const(logits, onehot(loss.class_index, zv.size())));
        }
        case LossKind::ClassLogit:
            return make_const(logits, onehot(loss.class_index, zv.size()));
        case LossKind::SquaredError:
            return scale(sub(logits, make_const(logits, loss.target)), 2.0);
    }
    throw ContractError("unknown loss kind");
}

// ---------------------------------------------------------------------------
// Forward pass and exact input gradient, generic over the carrier. Parameters
// are passed by pointer so the Tensor path borrows the network's storage.
// ---------------------------------------------------------------------------

template <typename C>
struct ParamRef {
    const C* W = nullptr;
    const C* b = nullptr;
};

/// Borrow the network's own parameters for the Tensor carrier.
inline std::vector<ParamRef<Tensor>> borrow_params(const Network& net) {
    std::vector<ParamRef<Tensor>> out(net.layer_count());
    for (std::size_t k = 0; k < net.layer_count(); ++k)
        if (net.layer(k).has_params())
            out[k] = {&net.layer(k).W, &net.layer(k).b};
    return out;
}

template <typename C>
struct LayerCache {
    std::vector<C> zeta; // pre-activation per layer (flat column)
    std::vector<C> z;    // post-activation per layer (flat column)
};

template <typename C>
LayerCache<C> forward_generic(const Network& net, const std::vector<ParamRef<C>>& params,
                              const C& x_flat) {
    if (value_of(x_flat).size() != net.input_size() || value_of(x_flat).cols() != 1)
        throw DimensionError("forward: input shape " + shape_str(value_of(x_flat).shape()) +
                             " does not match network input " + shape_str(net.input_shape()));
    LayerCache<C> cache;
    cache.zeta.reserve(net.layer_count());
    cache.z.reserve(net.layer_count());
    C cur = x_flat;
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const LayerSpec& L = net.layer(k);
        C zeta = cur;
        if (L.is_dense()) {
            zeta = add(matmul(*params[k].W, cur), *params[k].b);
        } else if (L.is_conv()) {
            const std::size_t P = L.geom.positions();
            C cols = im2col(cur, L.geom);
            C zmat = matmul(*params[k].W, cols);
            C brep = matmul(*params[k].b, make_const(cur, Tensor::ones({1, P})));
            zeta = reshape(add(zmat, brep), {L.out_size, 1});
        }
        C z = apply_activation(L.activation, zeta);
        cache.zeta.push_back(zeta);
        cache.z.push_back(z);
        cur = z;
    }
    return cache;
}

/// Backward recursion d^(k-1) = W^(k)^T (sigma'(zeta^(k)) .* d^(k)) down to
/// the input, starting from a seed at the logits.
template <typename C>
C input_gradient_generic(const Network& net, const std::vector<ParamRef<C>>& params,
                         const LayerCache<C>& cache, const C& seed) {
    C d = seed;
    for (std::size_t k = net.layer_count(); k-- > 0;) {
        const LayerSpec& L = net.layer(k);
        if (L.is_flatten()) continue;
        C s = activation_derivative(L.activation, cache.zeta[k]);
        C h = mul(s, d);
        if (L.is_dense()) {
            d = matmul(transpose(*params[k].W), h);
        } else {
            const std::size_t F = std::get<Conv2DSpec>(L.kind).filters;
            const std::size_t P = L.geom.positions();
            C cols = matmul(transpose(*params[k].W), reshape(h, {F, P}));
            d = col2im(cols, L.geom);
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Tensor-path conveniences (the module's public operations)
// ---------------------------------------------------------------------------

using ForwardCache = LayerCache<Tensor>;

inline Tensor flatten_input(const Network& net, const Tensor& x) {
    if (x.size() != net.input_size())
        throw DimensionError("input shape " + shape_str(x.shape()) +
                             " does not match network input " + shape_str(net.input_shape()));
    return x.reshaped({net.input_size(), 1});
}

/// Forward pass; returns per-layer caches. logits = cache.z.back().
inline ForwardCache forward(const Network& net, const Tensor& x) {
    return forward_generic<Tensor>(net, borrow_params(net), flatten_input(net, x));
}

inline Tensor logits_of(const Network& net, const Tensor& x) {
    ForwardCache c = forward(net, x);
    return c.z.empty() ? flatten_input(net, x) : c.z.back();
}

/// Exact gradient of the chosen loss w.r.t. the input, in the input's shape.
inline Tensor input_gradient(const Network& net, const Tensor& x, const LossSpec& loss) {
    auto params = borrow_params(net);
    Tensor xf = flatten_input(net, x);
    ForwardCache cache = forward_generic<Tensor>(net, params, xf);
    const Tensor& logits = cache.z.empty() ? xf : cache.z.back();
    Tensor seed = loss_seed_generic(loss, logits);
    Tensor v = input_gradient_generic<Tensor>(net, params, cache, seed);
    return v.reshaped(x.shape());
}

/// Argmax class; ties break toward the lowest index.
inline std::size_t predict(const Network& net, const Tensor& x) {
    return argmax(logits_of(net, x));
}

inline double loss_value(const Network& net, const Tensor& x, const LossSpec& loss) {
    return loss_value_generic(loss, logits_of(net, x)).item();
}

} // namespace gradcert

#endif // GRADCERT_NETWORK_HPP
