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

#ifndef GRADCERT_BOUNDS_HPP
#define GRADCERT_BOUNDS_HPP

#include <optional>
#include <utility>
#include <vector>

#include "gradcert/interval.hpp"
#include "gradcert/net_expr.hpp"
#include "gradcert/network.hpp"

namespace gradcert {

// ---------------------------------------------------------------------------
// Perturbation regions
// ---------------------------------------------------------------------------

/// T = [x - eps, x + eps], intersected with per-feature domain bounds when
/// present. eps is per-feature and non-negative.
struct InputRegion {
    Tensor center;                  // flat column {n,1}
    Tensor eps;                     // same shape, >= 0
    std::optional<IntervalMatrix> domain; // per-feature [lo, hi]

    static InputRegion uniform(const Tensor& x, double eps_scalar) {
        InputRegion r;
        r.center = x.reshaped({x.size(), 1});
        if (eps_scalar < 0) throw ContractError("input region: eps must be >= 0");
        r.eps = Tensor::full({x.size(), 1}, eps_scalar);
        return r;
    }

    static InputRegion uniform_clipped(const Tensor& x, double eps_scalar, double lo, double hi) {
        InputRegion r = uniform(x, eps_scalar);
        r.domain = IntervalMatrix{Tensor::full({x.size(), 1}, lo), Tensor::full({x.size(), 1}, hi)};
        return r;
    }

    /// Realized interval; non-empty by construction when the center lies in
    /// the domain.
    IntervalMatrix realize() const {
        Tensor lo = sub(center, eps);
        Tensor hi = add(center, eps);
        if (domain) {
            lo = emax(lo, domain->lo);
            hi = emin(hi, domain->hi);
        }
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] <= hi[i]))
                throw ContractError("input region: empty after domain intersection at feature " +
                                    std::to_string(i));
        return {std::move(lo), std::move(hi)};
    }

    /// Project a point into the realized region (used by attacks).
    Tensor project(const Tensor& x) const {
        IntervalMatrix box = realize();
        return emin(emax(x.reshaped(box.lo.shape()), box.lo), box.hi);
    }
};

/// M: per-parameter interval [W - gamma|W|, W + gamma|W|]; gamma = 0 makes
/// every parameter interval a point.
struct ModelRegion {
    double gamma = 0.0;
    std::vector<double> per_layer; // optional per-layer override (indexed by layer)

    ModelRegion() = default;
    explicit ModelRegion(double g) : gamma(g) {
        if (g < 0) throw ContractError("model region: gamma must be >= 0");
    }

    double layer_gamma(std::size_t k) const {
        if (!per_layer.empty()) {
            if (k >= per_layer.size())
                throw ContractError("model region: missing per-layer gamma");
            return per_layer[k];
        }
        return gamma;
    }

    bool is_point() const {
        if (per_layer.empty()) return gamma == 0.0;
        for (double g : per_layer)
            if (g != 0.0) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Reachable-explanation box
// ---------------------------------------------------------------------------

/// E = [v_lower, v_upper] with fragility delta = v_upper - v_lower. Sound:
/// the exact input gradient of every (x', theta') in T x M lies inside.
struct GradientBox {
    Tensor v_lower, v_upper, delta;

    GradientBox() = default;
    GradientBox(Tensor lo, Tensor hi) : v_lower(std::move(lo)), v_upper(std::move(hi)) {
        require_same_shape(v_lower, v_upper, "gradient box");
        for (std::size_t i = 0; i < v_lower.size(); ++i)
            if (!(v_lower[i] <= v_upper[i]))
                throw ContractError("gradient box: lower exceeds upper at entry " +
                                    std::to_string(i));
        delta = sub(v_upper, v_lower);
    }

    Tensor center() const { return scale(add(v_lower, v_upper), 0.5); }
    double delta_sum() const { return sum(delta).item(); }
    double delta_max() const { return max_abs(delta); }

    bool contains(const Tensor& v, double slack = 0.0) const {
        if (!v.same_shape(v_lower)) return false;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] < v_lower[i] - slack || v[i] > v_upper[i] + slack) return false;
        return true;
    }

    /// Elementwise inclusion in another box.
    bool inside(const GradientBox& outer, double slack = 0.0) const {
        for (std::size_t i = 0; i < v_lower.size(); ++i)
            if (v_lower[i] < outer.v_lower[i] - slack || v_upper[i] > outer.v_upper[i] + slack)
                return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Parameter intervals per layer, generic over the carrier.
// ---------------------------------------------------------------------------

template <typename C>
struct BoundLayer {
    IntervalOperand<C> W;  // forward products
    IntervalOperand<C> WT; // backward products (transposed weights)
    IntervalOf<C> b;
    bool present = false;
};

template <typename C>
BoundLayer<C> make_bound_layer(const C& W, const C& b, double gamma) {
    BoundLayer<C> out;
    out.present = true;
    C wabs = abs(W);
    out.W.center = W;
    out.W.abs_center = wabs;
    out.WT.center = transpose(W);
    out.WT.abs_center = transpose(wabs);
    if (gamma == 0.0) {
        out.W.point = true;
        out.WT.point = true;
        out.b = degenerate_interval(b);
        return out;
    }
    out.W.radius = scale(wabs, gamma);   // [W - gamma|W|, W + gamma|W|]
    out.WT.radius = transpose(out.W.radius);
    C br = scale(abs(b), gamma);
    out.b = {sub(b, br), add(b, br)};
    return out;
}

inline std::vector<BoundLayer<Tensor>> make_bound_layers(const Network& net,
                                                         const ModelRegion& M) {
    std::vector<BoundLayer<Tensor>> out(net.layer_count());
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const LayerSpec& L = net.layer(k);
        if (!L.has_params()) continue;
        out[k] = make_bound_layer(L.W, L.b, M.layer_gamma(k));
    }
    return out;
}

/// Training-path variant: parameters are tape leaves from a TapeNet, so the
/// resulting bounds are differentiable w.r.t. theta.
inline std::vector<BoundLayer<Var>> make_bound_layers(const Network& net, const TapeNet& tn,
                                                      const ModelRegion& M) {
    std::vector<BoundLayer<Var>> out(net.layer_count());
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        if (!net.layer(k).has_params()) continue;
        out[k] = make_bound_layer(tn.W(k), tn.b(k), M.layer_gamma(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward pass over bounds
// ---------------------------------------------------------------------------

template <typename C>
struct BoundCache {
    std::vector<IntervalOf<C>> zeta, z;
};

template <typename C>
BoundCache<C> forward_bounds_generic(const Network& net, const std::vector<BoundLayer<C>>& bl,
                                     const IntervalOf<C>& input, bool exact_corners = false) {
    if (value_of(input.lo).size() != net.input_size())
        throw DimensionError("forward_bounds: input size " +
                             std::to_string(value_of(input.lo).size()) +
                             " does not match network input " + shape_str(net.input_shape()));
    BoundCache<C> cache;
    cache.zeta.reserve(net.layer_count());
    cache.z.reserve(net.layer_count());
    IntervalOf<C> cur = input;
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const LayerSpec& L = net.layer(k);
        IntervalOf<C> zeta = cur;
        if (L.is_dense()) {
            zeta = interval_add(interval_matmul_dispatch(bl[k].W, cur, exact_corners), bl[k].b);
        } else if (L.is_conv()) {
            const std::size_t P = L.geom.positions();
            IntervalOf<C> cols{im2col(cur.lo, L.geom), im2col(cur.hi, L.geom)};
            IntervalOf<C> zm = interval_matmul_dispatch(bl[k].W, cols, exact_corners);
            C ones = make_const(cur.lo, Tensor::ones({1, P}));
            IntervalOf<C> brep{matmul(bl[k].b.lo, ones), matmul(bl[k].b.hi, ones)};
            zm = interval_add(zm, brep);
            zeta = {reshape(zm.lo, {L.out_size, 1}), reshape(zm.hi, {L.out_size, 1})};
        }
        IntervalOf<C> z = activation_bounds(L.activation, zeta);
        cache.zeta.push_back(zeta);
        cache.z.push_back(z);
        cur = z;
    }
    return cache;
}

// ---------------------------------------------------------------------------
// Backward pass over bounds: d^(k-1) = [W^(k)]^T_int (sigma'-bounds .* d^(k)),
// elementwise extrema first, then the joint matmul bound.
// ---------------------------------------------------------------------------

template <typename C>
IntervalOf<C> backward_bounds_generic(const Network& net, const std::vector<BoundLayer<C>>& bl,
                                      const BoundCache<C>& cache, const IntervalOf<C>& seed,
                                      bool exact_corners = false) {
    IntervalOf<C> d = seed;
    for (std::size_t k = net.layer_count(); k-- > 0;) {
        const LayerSpec& L = net.layer(k);
        if (L.is_flatten()) continue;
        IntervalOf<C> s = activation_derivative_bounds(L.activation, cache.zeta[k]);
        IntervalOf<C> h = interval_hadamard(s, d);
        if (L.is_dense()) {
            d = interval_matmul_dispatch(bl[k].WT, h, exact_corners);
        } else {
            const std::size_t F = std::get<Conv2DSpec>(L.kind).filters;
            const std::size_t P = L.geom.positions();
            IntervalOf<C> hm{reshape(h.lo, {F, P}), reshape(h.hi, {F, P})};
            IntervalOf<C> cols = interval_matmul_dispatch(bl[k].WT, hm, exact_corners);
            d = {col2im(cols.lo, L.geom), col2im(cols.hi, L.geom)};
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Tensor-path public operations. The parameter intervals of a (network,
// region) pair are built once and reused across inputs; with them in hand one
// bound evaluation costs a small multiple of a forward+backward pass.
// ---------------------------------------------------------------------------

/// Parameter intervals of (net, M), reusable across many inputs. The
/// exact_corners flag switches the per-term corner-exact product in for the
/// closed-form bound (test-time refinement).
struct BoundNetwork {
    const Network* net = nullptr;
    std::vector<BoundLayer<Tensor>> layers;
    bool exact_corners = false;
};

inline BoundNetwork make_bound_network(const Network& net, const ModelRegion& M,
                                       bool exact_corners = false) {
    return {&net, make_bound_layers(net, M), exact_corners};
}

struct ForwardBounds {
    BoundCache<Tensor> cache;
    IntervalMatrix input;

    const IntervalMatrix& output() const {
        if (cache.z.empty()) return input;
        return cache.z.back();
    }
};

inline ForwardBounds forward_bounds(const BoundNetwork& bn, const InputRegion& T) {
    ForwardBounds fb;
    fb.input = T.realize();
    fb.cache = forward_bounds_generic<Tensor>(*bn.net, bn.layers, fb.input, bn.exact_corners);
    return fb;
}

inline GradientBox backward_bounds(const BoundNetwork& bn, const ForwardBounds& fb,
                                   const IntervalMatrix& seed) {
    IntervalOf<Tensor> d =
        backward_bounds_generic<Tensor>(*bn.net, bn.layers, fb.cache, seed, bn.exact_corners);
    return GradientBox(std::move(d.lo), std::move(d.hi));
}

inline GradientBox explanation_bounds(const BoundNetwork& bn, const InputRegion& T,
                                      const LossSpec& loss) {
    ForwardBounds fb = forward_bounds(bn, T);
    IntervalMatrix seed = loss_gradient_seed_bounds(loss, fb.output());
    return backward_bounds(bn, fb, seed);
}

/// Prediction certificate: true iff the lower bound of the class-c logit
/// exceeds the upper bound of every other logit over T x M.
inline bool logit_bounds_margin(const BoundNetwork& bn, const InputRegion& T, std::size_t c) {
    ForwardBounds fb = forward_bounds(bn, T);
    const IntervalMatrix& out = fb.output();
    if (c >= out.lo.size()) throw ContractError("logit_bounds_margin: class out of range");
    for (std::size_t k = 0; k < out.lo.size(); ++k) {
        if (k == c) continue;
        if (!(out.lo[c] > out.hi[k])) return false;
    }
    return true;
}

// One-shot conveniences.

/// Propagate T and M through the forward pass; caches contain the exact
/// activations of every (x', theta') in T x M.
inline ForwardBounds forward_bounds(const Network& net, const InputRegion& T,
                                    const ModelRegion& M) {
    return forward_bounds(make_bound_network(net, M), T);
}

/// Complete the backward pass from a seed interval at the logits.
inline GradientBox backward_bounds(const Network& net, const ForwardBounds& fb,
                                   const IntervalMatrix& seed, const ModelRegion& M) {
    return backward_bounds(make_bound_network(net, M), fb, seed);
}

/// Reachable-explanation box for a loss over T x M.
inline GradientBox explanation_bounds(const Network& net, const InputRegion& T,
                                      const ModelRegion& M, const LossSpec& loss) {
    return explanation_bounds(make_bound_network(net, M), T, loss);
}

/// Convenience with scalar radii and no domain clipping.
inline GradientBox explanation_bounds(const Network& net, const Tensor& x, double eps,
                                      double gamma, const LossSpec& loss) {
    return explanation_bounds(net, InputRegion::uniform(x, eps), ModelRegion(gamma), loss);
}

inline bool logit_bounds_margin(const Network& net, const InputRegion& T, const ModelRegion& M,
                                std::size_t c) {
    return logit_bounds_margin(make_bound_network(net, M), T, c);
}

// ---------------------------------------------------------------------------
// Differentiable regularizer path
// ---------------------------------------------------------------------------

/// Expression for the fragility box of one input on a tape whose parameter
/// leaves come from tn. Train-time input interval is [x - eps_t, x + eps_t]
/// with no domain clipping.
inline IntervalOf<Var> explanation_bounds_expr(const Network& net, const TapeNet& tn, Tape& tape,
                                               const Tensor& x_flat, double eps_t, double gamma_t,
                                               const LossSpec& loss) {
    std::vector<BoundLayer<Var>> bl = make_bound_layers(net, tn, ModelRegion(gamma_t));
    IntervalOf<Var> input{tape.constant(add_scalar(x_flat, -eps_t)),
                          tape.constant(add_scalar(x_flat, eps_t))};
    BoundCache<Var> cache = forward_bounds_generic<Var>(net, bl, input);
    const IntervalOf<Var>& out = cache.z.empty() ? input : cache.z.back();
    IntervalOf<Var> seed = loss_gradient_seed_bounds(loss, out);
    return backward_bounds_generic<Var>(net, bl, cache, seed);
}

/// D(x, theta, eps_t, gamma_t) = sum_i delta_i as a differentiable scalar.
inline Var grad_cert_regularizer_expr(const Network& net, const TapeNet& tn, Tape& tape,
                                      const Tensor& x_flat, double eps_t, double gamma_t,
                                      const LossSpec& loss) {
    IntervalOf<Var> box = explanation_bounds_expr(net, tn, tape, x_flat, eps_t, gamma_t, loss);
    return sum(sub(box.hi, box.lo));
}

/// Scalar D for reports and tests (Tensor path).
inline double grad_cert_regularizer(const Network& net, const Tensor& x, double eps_t,
                                    double gamma_t, const LossSpec& loss) {
    if (eps_t < 0 || gamma_t < 0)
        throw ContractError("grad_cert_regularizer: radii must be >= 0");
    GradientBox box = explanation_bounds(net, x, eps_t, gamma_t, loss);
    return box.delta_sum();
}

} // namespace gradcert

#endif // GRADCERT_BOUNDS_HPP
