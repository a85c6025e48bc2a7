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

#ifndef GRADCERT_INTERVAL_HPP
#define GRADCERT_INTERVAL_HPP

#include <algorithm>
#include <type_traits>
#include <utility>
#include <vector>

#include "gradcert/autodiff.hpp"
#include "gradcert/network.hpp"
#include "gradcert/tensor.hpp"

namespace gradcert {

/// Elementwise lower/upper pair. The carrier C is either Tensor or Var, so
/// every bound below is also a differentiable expression when recorded on a
/// tape. Soundness is asserted up to floating-point rounding (documented
/// test slack 1e-9), not via directed rounding.
template <typename C>
struct IntervalOf {
    C lo;
    C hi;
};

using IntervalMatrix = IntervalOf<Tensor>;

template <typename C>
IntervalOf<C> degenerate_interval(const C& x) {
    return {x, x};
}

/// Validated construction for the Tensor carrier.
inline IntervalMatrix make_interval(Tensor lo, Tensor hi) {
    require_same_shape(lo, hi, "interval");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (!(lo[i] <= hi[i]))
            throw ContractError("interval: lower exceeds upper at entry " + std::to_string(i));
    return {std::move(lo), std::move(hi)};
}

inline IntervalMatrix interval_around(const Tensor& center, double radius) {
    return {add_scalar(center, -radius), add_scalar(center, radius)};
}

template <typename C>
IntervalOf<C> interval_transpose(const IntervalOf<C>& a) {
    return {transpose(a.lo), transpose(a.hi)};
}

template <typename C>
IntervalOf<C> interval_add(const IntervalOf<C>& a, const IntervalOf<C>& b) {
    return {add(a.lo, b.lo), add(a.hi, b.hi)};
}

// ---------------------------------------------------------------------------
// Joint matrix-interval product: closed-form center/radius bound.
//
//   [A][B] in  A^mu B^mu +- (|A^mu| B^r + A^r |B^mu| + A^r B^r)
//
// Sound for every A* in [A.lo, A.hi], B* in [B.lo, B.hi]; a single formula
// with no elementwise extrema, which keeps it cheap to differentiate.
// ---------------------------------------------------------------------------

/// Left operand with its derived tensors precomputed, for repeated products
/// against many right-hand intervals (one network evaluation reuses each
/// weight operand across every input).
template <typename C>
struct IntervalOperand {
    C center;     // A^mu
    C radius;     // A^r >= 0
    C abs_center; // |A^mu|
    bool point = false; // radius identically zero (skips one matmul)
};

template <typename C>
IntervalOperand<C> make_operand(const IntervalOf<C>& a, bool known_point = false) {
    IntervalOperand<C> op;
    if (known_point) {
        op.center = a.lo;
        op.abs_center = abs(a.lo);
        op.point = true;
        return op;
    }
    op.center = scale(add(a.lo, a.hi), 0.5);
    op.radius = scale(sub(a.hi, a.lo), 0.5);
    op.abs_center = abs(op.center);
    return op;
}

/// A^mu B^mu +- (|A^mu| B^r + A^r (|B^mu| + B^r)), using the identity
/// |B^mu| + B^r = max(|B.lo|, |B.hi|) to fuse M^A and Q into one product.
template <typename C>
IntervalOf<C> interval_matmul(const IntervalOperand<C>& A, const IntervalOf<C>& B) {
    C Bc = scale(add(B.lo, B.hi), 0.5);
    C Br = scale(sub(B.hi, B.lo), 0.5);
    C center = matmul(A.center, Bc);
    C spread = matmul(A.abs_center, Br);
    if (!A.point) spread = add(spread, matmul(A.radius, emax(abs(B.lo), abs(B.hi))));
    return {sub(center, spread), add(center, spread)};
}

template <typename C>
IntervalOf<C> interval_matmul(const IntervalOf<C>& A, const IntervalOf<C>& B) {
    if (value_of(A.lo).shape().size() != 2 || value_of(B.lo).shape().size() != 2 ||
        value_of(A.lo).shape()[1] != value_of(B.lo).shape()[0])
        throw DimensionError("interval_matmul: inner extents disagree " +
                             shape_str(value_of(A.lo).shape()) + " vs " +
                             shape_str(value_of(B.lo).shape()));
    return interval_matmul(make_operand(A), B);
}

inline bool is_degenerate(const IntervalMatrix& a) {
    for (std::size_t i = 0; i < a.lo.size(); ++i)
        if (a.lo[i] != a.hi[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Per-term corner-exact product: elementwise max/min over the four endpoint
// products of every scalar pair, summed. Tight for the interval domain and
// always contained in the closed-form box above. Tensor-only; used at test
// time for marginally tighter certification.
// ---------------------------------------------------------------------------

inline IntervalMatrix interval_matmul_exact_corners(const IntervalMatrix& A,
                                                    const IntervalMatrix& B) {
    const Tensor &Al = A.lo, &Ah = A.hi, &Bl = B.lo, &Bh = B.hi;
    if (Al.shape().size() != 2 || Bl.shape().size() != 2 || Al.shape()[1] != Bl.shape()[0])
        throw DimensionError("interval_matmul: inner extents disagree " + shape_str(Al.shape()) +
                             " vs " + shape_str(Bl.shape()));
    const std::size_t m = Al.shape()[0], k = Al.shape()[1], n = Bl.shape()[1];
    Tensor lo({m, n}), hi({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double losum = 0.0, hisum = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                const double al = Al[i * k + t], ah = Ah[i * k + t];
                const double bl = Bl[t * n + j], bh = Bh[t * n + j];
                const double p1 = al * bl, p2 = al * bh, p3 = ah * bl, p4 = ah * bh;
                losum += std::min(std::min(p1, p2), std::min(p3, p4));
                hisum += std::max(std::max(p1, p2), std::max(p3, p4));
            }
            lo[i * n + j] = losum;
            hi[i * n + j] = hisum;
        }
    return {std::move(lo), std::move(hi)};
}

/// Endpoints of a precomputed operand (Tensor path only).
inline IntervalMatrix operand_endpoints(const IntervalOperand<Tensor>& op) {
    if (op.point) return {op.center, op.center};
    return {sub(op.center, op.radius), add(op.center, op.radius)};
}

/// Per-term corner-exact product against a precomputed left operand.
inline IntervalOf<Tensor> interval_matmul_exact_corners(const IntervalOperand<Tensor>& A,
                                                        const IntervalOf<Tensor>& B) {
    return interval_matmul_exact_corners(operand_endpoints(A), B);
}

/// Dispatch between the closed-form bound (differentiable, default) and the
/// corner-exact bound (Tensor-only, marginally tighter, for test-time use).
template <typename C>
IntervalOf<C> interval_matmul_dispatch(const IntervalOperand<C>& A, const IntervalOf<C>& B,
                                       bool exact_corners) {
    if constexpr (std::is_same_v<C, Tensor>) {
        if (exact_corners) return interval_matmul_exact_corners(A, B);
    }
    return interval_matmul(A, B);
}

// ---------------------------------------------------------------------------
// Elementwise interval product: extrema over the four endpoint products;
// exact for Hadamard products.
// ---------------------------------------------------------------------------

template <typename C>
IntervalOf<C> interval_hadamard(const IntervalOf<C>& d, const IntervalOf<C>& g) {
    C p1 = mul(d.lo, g.lo);
    C p2 = mul(d.lo, g.hi);
    C p3 = mul(d.hi, g.lo);
    C p4 = mul(d.hi, g.hi);
    return {emin(emin(p1, p2), emin(p3, p4)), emax(emax(p1, p2), emax(p3, p4))};
}

// ---------------------------------------------------------------------------
// Activation bounds. All supported activations are monotone non-decreasing,
// so endpoint evaluation is exact.
// ---------------------------------------------------------------------------

template <typename C>
IntervalOf<C> activation_bounds(Activation act, const IntervalOf<C>& zeta) {
    return {apply_activation(act, zeta.lo), apply_activation(act, zeta.hi)};
}

/// Sound elementwise bounds on sigma' over [zeta.lo, zeta.hi].
///  - relu':     [1{lo>0}, 1{hi>0}]          (monotone step)
///  - softplus': sigmoid, monotone           -> endpoint evaluation
///  - sigmoid'/tanh': unimodal with peak at 0 -> min of endpoint derivatives;
///    upper is the peak when 0 lies in the interval, else the max endpoint.
template <typename C>
IntervalOf<C> activation_derivative_bounds(Activation act, const IntervalOf<C>& zeta) {
    switch (act) {
        case Activation::ReLU:
            return {step(zeta.lo), step(zeta.hi)};
        case Activation::Softplus:
            return {sigmoid(zeta.lo), sigmoid(zeta.hi)};
        case Activation::Identity: {
            Tensor ones = Tensor::ones(value_of(zeta.lo).shape());
            return {make_const(zeta.lo, ones), make_const(zeta.lo, ones)};
        }
        case Activation::Sigmoid:
        case Activation::Tanh: {
            C dl = activation_derivative(act, zeta.lo);
            C dh = activation_derivative(act, zeta.hi);
            const Tensor& lov = value_of(zeta.lo);
            const Tensor& hiv = value_of(zeta.hi);
            const double peak = (act == Activation::Sigmoid) ? 0.25 : 1.0;
            Tensor maskv(lov.shape()), imaskv(lov.shape()), peakv(lov.shape());
            for (std::size_t i = 0; i < lov.size(); ++i) {
                const bool contains0 = lov[i] <= 0.0 && hiv[i] >= 0.0;
                maskv[i] = contains0 ? 1.0 : 0.0;
                imaskv[i] = contains0 ? 0.0 : 1.0;
                peakv[i] = peak;
            }
            C upper = add(mul(make_const(zeta.lo, maskv), make_const(zeta.lo, peakv)),
                          mul(make_const(zeta.lo, imaskv), emax(dl, dh)));
            return {emin(dl, dh), upper};
        }
    }
    throw ContractError("unknown activation");
}

// ---------------------------------------------------------------------------
// Softmax bounds per class over a logit box:
//
//   sigma_min_c = exp(zL_c) / (exp(zL_c) + sum_{k != c} exp(zU_k))
//               = 1 / (1 + sum_{k != c} exp(zU_k - zL_c))
//
// and symmetrically for sigma_max_c. The pairwise-difference form is the
// overflow guard: a huge positive argument saturates toward 0/1 instead of
// producing inf/inf. Arguments are additionally capped at 700 so downstream
// derivatives stay finite; the cap can only overestimate sigma_min by at
// most exp(-700), far inside the documented 1e-9 soundness slack.
// ---------------------------------------------------------------------------

template <typename C>
IntervalOf<C> softmax_interval(const IntervalOf<C>& logits) {
    const std::size_t m = value_of(logits.lo).size();
    const Tensor capv = Tensor::scalar(700.0);
    const Tensor onev = Tensor::scalar(1.0);
    std::vector<C> mins, maxs;
    mins.reserve(m);
    maxs.reserve(m);
    for (std::size_t c = 0; c < m; ++c) {
        C zLc = index_scalar(logits.lo, c);
        C zUc = index_scalar(logits.hi, c);
        C one = make_const(logits.lo, onev);
        C cap = make_const(logits.lo, capv);
        C denom_min = one;
        C denom_max = one;
        for (std::size_t k = 0; k < m; ++k) {
            if (k == c) continue;
            denom_min = add(denom_min, exp(emin(sub(index_scalar(logits.hi, k), zLc), cap)));
            denom_max = add(denom_max, exp(emin(sub(index_scalar(logits.lo, k), zUc), cap)));
        }
        mins.push_back(div(one, denom_min));
        maxs.push_back(div(one, denom_max));
    }
    return {stack(mins), stack(maxs)};
}

/// Scalar convenience: sound [min, max] of softmax probability for class c.
inline std::pair<double, double> softmax_bounds(const IntervalMatrix& logits, std::size_t c) {
    if (c >= logits.lo.size())
        throw ContractError("softmax_bounds: class " + std::to_string(c) + " out of range");
    IntervalMatrix sm = softmax_interval(logits);
    return {sm.lo[c], sm.hi[c]};
}

// ---------------------------------------------------------------------------
// Backward-pass seed bounds d^(K) for each loss kind.
// ---------------------------------------------------------------------------

template <typename C>
IntervalOf<C> loss_gradient_seed_bounds(const LossSpec& loss, const IntervalOf<C>& logits) {
    const std::size_t m = value_of(logits.lo).size();
    check_loss(loss, m);
    switch (loss.kind) {
        case LossKind::CrossEntropy: {
            IntervalOf<C> sm = softmax_interval(logits);
            C oh = make_const(logits.lo, onehot(loss.class_index, m));
            return {sub(sm.lo, oh), sub(sm.hi, oh)};
        }
        case LossKind::ClassLogit: {
            C oh = make_const(logits.lo, onehot(loss.class_index, m));
            return {oh, oh};
        }
        case LossKind::SquaredError: {
            C y = make_const(logits.lo, loss.target);
            return {scale(sub(logits.lo, y), 2.0), scale(sub(logits.hi, y), 2.0)};
        }
    }
    throw ContractError("unknown loss kind");
}

} // namespace gradcert

#endif // GRADCERT_INTERVAL_HPP
