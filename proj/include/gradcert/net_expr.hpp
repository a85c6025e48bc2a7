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

#ifndef GRADCERT_NET_EXPR_HPP
#define GRADCERT_NET_EXPR_HPP

#include <utility>
#include <vector>

#include "gradcert/autodiff.hpp"
#include "gradcert/network.hpp"

namespace gradcert {

/// A network's parameters bound onto a tape, either as differentiable leaves
/// (for d/dtheta) or as constants (for d/dx).
struct TapeNet {
    std::vector<std::pair<Var, Var>> wb; // (W, b) per layer; invalid for flatten
    std::vector<ParamRef<Var>> params;   // view over wb, aligned with layers

    Var W(std::size_t k) const { return wb[k].first; }
    Var b(std::size_t k) const { return wb[k].second; }
};

inline TapeNet bind_network(Tape& tape, const Network& net, bool params_as_leaves) {
    TapeNet tn;
    tn.wb.resize(net.layer_count());
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const LayerSpec& L = net.layer(k);
        if (!L.has_params()) continue;
        if (params_as_leaves)
            tn.wb[k] = {tape.leaf(L.W), tape.leaf(L.b)};
        else
            tn.wb[k] = {tape.constant(L.W), tape.constant(L.b)};
    }
    tn.params.resize(net.layer_count());
    for (std::size_t k = 0; k < net.layer_count(); ++k)
        if (net.layer(k).has_params())
            tn.params[k] = {&tn.wb[k].first, &tn.wb[k].second};
    return tn;
}

/// Scalar loss expression L(f(x)) on the tape.
inline Var loss_expr(const Network& net, const TapeNet& tn, const Var& x_flat,
                     const LossSpec& loss) {
    LayerCache<Var> cache = forward_generic<Var>(net, tn.params, x_flat);
    const Var& logits = cache.z.empty() ? x_flat : cache.z.back();
    return loss_value_generic(loss, logits);
}

/// Input-gradient expression v(x, theta) on the tape, via the unrolled
/// backward recursion. Differentiating this expression (w.r.t. x or theta)
/// is the exact double-backward path used by attacks and regularizers.
inline Var explanation_expr(const Network& net, const TapeNet& tn, const Var& x_flat,
                            const LossSpec& loss) {
    LayerCache<Var> cache = forward_generic<Var>(net, tn.params, x_flat);
    const Var& logits = cache.z.empty() ? x_flat : cache.z.back();
    Var seed = loss_seed_generic(loss, logits);
    return input_gradient_generic<Var>(net, tn.params, cache, seed);
}

/// Gradient of the scalar loss w.r.t. x computed by the generic tape,
/// independent of the closed-form recursion in input_gradient().
inline Tensor input_gradient_via_tape(const Network& net, const Tensor& x, const LossSpec& loss) {
    Tape tape;
    TapeNet tn = bind_network(tape, net, /*params_as_leaves=*/false);
    Var xv = tape.leaf(flatten_input(net, x));
    Var root = loss_expr(net, tn, xv, loss);
    tape.backward(root);
    return tape.adjoint(xv).reshaped(x.shape());
}

} // namespace gradcert

#endif // GRADCERT_NET_EXPR_HPP
