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

#ifndef GRADCERT_AUTODIFF_HPP
#define GRADCERT_AUTODIFF_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "gradcert/tensor.hpp"

namespace gradcert {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    const Tensor& value() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Record of primitive operations for reverse-mode differentiation. Nodes are
/// appended in evaluation order, so reverse iteration is a valid topological
/// order for adjoint accumulation. A tape is confined to one thread for its
/// whole record/backward lifecycle.
class Tape {
public:
    Tape() = default;
    // Vars hold stable pointers to their tape.
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input; its adjoint is available after backward().
    Var leaf(Tensor v) { return push(std::move(v), {}, true); }

    /// Non-differentiable input; adjoint accumulation stops here.
    Var constant(Tensor v) { return push(std::move(v), {}, false); }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Accumulate adjoints of every node w.r.t. a scalar root. May be called
    /// repeatedly; each call recomputes adjoints from scratch.
    void backward(Var root) {
        if (!root.valid() || &root.tape() != this)
            throw ContractError("backward: root does not belong to this tape");
        if (nodes_[root.id()].value.size() != 1)
            throw ContractError("backward: root must be scalar, got shape " +
                                shape_str(nodes_[root.id()].value.shape()));
        adjoints_.assign(nodes_.size(), Tensor());
        adjoints_[root.id()] = Tensor::ones(nodes_[root.id()].value.shape());
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (adjoints_[i].empty() || !nodes_[i].backward) continue;
            nodes_[i].backward(adjoints_[i], *this);
        }
        ran_backward_ = true;
    }

    /// Adjoint of a node after backward(); zero if the node did not reach the root.
    const Tensor& adjoint(Var v) {
        if (!ran_backward_) throw ContractError("adjoint: backward() has not run");
        Tensor& a = adjoints_[v.id()];
        if (a.empty()) a = Tensor::zeros(nodes_[v.id()].value.shape());
        return a;
    }

    void accumulate(std::size_t id, const Tensor& g) {
        if (!nodes_[id].diff) return;
        Tensor& a = adjoints_[id];
        if (a.empty()) {
            a = g;
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i];
    }

    using BackFn = std::function<void(const Tensor& adj, Tape&)>;

    Var push(Tensor value, BackFn back, bool diff = true) {
        nodes_.push_back(Node{std::move(value), std::move(back), diff});
        return Var(this, nodes_.size() - 1);
    }

private:
    struct Node {
        Tensor value;
        BackFn backward;
        bool diff;
    };
    // deque: node references stay valid while the tape grows
    std::deque<Node> nodes_;
    std::vector<Tensor> adjoints_;
    bool ran_backward_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

inline const Tensor& value_of(const Var& v) { return v.value(); }
inline Var make_const(const Var& exemplar, Tensor v) {
    return exemplar.tape().constant(std::move(v));
}

namespace detail {
inline Tensor sign0(const Tensor& a) {
    return map1(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}
} // namespace detail

// ---------------------------------------------------------------------------
// Recorded primitives. Same names as the Tensor versions, so bound
// computations template cleanly over either carrier.
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    Tape& t = a.tape();
    Tensor v = matmul(a.value(), b.value());
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(std::move(v), [pa, pb](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, matmul(g, transpose(tp.value(pb))));
        tp.accumulate(pb, matmul(transpose(tp.value(pa)), g));
    });
}

inline Var transpose(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(transpose(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, transpose(g));
    });
}

inline Var add(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(add(a.value(), b.value()), [pa, pb](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, g);
        tp.accumulate(pb, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(sub(a.value(), b.value()), [pa, pb](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, g);
        tp.accumulate(pb, neg(g));
    });
}

inline Var mul(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(mul(a.value(), b.value()), [pa, pb](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, mul(g, tp.value(pb)));
        tp.accumulate(pb, mul(g, tp.value(pa)));
    });
}

inline Var div(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(div(a.value(), b.value()), [pa, pb](const Tensor& g, Tape& tp) {
        const Tensor& bv = tp.value(pb);
        tp.accumulate(pa, div(g, bv));
        tp.accumulate(pb, neg(div(mul(g, tp.value(pa)), mul(bv, bv))));
    });
}

inline Var abs(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(abs(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, mul(g, detail::sign0(tp.value(pa))));
    });
}

// Ties pass the whole adjoint to the first operand.
inline Var emax(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(emax(a.value(), b.value()), [pa, pb](const Tensor& g, Tape& tp) {
        const Tensor& av = tp.value(pa);
        const Tensor& bv = tp.value(pb);
        Tensor ga(g.shape()), gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] >= bv[i]) ga[i] = g[i];
            else gb[i] = g[i];
        }
        tp.accumulate(pa, ga);
        tp.accumulate(pb, gb);
    });
}

inline Var emin(const Var& a, const Var& b) {
    Tape& t = a.tape();
    const std::size_t pa = a.id(), pb = b.id();
    return t.push(emin(a.value(), b.value()), [pa, pb](const Tensor& g, Tape& tp) {
        const Tensor& av = tp.value(pa);
        const Tensor& bv = tp.value(pb);
        Tensor ga(g.shape()), gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] <= bv[i]) ga[i] = g[i];
            else gb[i] = g[i];
        }
        tp.accumulate(pa, ga);
        tp.accumulate(pb, gb);
    });
}

inline Var relu(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(relu(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, mul(g, step(tp.value(pa))));
    });
}

inline Var softplus(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(softplus(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, mul(g, sigmoid(tp.value(pa))));
    });
}

inline Var sigmoid(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(sigmoid(a.value()), [pa](const Tensor& g, Tape& tp) {
        const Tensor s = sigmoid(tp.value(pa));
        Tensor d(s.shape());
        for (std::size_t i = 0; i < s.size(); ++i) d[i] = g[i] * s[i] * (1.0 - s[i]);
        tp.accumulate(pa, d);
    });
}

inline Var tanh(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(tanh(a.value()), [pa](const Tensor& g, Tape& tp) {
        const Tensor v = tanh(tp.value(pa));
        Tensor d(v.shape());
        for (std::size_t i = 0; i < v.size(); ++i) d[i] = g[i] * (1.0 - v[i] * v[i]);
        tp.accumulate(pa, d);
    });
}

inline Var exp(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(exp(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, mul(g, exp(tp.value(pa))));
    });
}

inline Var log(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(log(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, div(g, tp.value(pa)));
    });
}

inline Var neg(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(neg(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, neg(g));
    });
}

inline Var scale(const Var& a, double c) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(scale(a.value(), c), [pa, c](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, scale(g, c));
    });
}

inline Var add_scalar(const Var& a, double c) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(add_scalar(a.value(), c), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, g);
    });
}

/// Heaviside 1{x > 0}; piecewise constant, so it propagates no gradient.
inline Var step(const Var& a) {
    return a.tape().push(step(a.value()), nullptr);
}

inline Var sum(const Var& a) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(sum(a.value()), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, Tensor::full(tp.value(pa).shape(), g[0]));
    });
}

inline Var bcast(const Var& s, const Shape& shape) {
    Tape& t = s.tape();
    const std::size_t pa = s.id();
    return t.push(bcast(s.value(), shape), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, sum(g));
    });
}

inline Var reshape(const Var& a, Shape shape) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(a.value().reshaped(std::move(shape)), [pa](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, g.reshaped(tp.value(pa).shape()));
    });
}

inline Var index_scalar(const Var& a, std::size_t i) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(index_scalar(a.value(), i), [pa, i](const Tensor& g, Tape& tp) {
        Tensor full(tp.value(pa).shape());
        full[i] = g[0];
        tp.accumulate(pa, full);
    });
}

inline Var stack(const std::vector<Var>& xs) {
    Tape& t = xs.front().tape();
    std::vector<double> vals(xs.size());
    std::vector<std::size_t> parents(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        vals[i] = xs[i].value().item();
        parents[i] = xs[i].id();
    }
    return t.push(Tensor({xs.size(), 1}, std::move(vals)),
                  [parents](const Tensor& g, Tape& tp) {
                      for (std::size_t i = 0; i < parents.size(); ++i)
                          tp.accumulate(parents[i], Tensor::scalar(g[i]));
                  });
}

inline Var im2col(const Var& a, const ConvGeom& geom) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(im2col(a.value(), geom), [pa, geom](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, col2im(g, geom));
    });
}

inline Var col2im(const Var& a, const ConvGeom& geom) {
    Tape& t = a.tape();
    const std::size_t pa = a.id();
    return t.push(col2im(a.value(), geom), [pa, geom](const Tensor& g, Tape& tp) {
        tp.accumulate(pa, im2col(g, geom));
    });
}

} // namespace gradcert

#endif // GRADCERT_AUTODIFF_HPP
