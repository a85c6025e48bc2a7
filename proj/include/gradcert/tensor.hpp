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

#ifndef GRADCERT_TENSOR_HPP
#define GRADCERT_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gradcert/errors.hpp"

namespace gradcert {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

/// Dense row-major array of 64-bit reals with an explicit shape. Tensors are
/// immutable values in all public library operations; mutation is reserved
/// for construction and the optimizer's parameter updates.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) {
        Tensor t(std::move(s));
        for (auto& e : t.data_) e = v;
        return t;
    }
    static Tensor ones(Shape s) { return full(std::move(s), 1.0); }

    /// Column vector {n,1}.
    static Tensor column(std::vector<double> v) {
        Shape s{v.size(), 1};
        return Tensor(std::move(s), std::move(v));
    }

    /// 2-d matrix from nested braces.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged matrix initializer");
            for (double v : row) data.push_back(v);
        }
        return Tensor({r, c}, std::move(data));
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const {
        if (shape_.size() < 2) return shape_.size() == 1 ? 1 : 0;
        std::size_t c = 1;
        for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
        return c;
    }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }
    const std::vector<double>& vec() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Scalar extraction; contract error unless the tensor has exactly one entry.
    double item() const {
        if (data_.size() != 1)
            throw ContractError("item() on non-scalar tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(Shape s) const {
        if (shape_size(s) != data_.size())
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

// ---------------------------------------------------------------------------
// Matrix product. Summation order is fixed (inner index ascending) so results
// are bit-deterministic for identical operands.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw DimensionError("matmul: operands must be 2-d, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner extents disagree " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // i-t-j order: cache friendly and per-entry summation is still t-ascending.
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        const double* arow = pa + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = arow[t];
            if (av == 0.0) continue;
            const double* brow = pb + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2)
        throw DimensionError("transpose: operand must be 2-d, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
    return t;
}

// ---------------------------------------------------------------------------
// Elementwise operations.
// ---------------------------------------------------------------------------

namespace detail {

template <typename F>
Tensor map1(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

} // namespace detail

inline double softplus_scalar(double x) {
    // log(1+exp(x)) with large-|x| saturation; stays finite for all finite x.
    if (x > 36.0) return x;
    if (x < -36.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::map2(a, b, "add", [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::map2(a, b, "sub", [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::map2(a, b, "mul", [](double x, double y) { return x * y; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::map2(a, b, "div", [](double x, double y) { return x / y; });
}
inline Tensor emax(const Tensor& a, const Tensor& b) {
    return detail::map2(a, b, "max", [](double x, double y) { return x >= y ? x : y; });
}
inline Tensor emin(const Tensor& a, const Tensor& b) {
    return detail::map2(a, b, "min", [](double x, double y) { return x <= y ? x : y; });
}
inline Tensor abs(const Tensor& a) {
    return detail::map1(a, [](double x) { return std::fabs(x); });
}
inline Tensor neg(const Tensor& a) {
    return detail::map1(a, [](double x) { return -x; });
}
inline Tensor relu(const Tensor& a) {
    return detail::map1(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
inline Tensor softplus(const Tensor& a) { return detail::map1(a, softplus_scalar); }
inline Tensor sigmoid(const Tensor& a) { return detail::map1(a, sigmoid_scalar); }
inline Tensor tanh(const Tensor& a) {
    return detail::map1(a, [](double x) { return std::tanh(x); });
}
inline Tensor exp(const Tensor& a) {
    return detail::map1(a, [](double x) { return std::exp(x); });
}
inline Tensor log(const Tensor& a) {
    return detail::map1(a, [](double x) { return std::log(x); });
}
inline Tensor scale(const Tensor& a, double c) {
    return detail::map1(a, [c](double x) { return c * x; });
}
inline Tensor add_scalar(const Tensor& a, double c) {
    return detail::map1(a, [c](double x) { return x + c; });
}

/// Heaviside step 1{x > 0}; the subgradient convention for relu'.
inline Tensor step(const Tensor& a) {
    return detail::map1(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Sum of all entries as a 1x1 tensor (ascending index order).
inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return Tensor::scalar(s);
}

/// Broadcast a scalar tensor to an arbitrary shape.
inline Tensor bcast(const Tensor& s, const Shape& shape) {
    return Tensor::full(shape, s.item());
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
    return m;
}

inline Tensor onehot(std::size_t idx, std::size_t n) {
    Tensor t({n, 1});
    if (idx >= n) throw ContractError("onehot: index " + std::to_string(idx) +
                                      " out of range for " + std::to_string(n) + " classes");
    t[idx] = 1.0;
    return t;
}

/// Numerically stable softmax of a column vector.
inline Tensor softmax(const Tensor& logits) {
    Tensor out(logits.shape());
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= z;
    return out;
}

inline std::size_t argmax(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] > t[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// Convolution support: im2col / col2im as index maps. Treating convolution as
// a gather followed by a plain matmul lets every affine layer share one
// bound-propagation code path.
// ---------------------------------------------------------------------------

struct ConvGeom {
    std::size_t in_c = 0, in_h = 0, in_w = 0;
    std::size_t kh = 0, kw = 0, stride = 1, pad = 0;

    std::size_t out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
    std::size_t out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
    std::size_t positions() const { return out_h() * out_w(); }
    std::size_t patch() const { return in_c * kh * kw; }
    std::size_t in_size() const { return in_c * in_h * in_w; }

    /// Source index in the flat input for patch row r and position p,
    /// or npos when the tap falls into the zero padding.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t source_index(std::size_t r, std::size_t p) const {
        const std::size_t c = r / (kh * kw);
        const std::size_t ky = (r / kw) % kh;
        const std::size_t kx = r % kw;
        const std::size_t oy = p / out_w();
        const std::size_t ox = p % out_w();
        const long y = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        const long x = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
        if (y < 0 || x < 0 || y >= static_cast<long>(in_h) || x >= static_cast<long>(in_w))
            return npos;
        return (c * in_h + static_cast<std::size_t>(y)) * in_w + static_cast<std::size_t>(x);
    }
};

/// Flat image {c*h*w, 1} -> patch matrix {c*kh*kw, out_h*out_w}.
inline Tensor im2col(const Tensor& flat, const ConvGeom& g) {
    if (flat.size() != g.in_size())
        throw DimensionError("im2col: input size " + std::to_string(flat.size()) +
                             " does not match geometry " + std::to_string(g.in_size()));
    const std::size_t R = g.patch(), P = g.positions();
    Tensor cols({R, P});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t s = g.source_index(r, p);
            cols[r * P + p] = (s == ConvGeom::npos) ? 0.0 : flat[s];
        }
    return cols;
}

/// Adjoint of im2col: scatter-add patch matrix back to a flat image.
inline Tensor col2im(const Tensor& cols, const ConvGeom& g) {
    const std::size_t R = g.patch(), P = g.positions();
    if (cols.shape().size() != 2 || cols.shape()[0] != R || cols.shape()[1] != P)
        throw DimensionError("col2im: expected " + shape_str({R, P}) + ", got " +
                             shape_str(cols.shape()));
    Tensor flat({g.in_size(), 1});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t s = g.source_index(r, p);
            if (s != ConvGeom::npos) flat[s] += cols[r * P + p];
        }
    return flat;
}

inline Tensor reshape(const Tensor& a, Shape shape) { return a.reshaped(std::move(shape)); }

/// Entry i as a 1x1 tensor.
inline Tensor index_scalar(const Tensor& t, std::size_t i) {
    if (i >= t.size()) throw ContractError("index_scalar: index out of range");
    return Tensor::scalar(t[i]);
}

/// Stack scalar tensors into a column {m,1}.
inline Tensor stack(const std::vector<Tensor>& xs) {
    Tensor out({xs.size(), 1});
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i].item();
    return out;
}

// Carrier helpers: templates over "Tensor or autodiff variable" use these to
// read values and to inject constants.
inline const Tensor& value_of(const Tensor& t) { return t; }
inline Tensor make_const(const Tensor& /*exemplar*/, Tensor v) { return v; }

} // namespace gradcert

#endif // GRADCERT_TENSOR_HPP
