// Test-only reference implementations. These stay independent of the library
// code paths they check: plain loops over raw indices, no shared helpers.
#ifndef GRADCERT_TESTS_ORACLES_HPP
#define GRADCERT_TESTS_ORACLES_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "gradcert/bounds.hpp"
#include "gradcert/network.hpp"
#include "gradcert/random.hpp"
#include "gradcert/tensor.hpp"

namespace oracles {

using gradcert::Network;
using gradcert::Rng;
using gradcert::Shape;
using gradcert::Tensor;

/// Naive ijt triple loop matrix product.
inline Tensor matmul_naive(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
            c[i * n + j] = s;
        }
    return c;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Central finite differences of a scalar function w.r.t. every entry of x.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                double h = 1e-5) {
    Tensor g(x.shape());
    Tensor xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        xp[i] = orig + h;
        const double fp = f(xp);
        xp[i] = orig - h;
        const double fm = f(xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Worst relative error between two gradients, with a floor on the scale.
inline double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    }
    return worst;
}

/// Per-neuron scalar evaluation of a dense-only network; independent of the
/// library's matmul and cache machinery.
inline std::vector<double> forward_scalar_loops(const Network& net, const std::vector<double>& x) {
    std::vector<double> cur = x;
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const auto& L = net.layer(k);
        if (L.is_flatten()) continue;
        std::vector<double> nxt(L.out_size, 0.0);
        for (std::size_t i = 0; i < L.out_size; ++i) {
            double s = L.b[i];
            for (std::size_t j = 0; j < L.in_size; ++j) s += L.W[i * L.in_size + j] * cur[j];
            switch (L.activation) {
                case gradcert::Activation::ReLU: s = s > 0 ? s : 0; break;
                case gradcert::Activation::Softplus:
                    s = s > 36 ? s : std::log1p(std::exp(s));
                    break;
                case gradcert::Activation::Sigmoid: s = 1.0 / (1.0 + std::exp(-s)); break;
                case gradcert::Activation::Tanh: s = std::tanh(s); break;
                case gradcert::Activation::Identity: break;
            }
            nxt[i] = s;
        }
        cur = nxt;
    }
    return cur;
}

/// Direct sliding-window convolution of a (c,h,w) image, zero padded.
inline std::vector<double> conv2d_direct(const std::vector<double>& img, std::size_t c,
                                         std::size_t h, std::size_t w, const Tensor& W,
                                         const Tensor& b, std::size_t filters, std::size_t kh,
                                         std::size_t kw, std::size_t stride, std::size_t pad) {
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> out(filters * oh * ow, 0.0);
    for (std::size_t f = 0; f < filters; ++f)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double s = b[f];
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long y = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                            const long x = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w))
                                continue;
                            const double pix = img[(ci * h + y) * w + x];
                            const double wgt = W[f * (c * kh * kw) + (ci * kh + ky) * kw + kx];
                            s += pix * wgt;
                        }
                out[(f * oh + oy) * ow + ox] = s;
            }
    return out;
}

/// Random small dense network for property tests.
inline Network random_dense_net(Rng& rng, std::size_t in, std::vector<std::size_t> widths,
                                gradcert::Activation act, std::size_t out,
                                double weight_scale = 1.0) {
    Network net(Shape{in});
    for (std::size_t wd : widths) net.add_dense(wd, act);
    net.add_dense(out, gradcert::Activation::Identity);
    gradcert::init_parameters(net, rng, weight_scale);
    return net;
}

/// Sample theta' with each parameter p' = p + u * gamma * |p|, u ~ U[-1,1].
inline Network perturb_network(const Network& net, Rng& rng, double gamma) {
    Network out = net;
    for (std::size_t k = 0; k < out.layer_count(); ++k) {
        auto& L = out.layer(k);
        if (!L.has_params()) continue;
        for (std::size_t i = 0; i < L.W.size(); ++i)
            L.W[i] += rng.uniform(-1, 1) * gamma * std::fabs(L.W[i]);
        for (std::size_t i = 0; i < L.b.size(); ++i)
            L.b[i] += rng.uniform(-1, 1) * gamma * std::fabs(L.b[i]);
    }
    return out;
}

/// Sample x' uniformly inside a realized input region.
inline Tensor sample_in_region(const gradcert::InputRegion& T, Rng& rng) {
    gradcert::IntervalMatrix box = T.realize();
    Tensor x(box.lo.shape());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    return x;
}

} // namespace oracles

#endif
