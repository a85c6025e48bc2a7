#include <doctest.h>

#include <chrono>

#include "gradcert/bounds.hpp"
#include "oracles.hpp"

using namespace gradcert;

TEST_CASE("forward_bounds: point regions reproduce the forward pass") {
    Rng rng(12);
    Network net = oracles::random_dense_net(rng, 5, {7, 6}, Activation::ReLU, 3);
    Tensor x = oracles::random_tensor(rng, {5});

    ForwardBounds fb = forward_bounds(net, InputRegion::uniform(x, 0.0), ModelRegion(0.0));
    ForwardCache exact = forward(net, x);
    for (std::size_t k = 0; k < net.layer_count(); ++k)
        for (std::size_t i = 0; i < exact.z[k].size(); ++i) {
            CHECK(std::fabs(fb.cache.z[k].lo[i] - exact.z[k][i]) < 1e-12);
            CHECK(std::fabs(fb.cache.z[k].hi[i] - exact.z[k][i]) < 1e-12);
        }
}

TEST_CASE("forward_bounds: identity net propagates the input box") {
    Network id(Shape{3});
    id.add_dense(3, Activation::Identity);
    id.layer(0).W = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    Tensor x = Tensor::column({0.2, 0.5, 0.9});
    ForwardBounds fb = forward_bounds(id, InputRegion::uniform(x, 0.1), ModelRegion(0.0));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(fb.output().lo[i] == doctest::Approx(x[i] - 0.1));
        CHECK(fb.output().hi[i] == doctest::Approx(x[i] + 0.1));
    }
}

TEST_CASE("forward_bounds caches contain Monte-Carlo activations") {
    Rng rng(99);
    for (int rep = 0; rep < 3; ++rep) {
        Network net = oracles::random_dense_net(
            rng, 4, {6}, rep % 2 ? Activation::ReLU : Activation::Softplus, 3);
        Tensor x = oracles::random_tensor(rng, {4}, 0.1, 0.9);
        InputRegion T = InputRegion::uniform(x, 0.05);
        ForwardBounds fb = forward_bounds(net, T, ModelRegion(0.05));
        for (int s = 0; s < 1000; ++s) {
            Tensor xs = oracles::sample_in_region(T, rng);
            Network ns = oracles::perturb_network(net, rng, 0.05);
            ForwardCache c = forward(ns, xs);
            for (std::size_t k = 0; k < net.layer_count(); ++k)
                for (std::size_t i = 0; i < c.z[k].size(); ++i) {
                    CHECK(c.z[k][i] >= fb.cache.z[k].lo[i] - 1e-9);
                    CHECK(c.z[k][i] <= fb.cache.z[k].hi[i] + 1e-9);
                }
        }
    }
}

TEST_CASE("backward_bounds: singleton regions give the exact gradient") {
    Rng rng(31);
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::ClassLogit}) {
        Network net = oracles::random_dense_net(rng, 5, {8}, Activation::Softplus, 4);
        Tensor x = oracles::random_tensor(rng, {5});
        LossSpec loss = (kind == LossKind::CrossEntropy) ? LossSpec::cross_entropy(1)
                                                         : LossSpec::class_logit(2);
        GradientBox box = explanation_bounds(net, x, 0.0, 0.0, loss);
        CHECK(box.delta_max() <= 1e-9);
        Tensor v = input_gradient(net, x, loss);
        Tensor c = box.center();
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(c[i] - v[i]) < 1e-9);
    }
}

TEST_CASE("backward_bounds: linear net with ClassLogit seed has zero fragility") {
    Rng rng(32);
    Network net(Shape{4});
    net.add_dense(3, Activation::Identity);
    init_parameters(net, rng);
    Tensor x = oracles::random_tensor(rng, {4});
    GradientBox box = explanation_bounds(net, x, 0.37, 0.0, LossSpec::class_logit(1));
    CHECK(box.delta_max() == 0.0);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(box.v_lower[j] == doctest::Approx(net.layer(0).W.at(1, j)));
}

TEST_CASE("gradient box soundness: Monte-Carlo containment") {
    Rng rng(512);
    for (int rep = 0; rep < 4; ++rep) {
        Activation act = rep % 2 ? Activation::ReLU : Activation::Softplus;
        Network net = oracles::random_dense_net(rng, 4, {6, 5}, act, 3);
        Tensor x = oracles::random_tensor(rng, {4});
        LossSpec loss = LossSpec::cross_entropy(rep % 3);
        InputRegion T = InputRegion::uniform(x, 0.05);
        ModelRegion M(0.05);
        GradientBox box = explanation_bounds(net, T, M, loss);
        for (int s = 0; s < 1000; ++s) {
            Tensor xs = oracles::sample_in_region(T, rng);
            Network ns = oracles::perturb_network(net, rng, 0.05);
            Tensor v = input_gradient(ns, xs, loss).reshaped(box.v_lower.shape());
            CHECK(box.contains(v, 1e-9));
        }
    }
}

TEST_CASE("gradient box soundness for conv networks") {
    Rng rng(613);
    Network net(Shape{1, 4, 4});
    net.add_conv2d(2, 3, 3, 1, 1, Activation::Softplus);
    net.add_flatten();
    net.add_dense(3, Activation::Identity);
    init_parameters(net, rng);
    Tensor x = oracles::random_tensor(rng, {1, 4, 4}, 0.1, 0.9);
    InputRegion T = InputRegion::uniform(x, 0.03);
    ModelRegion M(0.03);
    LossSpec loss = LossSpec::cross_entropy(0);
    GradientBox box = explanation_bounds(net, T, M, loss);
    for (int s = 0; s < 300; ++s) {
        Tensor xs = oracles::sample_in_region(T, rng);
        Network ns = oracles::perturb_network(net, rng, 0.03);
        Tensor v = input_gradient(ns, xs.reshaped({1, 4, 4}), loss);
        CHECK(box.contains(v.reshaped(box.v_lower.shape()), 1e-9));
    }
}

TEST_CASE("inclusion monotonicity in eps and gamma") {
    Rng rng(88);
    for (int rep = 0; rep < 10; ++rep) {
        Activation act = rep % 2 ? Activation::ReLU : Activation::Tanh;
        Network net = oracles::random_dense_net(rng, 4, {5}, act, 3);
        Tensor x = oracles::random_tensor(rng, {4});
        LossSpec loss = LossSpec::cross_entropy(0);
        GradientBox inner = explanation_bounds(net, x, 0.01, 0.01, loss);
        GradientBox outer = explanation_bounds(net, x, 0.02, 0.02, loss);
        CHECK(inner.inside(outer, 1e-12));
    }
}

TEST_CASE("domain clipping bounds the region") {
    Network id(Shape{2});
    id.add_dense(2, Activation::Identity);
    id.layer(0).W = Tensor::matrix({{1, 0}, {0, 1}});
    Tensor x = Tensor::column({0.95, 0.05});
    InputRegion T = InputRegion::uniform_clipped(x, 0.2, 0.0, 1.0);
    IntervalMatrix box = T.realize();
    CHECK(box.hi[0] == 1.0);
    CHECK(box.lo[0] == doctest::Approx(0.75));
    CHECK(box.lo[1] == 0.0);
}

TEST_CASE("logit_bounds_margin examples") {
    // hand-made output boxes via an identity network
    Network id(Shape{2});
    id.add_dense(2, Activation::Identity);
    id.layer(0).W = Tensor::matrix({{1, 0}, {0, 1}});

    // class-0 logit in [2,3], class-1 in [0,1] -> certified
    InputRegion T1 = InputRegion::uniform(Tensor::column({2.5, 0.5}), 0.5);
    CHECK(logit_bounds_margin(id, T1, ModelRegion(0.0), 0));

    // class-0 in [0,3], class-1 in [1,2] -> overlap, not certified
    InputRegion T2{Tensor::column({1.5, 1.5}), Tensor::column({1.5, 0.5}), std::nullopt};
    CHECK_FALSE(logit_bounds_margin(id, T2, ModelRegion(0.0), 0));

    // point region: equals plain prediction comparison
    Rng rng(5);
    Network net = oracles::random_dense_net(rng, 3, {4}, Activation::ReLU, 3);
    Tensor x = oracles::random_tensor(rng, {3});
    std::size_t c = predict(net, x);
    CHECK(logit_bounds_margin(net, InputRegion::uniform(x, 0.0), ModelRegion(0.0), c));
}

TEST_CASE("sum(delta) is differentiable w.r.t. theta (finite-difference check)") {
    Rng rng(21);
    Network net = oracles::random_dense_net(rng, 3, {4}, Activation::Softplus, 2);
    Tensor x = oracles::random_tensor(rng, {3});
    LossSpec loss = LossSpec::cross_entropy(0);
    const double eps_t = 0.05, gamma_t = 0.05;

    Tape tape;
    TapeNet tn = bind_network(tape, net, true);
    Var D = grad_cert_regularizer_expr(net, tn, tape, flatten_input(net, x), eps_t, gamma_t, loss);
    CHECK(D.value().item() == doctest::Approx(grad_cert_regularizer(net, x, eps_t, gamma_t, loss))
                                  .epsilon(1e-12));
    tape.backward(D);

    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        Tensor gW = tape.adjoint(tn.W(k));
        Tensor fd = oracles::finite_difference(
            [&](const Tensor& W) {
                Network n2 = net;
                n2.layer(k).W = W;
                return grad_cert_regularizer(n2, x, eps_t, gamma_t, loss);
            },
            net.layer(k).W, 1e-6);
        CHECK(oracles::max_rel_err(gW, fd, 1e-4) < 1e-3);
    }
}

TEST_CASE("corner-exact propagation tightens but stays sound") {
    Rng rng(2200);
    for (int rep = 0; rep < 3; ++rep) {
        Network net = oracles::random_dense_net(rng, 4, {6}, Activation::Softplus, 3);
        Tensor x = oracles::random_tensor(rng, {4}, 0.1, 0.9);
        LossSpec loss = LossSpec::cross_entropy(0);
        InputRegion T = InputRegion::uniform(x, 0.05);

        BoundNetwork loose = make_bound_network(net, ModelRegion(0.05), false);
        BoundNetwork tight = make_bound_network(net, ModelRegion(0.05), true);
        GradientBox lb = explanation_bounds(loose, T, loss);
        GradientBox tb = explanation_bounds(tight, T, loss);

        CHECK(tb.inside(lb, 1e-12));
        CHECK(tb.delta_sum() <= lb.delta_sum() + 1e-12);
        for (int s = 0; s < 300; ++s) {
            Tensor xs = oracles::sample_in_region(T, rng);
            Network ns = oracles::perturb_network(net, rng, 0.05);
            Tensor v = input_gradient(ns, xs, loss).reshaped(tb.v_lower.shape());
            CHECK(tb.contains(v, 1e-9));
        }
    }
}

TEST_CASE("explanation_bounds costs at most 6x a forward+backward pass") {
    Rng rng(3000);
    Network net = oracles::random_dense_net(rng, 256, {256, 256}, Activation::ReLU, 10);
    LossSpec loss = LossSpec::cross_entropy(0);
    std::vector<Tensor> xs;
    for (int i = 0; i < 20; ++i) xs.push_back(oracles::random_tensor(rng, {256}));

    using clock = std::chrono::steady_clock;
    auto time_best_of = [&](auto&& fn, int reps) {
        double best = 1e300;
        for (int r = 0; r < reps; ++r) {
            auto t0 = clock::now();
            fn();
            auto t1 = clock::now();
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        return best;
    };

    double sink = 0;
    double base = time_best_of(
        [&] {
            for (const Tensor& x : xs) sink += input_gradient(net, x, loss)[0];
        },
        5);
    BoundNetwork bn = make_bound_network(net, ModelRegion(0.01));
    double bound = time_best_of(
        [&] {
            for (const Tensor& x : xs)
                sink += explanation_bounds(bn, InputRegion::uniform(x, 0.01), loss).delta_sum();
        },
        5);
    INFO("forward+backward " << base << "s, bounds " << bound << "s, ratio " << bound / base
                             << " sink " << sink);
    CHECK(bound / base <= 6.0);
}
