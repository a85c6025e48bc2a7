#include <doctest.h>

#include "gradcert/train.hpp"
#include "oracles.hpp"

using namespace gradcert;

namespace {
Dataset tiny_moons(std::size_t n = 120, std::uint64_t seed = 5) {
    return half_moons(n, 0.08, seed);
}

bool params_equal(const Network& a, const Network& b) {
    for (std::size_t k = 0; k < a.layer_count(); ++k) {
        if (!a.layer(k).has_params()) continue;
        for (std::size_t i = 0; i < a.layer(k).W.size(); ++i)
            if (a.layer(k).W[i] != b.layer(k).W[i]) return false;
        for (std::size_t i = 0; i < a.layer(k).b.size(); ++i)
            if (a.layer(k).b[i] != b.layer(k).b[i]) return false;
    }
    return true;
}

Network moon_net(std::uint64_t seed) {
    Rng rng(seed);
    Network net(Shape{2});
    net.add_dense(16, Activation::ReLU).add_dense(16, Activation::ReLU).add_dense(2, Activation::Identity);
    init_parameters(net, rng);
    return net;
}
} // namespace

TEST_CASE("grad_cert_regularizer: spec examples") {
    Rng rng(3);
    Network net = oracles::random_dense_net(rng, 4, {6}, Activation::Softplus, 3);
    Tensor x = oracles::random_tensor(rng, {4});

    // singleton region -> D ~ 0
    CHECK(grad_cert_regularizer(net, x, 0.0, 0.0, LossSpec::cross_entropy(0)) <= 1e-9);

    // linear net + logit seed + gamma_t = 0 -> D = 0 for any eps_t
    Network lin(Shape{4});
    lin.add_dense(2, Activation::Identity);
    init_parameters(lin, rng);
    CHECK(grad_cert_regularizer(lin, x, 0.73, 0.0, LossSpec::class_logit(1)) == 0.0);

    CHECK_THROWS_AS(grad_cert_regularizer(net, x, -0.1, 0.0, LossSpec::cross_entropy(0)),
                    ContractError);
}

TEST_CASE("composite_loss: alpha = 0 equals the plain loss bit for bit") {
    Dataset ds = tiny_moons(32);
    Network net = moon_net(1);

    TrainConfig plain;
    plain.seed = 9;
    TrainConfig zero_alpha = plain;
    zero_alpha.regularizer = GradCertReg{0.0, 0.1, 0.05};
    TrainConfig zero_radius = plain;
    zero_radius.regularizer = GradCertReg{0.7, 0.0, 0.0};

    const double base = composite_loss(net, ds, plain);
    CHECK(composite_loss(net, ds, zero_alpha) == base);
    CHECK(composite_loss(net, ds, zero_radius) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("composite_loss: GNorm inner maximizer beats the clean point") {
    Dataset ds = tiny_moons(8);
    Rng rng(7);
    Network net(Shape{2});
    net.add_dense(10, Activation::Softplus).add_dense(2, Activation::Identity);
    init_parameters(net, rng);

    TrainConfig plain;
    TrainConfig gnorm;
    gnorm.regularizer = GNormReg{1.0, 0.15, 10};
    // zero-step baseline: the inner term at the clean point is exactly 0
    TrainConfig gnorm0;
    gnorm0.regularizer = GNormReg{1.0, 0.15, 0};

    const double with_inner = composite_loss(net, ds, gnorm);
    const double at_clean = composite_loss(net, ds, gnorm0);
    CHECK(at_clean == doctest::Approx(composite_loss(net, ds, plain)).epsilon(1e-12));
    CHECK(with_inner >= at_clean - 1e-12);
    CHECK(with_inner > at_clean + 1e-9); // maximization made progress
}

TEST_CASE("fit: learns half moons and reproduces bitwise under a seed") {
    Dataset ds = tiny_moons(200, 11);
    auto [train_ds, test_ds] = train_test_split(ds, 0.8, 2);

    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 32;
    cfg.seed = 4;
    cfg.optimizer = AdamConfig{1e-2};
    cfg.probe_size = 10;

    Network a = moon_net(20);
    TrainReport ra = fit(a, train_ds, cfg, &test_ds);
    CHECK(ra.epochs.size() == cfg.epochs);
    CHECK(ra.epochs.back().test_accuracy >= 0.9);
    CHECK(ra.epochs.back().train_loss < ra.epochs.front().train_loss);

    Network b = moon_net(20);
    TrainReport rb = fit(b, train_ds, cfg, &test_ds);
    CHECK(params_equal(a, b));
    CHECK(ra.epochs.back().train_loss == rb.epochs.back().train_loss);
}

TEST_CASE("fit: alpha = 0 GradCert run equals the plain run exactly") {
    Dataset ds = tiny_moons(80);
    TrainConfig plain;
    plain.epochs = 6;
    plain.batch_size = 16;
    plain.seed = 13;
    TrainConfig zero = plain;
    zero.regularizer = GradCertReg{0.0, 0.1, 0.1};

    Network a = moon_net(31);
    Network b = moon_net(31);
    fit(a, ds, plain);
    fit(b, ds, zero);
    CHECK(params_equal(a, b));
}

TEST_CASE("fit: GradCert with zero radii matches plain training to tolerance") {
    Dataset ds = tiny_moons(80);
    TrainConfig plain;
    plain.epochs = 5;
    plain.batch_size = 16;
    plain.seed = 17;
    TrainConfig gc = plain;
    gc.regularizer = GradCertReg{0.5, 0.0, 0.0};

    Network a = moon_net(41);
    Network b = moon_net(41);
    fit(a, ds, plain);
    TrainReport r = fit(b, ds, gc);
    CHECK(r.epochs.back().regularizer_value <= 1e-9);
    for (std::size_t k = 0; k < a.layer_count(); ++k)
        for (std::size_t i = 0; i < a.layer(k).W.size(); ++i)
            CHECK(a.layer(k).W[i] == doctest::Approx(b.layer(k).W[i]).epsilon(1e-9));
}

TEST_CASE("fit: GradCert shrinks the probe fragility vs standard training") {
    Dataset ds = half_moons(400, 0.06, 23);
    auto [train_ds, test_ds] = train_test_split(ds, 0.8, 3);

    auto make_net = [] {
        Rng rng(51);
        Network net(Shape{2});
        net.add_dense(16, Activation::Tanh)
            .add_dense(16, Activation::Tanh)
            .add_dense(2, Activation::Identity);
        init_parameters(net, rng);
        return net;
    };

    TrainConfig plain;
    plain.epochs = 80;
    plain.batch_size = 32;
    plain.seed = 5;
    plain.optimizer = AdamConfig{1e-2};
    plain.probe_size = 20;
    plain.probe_eps = 0.05;

    TrainConfig gc = plain;
    gc.regularizer = GradCertReg{1.0, 0.05, 0.0, BoundSeed::ClassLogit};

    Network a = make_net();
    Network b = make_net();
    TrainReport rp = fit(a, train_ds, plain, &test_ds);
    TrainReport rg = fit(b, train_ds, gc, &test_ds);
    CHECK(rg.epochs.back().probe_delta_sum * 10 < rp.epochs.back().probe_delta_sum);
    CHECK(rg.epochs.back().test_accuracy >= 0.8);
}

TEST_CASE("fit: other regularizers run and train") {
    Dataset ds = tiny_moons(60);
    for (Regularizer reg : {Regularizer{L2NoiseReg{0.1, 0.05}}, Regularizer{GNormReg{0.1, 0.05, 3}},
                            Regularizer{GSumNormReg{0.05, 3}}, Regularizer{PGDAdvReg{0.05, 3}}}) {
        Network net(Shape{2});
        Rng rng(61);
        net.add_dense(8, Activation::Softplus).add_dense(2, Activation::Identity);
        init_parameters(net, rng);
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.batch_size = 16;
        cfg.seed = 19;
        cfg.regularizer = reg;
        cfg.probe_size = 0;
        TrainReport r = fit(net, ds, cfg);
        CHECK(r.epochs.size() == 3);
        for (const auto& e : r.epochs) CHECK(std::isfinite(e.train_loss));
    }
}

TEST_CASE("fit: divergence raises a diagnostic error") {
    Dataset ds = tiny_moons(40);
    Rng rng(71);
    Network net(Shape{2});
    net.add_dense(8, Activation::Identity).add_dense(2, Activation::Identity);
    init_parameters(net, rng);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 8;
    cfg.optimizer = SGDConfig{1e10, 0.0};
    CHECK_THROWS_WITH_AS(fit(net, ds, cfg), doctest::Contains("diverged"), Error);
}

TEST_CASE("ramp schedule") {
    Ramp r = Ramp::linear(0.5);
    CHECK(r.factor(0, 10) == doctest::Approx(0.2));
    CHECK(r.factor(4, 10) == doctest::Approx(1.0));
    CHECK(r.factor(9, 10) == 1.0);
    CHECK(Ramp::none().factor(0, 10) == 1.0);
    CHECK_THROWS_AS(Ramp::linear(0.0), ContractError);

    // warmup holds the radii at zero, then ramps linearly
    Ramp w = Ramp::linear(0.5, 0.3);
    CHECK(w.factor(0, 10) == 0.0);
    CHECK(w.factor(2, 10) == 0.0);
    CHECK(w.factor(3, 10) == doctest::Approx(0.2));
    CHECK(w.factor(7, 10) == doctest::Approx(1.0));
    CHECK_THROWS_AS(Ramp::linear(0.5, 1.0), ContractError);
}

TEST_CASE("gradient_dispersion: zero for linear nets") {
    Rng rng(81);
    Network lin(Shape{2});
    lin.add_dense(2, Activation::Identity);
    init_parameters(lin, rng);
    CHECK(gradient_dispersion(lin, 8) == doctest::Approx(0.0));

    Network bent = moon_net(91);
    CHECK(gradient_dispersion(bent, 8) > 0.0);
}
