#include <doctest.h>

#include "gradcert/tensor.hpp"
#include "oracles.hpp"

using namespace gradcert;

TEST_CASE("matmul identity and hand products") {
    Tensor I = Tensor::matrix({{1, 0}, {0, 1}});
    Tensor v = Tensor::matrix({{3}, {4}});
    Tensor r = matmul(I, v);
    CHECK(r.shape() == Shape{2, 1});
    CHECK(r[0] == 3.0);
    CHECK(r[1] == 4.0);

    Tensor a = Tensor::matrix({{1, 2}});
    Tensor b = Tensor::matrix({{3}, {4}});
    CHECK(matmul(a, b).item() == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor a = oracles::random_tensor(rng, {3, 3}, -2, 2);
        Tensor b = oracles::random_tensor(rng, {3, 3}, -2, 2);
        Tensor got = matmul(a, b);
        Tensor want = oracles::matmul_naive(a, b);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3});
    Tensor b({2, 2});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("2x2") != std::string::npos);
    }
}

TEST_CASE("matmul is bit-deterministic") {
    Rng rng(7);
    Tensor a = oracles::random_tensor(rng, {5, 4});
    Tensor b = oracles::random_tensor(rng, {4, 6});
    Tensor r1 = matmul(a, b);
    Tensor r2 = matmul(a, b);
    for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("elementwise examples") {
    Tensor x = Tensor::column({-2, 0, 3});
    Tensor ax = abs(x);
    CHECK(ax[0] == 2.0);
    CHECK(ax[1] == 0.0);
    CHECK(ax[2] == 3.0);

    CHECK(softplus(Tensor::scalar(0)).item() == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5);

    // large-x saturation keeps softplus finite and ~x
    CHECK(softplus(Tensor::scalar(900)).item() == 900.0);
    CHECK(softplus(Tensor::scalar(-900)).item() == doctest::Approx(0.0));

    Tensor y = Tensor::column({1, 2, 3});
    CHECK_THROWS_AS(add(x, Tensor::column({1, 2})), DimensionError);
    Tensor s = add(x, y);
    CHECK(s[0] == -1.0);
    CHECK(sub(y, x)[0] == 3.0);
    CHECK(mul(x, y)[2] == 9.0);
    CHECK(emax(x, y)[0] == 1.0);
    CHECK(emin(x, y)[0] == -2.0);
    CHECK(neg(x)[0] == 2.0);
    CHECK(relu(x)[0] == 0.0);
    CHECK(relu(x)[2] == 3.0);
    CHECK(scale(x, 2.0)[2] == 6.0);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), DimensionError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
    CHECK_THROWS_AS(t.item(), ContractError);
    CHECK_THROWS_AS(t.reshaped({5}), DimensionError);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.shape() == Shape{3, 2});
}

TEST_CASE("softmax, onehot, argmax") {
    Tensor z = Tensor::column({1, 3, 2});
    CHECK(argmax(z) == 1);
    Tensor tie = Tensor::column({2, 2});
    CHECK(argmax(tie) == 0); // ties break low

    Tensor sm = softmax(Tensor::column({0, 0}));
    CHECK(sm[0] == doctest::Approx(0.5));

    // stability for huge logits
    Tensor big = softmax(Tensor::column({1000, 999}));
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

    CHECK_THROWS_AS(onehot(3, 3), ContractError);
}

TEST_CASE("im2col/col2im adjoint pair") {
    // <im2col(x), y> == <x, col2im(y)> for random x, y (linear map adjointness)
    Rng rng(11);
    ConvGeom g{2, 4, 4, 3, 3, 1, 1};
    Tensor x = oracles::random_tensor(rng, {g.in_size(), 1});
    Tensor y = oracles::random_tensor(rng, {g.patch(), g.positions()});
    double lhs = dot(im2col(x, g), y);
    double rhs = dot(x, col2im(y, g));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("transpose and reductions") {
    Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    Tensor t = transpose(a);
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at(2, 1) == 6.0);
    CHECK(sum(a).item() == 21.0);
    CHECK(bcast(Tensor::scalar(2.5), {2, 2})[3] == 2.5);
}
