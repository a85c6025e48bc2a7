#include <doctest.h>

#include "gradcert/autodiff.hpp"
#include "oracles.hpp"

using namespace gradcert;

TEST_CASE("backward: sum of squares and abs examples") {
    Tape tape;
    Var W = tape.leaf(Tensor::matrix({{1, 2}}));
    Var root = sum(mul(W, W));
    tape.backward(root);
    const Tensor& g = tape.adjoint(W);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 4.0);

    Tape t2;
    Var V = t2.leaf(Tensor::matrix({{-3, 0, 2}}));
    t2.backward(sum(abs(V)));
    const Tensor& g2 = t2.adjoint(V);
    CHECK(g2[0] == -1.0);
    CHECK(g2[1] == 0.0); // abs'(0) = 0 by convention
    CHECK(g2[2] == 1.0);
}

TEST_CASE("backward requires a scalar root") {
    Tape tape;
    Var W = tape.leaf(Tensor::column({1, 2}));
    CHECK_THROWS_AS(tape.backward(W), ContractError);
}

TEST_CASE("replaying backward twice yields identical adjoints") {
    Rng rng(3);
    Tape tape;
    Var a = tape.leaf(oracles::random_tensor(rng, {3, 3}));
    Var b = tape.leaf(oracles::random_tensor(rng, {3, 3}));
    Var root = sum(mul(softplus(matmul(a, b)), sigmoid(sub(a, b))));
    tape.backward(root);
    Tensor g1 = tape.adjoint(a);
    tape.backward(root);
    Tensor g2 = tape.adjoint(a);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

namespace {

// FD check of one recorded primitive: builds root = sum(op(x) .* m) for a
// random constant m so every output entry gets a distinct adjoint.
void check_primitive(const char* name, const std::function<Var(Var)>& op, const Tensor& x0,
                     double tol = 1e-5) {
    Rng rng(99);
    Tensor m = oracles::random_tensor(rng, {0, 0});

    auto eval = [&](const Tensor& x, const Tensor& mask) {
        Tape tape;
        Var xv = tape.leaf(x);
        Var y = op(xv);
        Var root = sum(mul(y, tape.constant(mask)));
        return std::pair<double, Tensor>{root.value().item(), Tensor()};
    };

    Tape tape;
    Var xv = tape.leaf(x0);
    Var y = op(xv);
    Tensor mask = oracles::random_tensor(rng, y.value().shape());
    Var root = sum(mul(y, tape.constant(mask)));
    tape.backward(root);
    Tensor analytic = tape.adjoint(xv);

    Tensor fd = oracles::finite_difference(
        [&](const Tensor& x) {
            Tape t;
            Var v = t.leaf(x);
            return sum(mul(op(v), t.constant(mask))).value().item();
        },
        x0);
    double err = oracles::max_rel_err(analytic, fd);
    INFO(name << " max rel err " << err);
    CHECK(err < tol);
    (void)eval;
}

} // namespace

TEST_CASE("adjoints of every primitive match finite differences") {
    Rng rng(17);
    // stay away from kinks (0 for abs/relu/step ties) by at least 1e-3
    auto away = [&](Shape s) {
        Tensor t = oracles::random_tensor(rng, std::move(s), 0.2, 1.5);
        for (std::size_t i = 0; i < t.size(); ++i)
            if (rng.uniform() < 0.5) t[i] = -t[i];
        return t;
    };
    Tensor x = away({3, 2});

    check_primitive("softplus", [](Var v) { return softplus(v); }, x);
    check_primitive("sigmoid", [](Var v) { return sigmoid(v); }, x);
    check_primitive("tanh", [](Var v) { return tanh(v); }, x);
    check_primitive("exp", [](Var v) { return exp(v); }, x);
    check_primitive("abs", [](Var v) { return abs(v); }, x);
    check_primitive("relu", [](Var v) { return relu(v); }, x);
    check_primitive("neg", [](Var v) { return neg(v); }, x);
    check_primitive("scale", [](Var v) { return scale(v, -1.7); }, x);
    check_primitive("add_scalar", [](Var v) { return add_scalar(v, 0.3); }, x);
    check_primitive("transpose", [](Var v) { return transpose(v); }, x);
    check_primitive("reshape", [](Var v) { return reshape(v, {2, 3}); }, x);

    Tensor xpos = oracles::random_tensor(rng, {3, 2}, 0.5, 2.0);
    check_primitive("log", [](Var v) { return log(v); }, xpos);

    Rng rng2(5);
    Tensor other = oracles::random_tensor(rng2, {3, 2}, 0.2, 1.3);
    check_primitive("add", [&](Var v) { return add(v, v.tape().constant(other)); }, x);
    check_primitive("sub", [&](Var v) { return sub(v, v.tape().constant(other)); }, x);
    check_primitive("mul", [&](Var v) { return mul(v, v.tape().constant(other)); }, x);
    check_primitive("div", [&](Var v) { return div(v, v.tape().constant(other)); }, x);
    check_primitive("emax", [&](Var v) { return emax(v, v.tape().constant(other)); }, x);
    check_primitive("emin", [&](Var v) { return emin(v, v.tape().constant(other)); }, x);

    Tensor mleft = oracles::random_tensor(rng2, {4, 3});
    check_primitive("matmul_r", [&](Var v) { return matmul(v.tape().constant(mleft), v); }, x);
    Tensor mright = oracles::random_tensor(rng2, {2, 4});
    check_primitive("matmul_l", [&](Var v) { return matmul(v, v.tape().constant(mright)); }, x);

    check_primitive("sum+bcast", [](Var v) { return bcast(sum(v), {3, 3}); }, x);

    ConvGeom g{1, 3, 2, 2, 2, 1, 1};
    Tensor ximg = away({g.in_size(), 1});
    check_primitive("im2col", [&](Var v) { return im2col(v, g); }, ximg);
    Tensor xcols = away({g.patch(), g.positions()});
    check_primitive("col2im", [&](Var v) { return col2im(v, g); }, xcols);
}

TEST_CASE("composite graph matches finite differences") {
    Rng rng(23);
    Tensor a0 = oracles::random_tensor(rng, {2, 3}, -1, 1);
    Tensor b0 = oracles::random_tensor(rng, {3, 2}, -1, 1);

    auto build = [](Tape& tape, const Tensor& a, const Tensor& b, Var* av_out) {
        Var av = tape.leaf(a);
        Var bv = tape.leaf(b);
        Var p = matmul(av, bv);
        Var r = mul(softplus(p), sigmoid(p));
        if (av_out) *av_out = av;
        return sum(r);
    };

    Tape tape;
    Var av;
    Var root = build(tape, a0, b0, &av);
    tape.backward(root);
    Tensor ga = tape.adjoint(av);
    Tensor fd = oracles::finite_difference(
        [&](const Tensor& a) {
            Tape t;
            return build(t, a, b0, nullptr).value().item();
        },
        a0);
    CHECK(oracles::max_rel_err(ga, fd) < 1e-5);
}

TEST_CASE("step has zero gradient") {
    Tape tape;
    Var x = tape.leaf(Tensor::column({0.5, -0.5}));
    tape.backward(sum(mul(step(x), x.tape().constant(Tensor::column({3, 4})))));
    const Tensor& g = tape.adjoint(x);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("emax/emin ties send adjoint to the first operand") {
    Tape tape;
    Tensor same = Tensor::column({1.0, 2.0});
    Var a = tape.leaf(same);
    Var b = tape.leaf(same);
    tape.backward(sum(emax(a, b)));
    CHECK(tape.adjoint(a)[0] == 1.0);
    CHECK(tape.adjoint(b)[0] == 0.0);

    Tape t2;
    Var c = t2.leaf(same);
    Var d = t2.leaf(same);
    t2.backward(sum(emin(c, d)));
    CHECK(t2.adjoint(c)[0] == 1.0);
    CHECK(t2.adjoint(d)[0] == 0.0);
}

TEST_CASE("constants do not accumulate adjoints") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(2.0));
    Var c = tape.constant(Tensor::scalar(3.0));
    Var root = mul(x, c);
    tape.backward(root);
    CHECK(tape.adjoint(x).item() == 3.0);
    CHECK(tape.adjoint(c).item() == 0.0);
}
