#include <doctest.h>

#include "gradcert/certify.hpp"
#include "oracles.hpp"

using namespace gradcert;

namespace {
GradientBox box2(double l0, double u0, double l1, double u1) {
    return GradientBox(Tensor::column({l0, l1}), Tensor::column({u0, u1}));
}
Tensor sample_box(const GradientBox& b, Rng& rng) {
    Tensor v(b.v_lower.shape());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(b.v_lower[i], b.v_upper[i]);
    return v;
}
} // namespace

TEST_CASE("mse examples") {
    Tensor v = Tensor::column({1, 2, 3});
    CHECK(mse(v, v) == 0.0);
    CHECK(mse(Tensor::column({0, 0}), Tensor::column({3, 4})) == 12.5);
    CHECK_THROWS_AS(mse(v, Tensor::column({1, 2})), DimensionError);

    Rng rng(1);
    Tensor a = oracles::random_tensor(rng, {7, 1});
    Tensor b = oracles::random_tensor(rng, {7, 1});
    double want = 0;
    for (std::size_t i = 0; i < 7; ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
    want /= 7;
    CHECK(mse(a, b) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("targeted witness is the clamp") {
    GradientBox b = box2(-1, 1, -1, 1);
    Tensor w = targeted_witness(b, Tensor::column({0.5, 2}));
    CHECK(w[0] == 0.5);
    CHECK(w[1] == 1.0);

    // target inside the box -> witness equals target, score 0
    CertificationOutcome out = certify_targeted(b, {Tensor::column({0.2, -0.3}), 0.1});
    CHECK(out.score == 0.0);
    CHECK_FALSE(out.certified);
}

TEST_CASE("targeted witness minimizes MSE over random samples") {
    Rng rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor lo = oracles::random_tensor(rng, {4, 1}, -2, 0);
        Tensor hi = add(lo, oracles::random_tensor(rng, {4, 1}, 0, 2));
        GradientBox b(lo, hi);
        Tensor targ = oracles::random_tensor(rng, {4, 1}, -3, 3);
        double best = mse(targeted_witness(b, targ), targ);
        for (int s = 0; s < 500; ++s) {
            CHECK(best <= mse(sample_box(b, rng), targ) + 1e-12);
        }
    }
}

TEST_CASE("witnesses match the per-coordinate analytic extrema") {
    Rng rng(420);
    for (int rep = 0; rep < 30; ++rep) {
        Tensor lo = oracles::random_tensor(rng, {5, 1}, -2, 0);
        Tensor hi = add(lo, oracles::random_tensor(rng, {5, 1}, 0, 2));
        GradientBox b(lo, hi);
        Tensor targ = oracles::random_tensor(rng, {5, 1}, -3, 3);
        Tensor v = oracles::random_tensor(rng, {5, 1}, -2, 2);

        Tensor tw = targeted_witness(b, targ);
        Tensor uw = untargeted_witness(b, v);
        for (std::size_t i = 0; i < 5; ++i) {
            // targeted: argmin over {lo, hi, t} of (w - t)^2, feasible values only
            double best = lo[i];
            for (double cand : {lo[i], hi[i], std::clamp(targ[i], lo[i], hi[i])})
                if (std::fabs(cand - targ[i]) < std::fabs(best - targ[i])) best = cand;
            CHECK(tw[i] == best);
            // untargeted: argmax over the two endpoints of (w - v)^2
            double worst = std::fabs(lo[i] - v[i]) > std::fabs(hi[i] - v[i]) ? lo[i] : hi[i];
            CHECK(uw[i] == worst);
        }
    }
}

TEST_CASE("certify_targeted examples") {
    // box [0,0.1]^2, target (1,1), tau 0.04 -> witness (0.1,0.1), score 0.81
    GradientBox b = box2(0, 0.1, 0, 0.1);
    CertificationOutcome out = certify_targeted(b, {Tensor::column({1, 1}), 0.04});
    CHECK(out.witness[0] == doctest::Approx(0.1));
    CHECK(out.score == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(out.certified);

    // degenerate box at v with tau below the distance -> certified
    GradientBox point(Tensor::column({0, 0}), Tensor::column({0, 0}));
    Tensor targ = Tensor::column({1, 0});
    CertificationOutcome o2 = certify_targeted(point, {targ, 0.4});
    CHECK(o2.score == doctest::Approx(0.5));
    CHECK(o2.certified);
}

TEST_CASE("untargeted witness picks the farther endpoint") {
    GradientBox b(Tensor::column({-1, -3}), Tensor::column({2, 1}));
    Tensor w = untargeted_witness(b, Tensor::column({0, 0}));
    CHECK(w[0] == 2.0);
    CHECK(w[1] == -3.0);

    GradientBox point(Tensor::column({0.7}), Tensor::column({0.7}));
    CHECK(untargeted_witness(point, Tensor::column({0.1}))[0] == 0.7);
}

TEST_CASE("untargeted witness maximizes MSE over random samples") {
    Rng rng(43);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor lo = oracles::random_tensor(rng, {4, 1}, -2, 0);
        Tensor hi = add(lo, oracles::random_tensor(rng, {4, 1}, 0, 2));
        GradientBox b(lo, hi);
        Tensor v = oracles::random_tensor(rng, {4, 1}, -1, 1);
        double best = mse(v, untargeted_witness(b, v));
        for (int s = 0; s < 500; ++s) CHECK(best >= mse(v, sample_box(b, rng)) - 1e-12);
    }
}

TEST_CASE("certify_untargeted examples") {
    GradientBox point(Tensor::column({1, 2}), Tensor::column({1, 2}));
    CHECK(certify_untargeted(point, Tensor::column({1, 2}), 0.0).certified);

    GradientBox b(Tensor::column({-1, -3}), Tensor::column({2, 1}));
    CertificationOutcome out = certify_untargeted(b, Tensor::column({0, 0}), 2.0);
    CHECK(out.score == doctest::Approx(6.5));
    CHECK_FALSE(out.certified);

    CHECK(certify_untargeted(b, Tensor::column({0, 0}), 1e18).certified);
}

TEST_CASE("scale equivariance of MSE certificates") {
    Rng rng(44);
    Tensor lo = oracles::random_tensor(rng, {3, 1}, -2, 0);
    Tensor hi = add(lo, oracles::random_tensor(rng, {3, 1}, 0, 2));
    Tensor targ = oracles::random_tensor(rng, {3, 1}, -3, 3);
    const double c = 2.7;

    CertificationOutcome base = certify_targeted(GradientBox(lo, hi), {targ, 0.05});
    CertificationOutcome scaled = certify_targeted(GradientBox(scale(lo, c), scale(hi, c)),
                                                   {scale(targ, c), 0.05 * c * c});
    CHECK(scaled.score == doctest::Approx(base.score * c * c).epsilon(1e-12));
    CHECK(scaled.certified == base.certified);

    // cosine bound is scale invariant
    double cb = cosine_similarity_min_bound(GradientBox(lo, hi), targ);
    double cs =
        cosine_similarity_min_bound(GradientBox(scale(lo, c), scale(hi, c)), scale(targ, c));
    CHECK(cb == doctest::Approx(cs).epsilon(1e-12));
}

TEST_CASE("cosine bound: degenerate boxes") {
    Tensor t = Tensor::column({0.6, -0.8});
    GradientBox at_t(t, t);
    CHECK(cosine_similarity_min_bound(at_t, t) == doctest::Approx(1.0));
    GradientBox at_neg(neg(t), neg(t));
    CHECK(cosine_similarity_min_bound(at_neg, t) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity_min_bound(at_t, Tensor::column({0, 0})), ContractError);
}

TEST_CASE("cosine bound never exceeds the sampled minimum") {
    Rng rng(45);
    for (int rep = 0; rep < 30; ++rep) {
        std::size_t n = 1 + rng.uniform_index(3);
        Tensor lo = oracles::random_tensor(rng, {n, 1}, -2, 1);
        Tensor hi = add(lo, oracles::random_tensor(rng, {n, 1}, 0, 2));
        GradientBox b(lo, hi);
        Tensor targ = oracles::random_tensor(rng, {n, 1}, -2, 2);
        if (norm2(targ) < 1e-6) continue;
        double bound = cosine_similarity_min_bound(b, targ);
        double tn = norm2(targ);
        // dense grid scan (oracle); ~1e5 points per box
        const int G = (n == 1) ? 100000 : (n == 2 ? 316 : 46);
        long long total = 1;
        for (std::size_t d = 0; d < n; ++d) total *= G;
        double min_cos = 2.0;
        for (long long it = 0; it < total; ++it) {
            long long rem = it;
            Tensor v({n, 1});
            for (std::size_t d = 0; d < n; ++d) {
                const long long g = rem % G;
                rem /= G;
                v[d] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(g) / (G - 1);
            }
            double vn = norm2(v);
            if (vn < 1e-12) continue;
            min_cos = std::min(min_cos, dot(v, targ) / (vn * tn));
        }
        CHECK(bound <= min_cos + 1e-9);
    }
}

TEST_CASE("top-k exclusion examples") {
    // sensitive feature in [-0.1, 0.1]; five others with larger guaranteed magnitude
    Tensor lo = Tensor::column({-0.1, 0.5, 0.4, 0.3, 0.2, 0.15});
    Tensor hi = Tensor::column({0.1, 0.6, 0.5, 0.4, 0.3, 0.25});
    GradientBox b(lo, hi);
    CHECK(certified_top_k_exclusion(b, 0, 5));

    // degenerate box where feature j dominates -> cannot exclude from top-1
    Tensor v = Tensor::column({2.0, 0.5, 0.1});
    GradientBox point(v, v);
    CHECK_FALSE(certified_top_k_exclusion(point, 0, 1));

    CHECK_THROWS_AS(certified_top_k_exclusion(b, 9, 1), ContractError);
    CHECK_THROWS_AS(certified_top_k_exclusion(b, 0, 6), ContractError);
}

TEST_CASE("top-k exclusion is sound against corner sampling") {
    Rng rng(46);
    int certified_count = 0;
    for (int rep = 0; rep < 200; ++rep) {
        std::size_t n = 4 + rng.uniform_index(4);
        Tensor lo({n, 1}), hi({n, 1});
        for (std::size_t i = 0; i < n; ++i) {
            lo[i] = rng.uniform(-1, 1);
            hi[i] = lo[i] + rng.uniform(0, 0.8);
        }
        GradientBox b(lo, hi);
        std::size_t j = rng.uniform_index(n);
        std::size_t k = 1 + rng.uniform_index(n - 1);
        if (!certified_top_k_exclusion(b, j, k)) continue;
        ++certified_count;
        for (int s = 0; s < 100; ++s) {
            Tensor v = sample_box(b, rng);
            std::size_t better = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (i != j && std::fabs(v[i]) > std::fabs(v[j])) ++better;
            CHECK(better >= k); // j never lands in the top k
        }
    }
    CHECK(certified_count > 0);
}

TEST_CASE("bias score examples") {
    CHECK(bias_score(Tensor::column({2, -1, 1}), 0) == 0.5);
    CHECK(bias_score(onehot(2, 5), 2) == 1.0);
    Tensor uniform = Tensor::full({8, 1}, -0.3);
    CHECK(bias_score(uniform, 3) == doctest::Approx(1.0 / 8));
    CHECK(bias_score(Tensor::zeros({4, 1}), 1) == 0.0);
    CHECK_THROWS_AS(bias_score(uniform, 9), ContractError);
}

TEST_CASE("corner mask targets: geometry and normalization") {
    auto masks = corner_mask_targets(28, 28, 5, 5);
    CHECK(masks.size() == 20);
    for (const Tensor& m : masks) {
        CHECK(m.size() == 28 * 28);
        CHECK(norm2(m) == doctest::Approx(1.0).epsilon(1e-12));
        double nz = 0;
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i] != 0) ++nz;
        CHECK(nz == 25);
    }
    // first mask: top-left block at offset 0
    CHECK(masks[0][0] == doctest::Approx(0.2));
    CHECK(masks[0][4 * 28 + 4] == doctest::Approx(0.2));
    CHECK(masks[0][5 * 28 + 5] == 0.0);
    CHECK_THROWS_AS(corner_mask_targets(8, 8, 5, 5), ContractError);
}
