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

#ifndef GRADCERT_ATTACK_HPP
#define GRADCERT_ATTACK_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "gradcert/bounds.hpp"
#include "gradcert/certify.hpp"
#include "gradcert/net_expr.hpp"
#include "gradcert/network.hpp"
#include "gradcert/random.hpp"

namespace gradcert {

enum class AttackMode { TargetedInput, UntargetedInput, TargetedModel, UntargetedModel };

/// How the attack objective's gradient is obtained. Central finite
/// differences probe the scalar objective one coordinate at a time: correct
/// whatever the activation, but dimension-expensive. DoubleBackward
/// differentiates the unrolled explanation expression on the tape: one pass,
/// exact for smooth activations; on ReLU nets the explanation landscape is
/// piecewise constant in x, so first-order input attacks are weak there and
/// finite differences remain the default.
enum class GradientEstimator { CentralFiniteDifference, DoubleBackward };

struct AttackConfig {
    AttackMode mode = AttackMode::UntargetedInput;
    int steps = 100;
    double step_size = 0.0; // 0 -> 2.5 * radius / steps per coordinate
    int restarts = 1;       // random restarts in addition to the clean start
    GradientEstimator estimator = GradientEstimator::CentralFiniteDifference;
    double h_fd = 1e-4;
    std::uint64_t seed = 0;

    bool targeted() const {
        return mode == AttackMode::TargetedInput || mode == AttackMode::TargetedModel;
    }
};

struct AttackResult {
    Tensor adv_point;                   // x_adv (flat) or theta_adv (flat)
    Tensor v_adv;                       // explanation at the adversarial point
    std::vector<double> objective_trace; // per-step objective of the best run
    double best_objective = 0.0;        // h(.) at the reported point
    bool success = false;               // targeted: h <= tau; untargeted: h >= tau
};

namespace detail {

/// Sign-step projected descent over a box, common to both attack spaces.
/// `objective` returns h(.); targeted runs minimize it, untargeted maximize.
struct PgdProblem {
    IntervalMatrix box;                            // feasible region, flat
    Tensor step;                                   // per-coordinate step size
    std::function<double(const Tensor&)> objective;
    std::function<Tensor(const Tensor&)> gradient; // of the objective
};

inline Tensor project_box(const Tensor& p, const IntervalMatrix& box) {
    return emin(emax(p, box.lo), box.hi);
}

inline AttackResult run_pgd(const PgdProblem& prob, const Tensor& clean, bool targeted,
                            const AttackConfig& cfg, Rng& rng) {
    AttackResult best;
    best.best_objective = targeted ? 1e300 : -1e300;
    auto better = [&](double a, double b) { return targeted ? a < b : a > b; };
    const double dir = targeted ? -1.0 : 1.0;

    for (int run = 0; run <= cfg.restarts; ++run) {
        Tensor p = clean;
        if (run > 0) {
            for (std::size_t i = 0; i < p.size(); ++i)
                p[i] = rng.uniform(prob.box.lo[i], prob.box.hi[i]);
        }
        p = project_box(p, prob.box);
        std::vector<double> trace;
        trace.reserve(cfg.steps + 1);
        double run_best = prob.objective(p);
        Tensor run_best_point = p;
        trace.push_back(run_best);
        for (int s = 0; s < cfg.steps; ++s) {
            Tensor g = prob.gradient(p);
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double sg = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
                p[i] += dir * prob.step[i] * sg;
            }
            p = project_box(p, prob.box);
            const double obj = prob.objective(p);
            trace.push_back(obj);
            if (better(obj, run_best)) {
                run_best = obj;
                run_best_point = p;
            }
        }
        if (better(run_best, best.best_objective)) {
            best.best_objective = run_best;
            best.adv_point = run_best_point;
            best.objective_trace = std::move(trace);
        }
    }
    return best;
}

inline Tensor mse_gradient(const Tensor& v_at_point, const Tensor& reference) {
    // d/dv mse(reference, v) = 2 (v - reference) / n
    return scale(sub(v_at_point, reference), 2.0 / static_cast<double>(v_at_point.size()));
}

} // namespace detail

/// First-order PGD attack on the explanation in input space. Targeted runs
/// drive mse(v_targ, v(x)) below tau; untargeted runs push mse(v, v(x))
/// above tau. Every iterate is projected back into T.
inline AttackResult input_attack(const Network& net, const Tensor& x, const InputRegion& region,
                                 const LossSpec& loss, const TargetSpec& spec,
                                 const AttackConfig& cfg) {
    const bool targeted = cfg.targeted();
    Tensor x0 = flatten_input(net, x);
    Tensor v_clean = input_gradient(net, x, loss).reshaped({net.input_size(), 1});
    const Tensor& reference =
        targeted ? spec.v_targ.reshaped({net.input_size(), 1}) : v_clean;

    detail::PgdProblem prob;
    prob.box = region.realize();

    // zero-measure region: evaluate the clean point only
    bool degenerate = true;
    for (std::size_t i = 0; i < prob.box.lo.size(); ++i)
        if (prob.box.lo[i] != prob.box.hi[i]) degenerate = false;

    auto v_at = [&](const Tensor& p) {
        return input_gradient(net, p.reshaped(x.shape()), loss).reshaped(p.shape());
    };
    prob.objective = [&](const Tensor& p) { return mse(reference, v_at(p)); };

    if (degenerate) {
        AttackResult out;
        out.adv_point = x0;
        out.v_adv = v_clean;
        out.best_objective = prob.objective(x0);
        out.objective_trace = {out.best_objective};
        out.success = targeted ? out.best_objective <= spec.tau : out.best_objective >= spec.tau;
        return out;
    }

    prob.step = Tensor(x0.shape());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        double radius = (prob.box.hi[i] - prob.box.lo[i]) / 2.0;
        prob.step[i] = cfg.step_size > 0 ? cfg.step_size : 2.5 * radius / cfg.steps;
    }

    if (cfg.estimator == GradientEstimator::CentralFiniteDifference) {
        prob.gradient = [&](const Tensor& p) {
            Tensor g(p.shape());
            Tensor q = p;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double orig = q[i];
                q[i] = orig + cfg.h_fd;
                const double fp = prob.objective(q);
                q[i] = orig - cfg.h_fd;
                const double fm = prob.objective(q);
                q[i] = orig;
                g[i] = (fp - fm) / (2.0 * cfg.h_fd);
            }
            return g;
        };
    } else {
        prob.gradient = [&](const Tensor& p) {
            Tape tape;
            TapeNet tn = bind_network(tape, net, false);
            Var xv = tape.leaf(p);
            Var v = explanation_expr(net, tn, xv, loss);
            Var d = sub(v, tape.constant(reference));
            Var root = scale(sum(mul(d, d)), 1.0 / static_cast<double>(p.size()));
            tape.backward(root);
            return tape.adjoint(xv);
        };
    }

    Rng rng(Rng::mix(cfg.seed, 0x1a77));
    AttackResult out = detail::run_pgd(prob, x0, targeted, cfg, rng);
    out.v_adv = v_at(out.adv_point);
    out.success = targeted ? out.best_objective <= spec.tau : out.best_objective >= spec.tau;
    return out;
}

namespace detail {

inline Tensor flatten_params(const Network& net) {
    Tensor theta({net.parameter_count(), 1});
    std::size_t o = 0;
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const LayerSpec& L = net.layer(k);
        if (!L.has_params()) continue;
        for (std::size_t i = 0; i < L.W.size(); ++i) theta[o++] = L.W[i];
        for (std::size_t i = 0; i < L.b.size(); ++i) theta[o++] = L.b[i];
    }
    return theta;
}

inline void unflatten_params(Network& net, const Tensor& theta) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        LayerSpec& L = net.layer(k);
        if (!L.has_params()) continue;
        for (std::size_t i = 0; i < L.W.size(); ++i) L.W[i] = theta[o++];
        for (std::size_t i = 0; i < L.b.size(); ++i) L.b[i] = theta[o++];
    }
}

} // namespace detail

/// Locally bounded PGD attack in parameter space: theta stays inside
/// [theta - gamma|theta|, theta + gamma|theta|] while the input is fixed.
inline AttackResult model_attack(const Network& net, const Tensor& x, const ModelRegion& region,
                                 const LossSpec& loss, const TargetSpec& spec,
                                 const AttackConfig& cfg) {
    const bool targeted = cfg.targeted();
    Tensor theta0 = detail::flatten_params(net);
    Tensor v_clean = input_gradient(net, x, loss).reshaped({net.input_size(), 1});
    const Tensor& reference =
        targeted ? spec.v_targ.reshaped({net.input_size(), 1}) : v_clean;

    // per-parameter box and steps, built layer by layer so per-layer gamma applies
    Tensor lo(theta0.shape()), hi(theta0.shape()), stepv(theta0.shape());
    {
        std::size_t o = 0;
        for (std::size_t k = 0; k < net.layer_count(); ++k) {
            const LayerSpec& L = net.layer(k);
            if (!L.has_params()) continue;
            const double g = region.layer_gamma(k);
            for (std::size_t i = 0; i < L.W.size() + L.b.size(); ++i, ++o) {
                const double r = g * std::fabs(theta0[o]);
                lo[o] = theta0[o] - r;
                hi[o] = theta0[o] + r;
                stepv[o] = cfg.step_size > 0 ? cfg.step_size : 2.5 * r / cfg.steps;
            }
        }
    }

    Network work = net;
    auto v_at = [&](const Tensor& th) {
        detail::unflatten_params(work, th);
        return input_gradient(work, x, loss).reshaped({net.input_size(), 1});
    };

    detail::PgdProblem prob;
    prob.box = {lo, hi};
    prob.step = stepv;
    prob.objective = [&](const Tensor& th) { return mse(reference, v_at(th)); };

    if (region.is_point()) {
        AttackResult out;
        out.adv_point = theta0;
        out.v_adv = v_clean;
        out.best_objective = mse(reference, v_clean);
        out.objective_trace = {out.best_objective};
        out.success = targeted ? out.best_objective <= spec.tau : out.best_objective >= spec.tau;
        return out;
    }

    if (cfg.estimator == GradientEstimator::CentralFiniteDifference) {
        prob.gradient = [&](const Tensor& th) {
            Tensor g(th.shape());
            Tensor q = th;
            for (std::size_t i = 0; i < th.size(); ++i) {
                const double orig = q[i];
                q[i] = orig + cfg.h_fd;
                const double fp = prob.objective(q);
                q[i] = orig - cfg.h_fd;
                const double fm = prob.objective(q);
                q[i] = orig;
                g[i] = (fp - fm) / (2.0 * cfg.h_fd);
            }
            return g;
        };
    } else {
        prob.gradient = [&](const Tensor& th) {
            detail::unflatten_params(work, th);
            Tape tape;
            TapeNet tn = bind_network(tape, work, true);
            Var xv = tape.constant(flatten_input(net, x));
            Var v = explanation_expr(net, tn, xv, loss);
            Var d = sub(v, tape.constant(reference));
            Var root = scale(sum(mul(d, d)), 1.0 / static_cast<double>(v.value().size()));
            tape.backward(root);
            Tensor g(th.shape());
            std::size_t o = 0;
            for (std::size_t k = 0; k < net.layer_count(); ++k) {
                if (!net.layer(k).has_params()) continue;
                const Tensor& gW = tape.adjoint(tn.W(k));
                const Tensor& gb = tape.adjoint(tn.b(k));
                for (std::size_t i = 0; i < gW.size(); ++i) g[o++] = gW[i];
                for (std::size_t i = 0; i < gb.size(); ++i) g[o++] = gb[i];
            }
            return g;
        };
    }

    Rng rng(Rng::mix(cfg.seed, 0x90de));
    AttackResult out = detail::run_pgd(prob, theta0, targeted, cfg, rng);
    out.v_adv = v_at(out.adv_point);
    out.success = targeted ? out.best_objective <= spec.tau : out.best_objective >= spec.tau;
    return out;
}

} // namespace gradcert

#endif // GRADCERT_ATTACK_HPP
