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

#ifndef GRADCERT_TRAIN_HPP
#define GRADCERT_TRAIN_HPP

#include <numeric>
#include <variant>
#include <vector>

#include "gradcert/bounds.hpp"
#include "gradcert/data.hpp"
#include "gradcert/net_expr.hpp"
#include "gradcert/network.hpp"

namespace gradcert {

// ---------------------------------------------------------------------------
// Regularizers
// ---------------------------------------------------------------------------

/// Which loss seeds the bound computation inside the regularizer: the
/// training loss itself (cross-entropy w.r.t. the true label) or the true
/// class logit. Both are valid explanation losses; the logit seed makes a
/// perfectly linear network cost exactly zero.
enum class BoundSeed { TrainingLoss, ClassLogit };

struct GradCertReg {
    double alpha = 0.5;
    double eps_t = 0.0;
    double gamma_t = 0.0;
    BoundSeed seed = BoundSeed::TrainingLoss;
};

/// Gradient-norm penalty at a noisy point: alpha * |grad_x L(x + N(0,eps))|^2.
struct L2NoiseReg {
    double alpha = 0.5;
    double eps = 0.0;
};

/// alpha * max_{x' in T} |grad L(x) - grad L(x')|_1 via an inner PGD loop.
struct GNormReg {
    double alpha = 1.0;
    double eps = 0.0;
    int inner_steps = 10;
};

/// max_{x' in T} [ L(f(x'), y) + |grad L(x) - grad L(x')|_1 ]; replaces the
/// clean loss term.
struct GSumNormReg {
    double eps = 0.0;
    int inner_steps = 10;
};

/// Robust optimization: max_{x' in T} L(f(x'), y); replaces the clean loss.
struct PGDAdvReg {
    double eps = 0.0;
    int inner_steps = 10;
};

using Regularizer =
    std::variant<std::monostate, GradCertReg, L2NoiseReg, GNormReg, GSumNormReg, PGDAdvReg>;

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

struct SGDConfig {
    double lr = 0.01;
    double momentum = 0.0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct Ramp {
    enum class Kind { None, Linear } kind = Kind::Linear;
    double fraction = 0.5; // of epochs over which radii ramp from 0 to full
    double warmup = 0.0;   // of epochs with radii held at 0 before the ramp

    static Ramp none() { return {Kind::None, 1.0, 0.0}; }
    static Ramp linear(double f, double warmup_fraction = 0.0) {
        if (f <= 0.0 || f > 1.0) throw ContractError("ramp fraction must be in (0,1]");
        if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
            throw ContractError("warmup fraction must be in [0,1)");
        return {Kind::Linear, f, warmup_fraction};
    }

    double factor(std::size_t epoch, std::size_t total_epochs) const {
        if (kind == Kind::None || total_epochs == 0) return 1.0;
        const double w = warmup * static_cast<double>(total_epochs);
        const double span = fraction * static_cast<double>(total_epochs);
        const double past = static_cast<double>(epoch + 1) - w;
        if (past <= 0.0) return 0.0;
        return std::min(1.0, past / std::max(1.0, span));
    }
};

struct TrainConfig {
    Regularizer regularizer; // monostate = plain training
    std::variant<AdamConfig, SGDConfig> optimizer = AdamConfig{};
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    Ramp ramp = Ramp::linear(0.5);
    std::uint64_t seed = 0;

    // per-epoch reporting
    std::size_t probe_size = 100; // held-out inputs probed for mean delta sum
    double probe_eps = 0.01;      // probe region radius (gamma = 0)
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;      // mean composite loss
    double regularizer_value = 0.0; // mean unscaled regularizer term
    double test_accuracy = 0.0;
    double probe_delta_sum = 0.0; // mean sum(delta) on the probe set
};

struct TrainReport {
    std::vector<EpochStats> epochs;
};

inline double accuracy(const Network& net, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        hit += predict(net, ds.row(i)) == ds.labels[i];
    return static_cast<double>(hit) / static_cast<double>(ds.size());
}

namespace detail {

struct ParamSlot {
    Tensor* value;
    Tensor grad;
};

inline std::vector<ParamSlot> parameter_slots(Network& net) {
    std::vector<ParamSlot> slots;
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        LayerSpec& L = net.layer(k);
        if (!L.has_params()) continue;
        slots.push_back({&L.W, Tensor()});
        slots.push_back({&L.b, Tensor()});
    }
    return slots;
}

struct OptimizerState {
    std::vector<Tensor> m, v;
    std::size_t t = 0;

    void ensure(const std::vector<ParamSlot>& slots) {
        if (!m.empty()) return;
        for (const auto& s : slots) {
            m.push_back(Tensor::zeros(s.value->shape()));
            v.push_back(Tensor::zeros(s.value->shape()));
        }
    }

    void step(std::vector<ParamSlot>& slots, const std::variant<AdamConfig, SGDConfig>& opt) {
        ensure(slots);
        ++t;
        if (std::holds_alternative<AdamConfig>(opt)) {
            const AdamConfig& a = std::get<AdamConfig>(opt);
            const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(t));
            for (std::size_t p = 0; p < slots.size(); ++p) {
                Tensor& w = *slots[p].value;
                const Tensor& g = slots[p].grad;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[p][i] = a.beta1 * m[p][i] + (1 - a.beta1) * g[i];
                    v[p][i] = a.beta2 * v[p][i] + (1 - a.beta2) * g[i] * g[i];
                    const double mh = m[p][i] / bc1;
                    const double vh = v[p][i] / bc2;
                    w[i] -= a.lr * mh / (std::sqrt(vh) + a.eps);
                }
            }
        } else {
            const SGDConfig& s = std::get<SGDConfig>(opt);
            for (std::size_t p = 0; p < slots.size(); ++p) {
                Tensor& w = *slots[p].value;
                const Tensor& g = slots[p].grad;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[p][i] = s.momentum * m[p][i] + g[i];
                    w[i] -= s.lr * m[p][i];
                }
            }
        }
    }
};

/// Inner PGD maximization of a scalar objective over [x - eps, x + eps].
/// The gradient callback returns d objective / d x'. Starts from a random
/// point in the ball: gradient-difference objectives have a zero subgradient
/// exactly at the clean point. The clean value still participates in "best".
inline Tensor inner_pgd_max(const Tensor& x0, double eps, int steps,
                            const std::function<double(const Tensor&)>& objective,
                            const std::function<Tensor(const Tensor&)>& grad, Rng& rng) {
    Tensor lo = add_scalar(x0, -eps);
    Tensor hi = add_scalar(x0, eps);
    const double step = 2.5 * eps / std::max(1, steps);
    Tensor best = x0;
    double best_obj = objective(x0);
    Tensor p = x0;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += rng.uniform(-eps, eps);
    for (int s = 0; s < steps; ++s) {
        Tensor g = grad(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double sg = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
            p[i] += step * sg;
        }
        p = emin(emax(p, lo), hi);
        const double obj = objective(p);
        if (obj > best_obj) {
            best_obj = obj;
            best = p;
        }
    }
    return best;
}

/// Gradient of |v(x) - v(x')|_1 (plus optionally the loss) w.r.t. x', via a
/// second differentiation pass over the unrolled explanation.
inline Tensor grad_diff_l1_grad(const Network& net, const Tensor& v_clean, const Tensor& xprime,
                                const LossSpec& loss, bool add_loss_term) {
    Tape tape;
    TapeNet tn = bind_network(tape, net, false);
    Var xv = tape.leaf(xprime);
    Var v = explanation_expr(net, tn, xv, loss);
    Var root = sum(abs(sub(v, tape.constant(v_clean))));
    if (add_loss_term) {
        LayerCache<Var> cache = forward_generic<Var>(net, tn.params, xv);
        root = add(root, loss_value_generic(loss, cache.z.back()));
    }
    tape.backward(root);
    return tape.adjoint(xv);
}

inline double grad_diff_l1_value(const Network& net, const Tensor& v_clean, const Tensor& xprime,
                                 const LossSpec& loss) {
    Tensor v = input_gradient(net, xprime.reshaped({net.input_size(), 1}), loss)
                   .reshaped(v_clean.shape());
    return sum(abs(sub(v, v_clean))).item();
}

/// One example's contribution to the batch objective, as a tape expression.
/// Returns the composite term and stores the unscaled regularizer value.
struct ExampleTerm {
    Var term;
    double reg_value = 0.0;
};

inline ExampleTerm example_objective(const Network& net, Tape& tape, const TapeNet& tn,
                                     const std::vector<BoundLayer<Var>>* bound_layers,
                                     const Tensor& x_flat, std::size_t label,
                                     const TrainConfig& cfg, double ramp_factor, Rng& rng) {
    ExampleTerm out;
    LossSpec loss = LossSpec::cross_entropy(label);

    if (std::holds_alternative<PGDAdvReg>(cfg.regularizer)) {
        const auto& reg = std::get<PGDAdvReg>(cfg.regularizer);
        const double eps = reg.eps * ramp_factor;
        Tensor xadv = inner_pgd_max(
            x_flat, eps, reg.inner_steps,
            [&](const Tensor& p) { return loss_value(net, p.reshaped({net.input_size(), 1}), loss); },
            [&](const Tensor& p) {
                return input_gradient(net, p.reshaped({net.input_size(), 1}), loss)
                    .reshaped(p.shape());
            },
            rng);
        out.term = loss_expr(net, tn, tape.constant(xadv), loss);
        out.reg_value = out.term.value().item();
        return out;
    }

    if (std::holds_alternative<GSumNormReg>(cfg.regularizer)) {
        const auto& reg = std::get<GSumNormReg>(cfg.regularizer);
        const double eps = reg.eps * ramp_factor;
        Tensor v_clean = input_gradient(net, x_flat, loss).reshaped(x_flat.shape());
        Tensor xadv = inner_pgd_max(
            x_flat, eps, reg.inner_steps,
            [&](const Tensor& p) {
                return grad_diff_l1_value(net, v_clean, p, loss) +
                       loss_value(net, p.reshaped({net.input_size(), 1}), loss);
            },
            [&](const Tensor& p) { return grad_diff_l1_grad(net, v_clean, p, loss, true); }, rng);
        Var xc = tape.constant(xadv);
        Var vdiff = sum(abs(sub(explanation_expr(net, tn, xc, loss),
                                tape.constant(v_clean))));
        out.term = add(loss_expr(net, tn, xc, loss), vdiff);
        out.reg_value = vdiff.value().item();
        return out;
    }

    Var clean_loss = loss_expr(net, tn, tape.constant(x_flat), loss);
    out.term = clean_loss;

    if (std::holds_alternative<GradCertReg>(cfg.regularizer)) {
        const auto& reg = std::get<GradCertReg>(cfg.regularizer);
        if (reg.alpha != 0.0 && ramp_factor > 0.0) {
            const double eps_t = reg.eps_t * ramp_factor;
            const double gamma_t = reg.gamma_t * ramp_factor;
            LossSpec seed_loss = (reg.seed == BoundSeed::ClassLogit)
                                     ? LossSpec::class_logit(label)
                                     : loss;
            IntervalOf<Var> input{tape.constant(add_scalar(x_flat, -eps_t)),
                                  tape.constant(add_scalar(x_flat, eps_t))};
            BoundCache<Var> cache = forward_bounds_generic<Var>(net, *bound_layers, input);
            IntervalOf<Var> seed =
                loss_gradient_seed_bounds(seed_loss, cache.z.empty() ? input : cache.z.back());
            IntervalOf<Var> box = backward_bounds_generic<Var>(net, *bound_layers, cache, seed);
            Var D = sum(sub(box.hi, box.lo));
            out.reg_value = D.value().item();
            out.term = add(out.term, scale(D, reg.alpha));
        }
    } else if (std::holds_alternative<L2NoiseReg>(cfg.regularizer)) {
        const auto& reg = std::get<L2NoiseReg>(cfg.regularizer);
        if (reg.alpha != 0.0) {
            Tensor xn = x_flat;
            for (std::size_t i = 0; i < xn.size(); ++i)
                xn[i] += rng.normal(0.0, reg.eps * ramp_factor);
            Var v = explanation_expr(net, tn, tape.constant(xn), loss);
            Var n2 = sum(mul(v, v));
            out.reg_value = n2.value().item();
            out.term = add(out.term, scale(n2, reg.alpha));
        }
    } else if (std::holds_alternative<GNormReg>(cfg.regularizer)) {
        const auto& reg = std::get<GNormReg>(cfg.regularizer);
        if (reg.alpha != 0.0) {
            const double eps = reg.eps * ramp_factor;
            Tensor v_clean = input_gradient(net, x_flat, loss).reshaped(x_flat.shape());
            Tensor xadv = inner_pgd_max(
                x_flat, eps, reg.inner_steps,
                [&](const Tensor& p) { return grad_diff_l1_value(net, v_clean, p, loss); },
                [&](const Tensor& p) { return grad_diff_l1_grad(net, v_clean, p, loss, false); },
                rng);
            Var vdiff = sum(abs(sub(explanation_expr(net, tn, tape.constant(xadv), loss),
                                    tape.constant(v_clean))));
            out.reg_value = vdiff.value().item();
            out.term = add(out.term, scale(vdiff, reg.alpha));
        }
    }
    return out;
}

} // namespace detail

/// Mean composite loss of a batch under the configured regularizer, exactly
/// as the training step sees it (ramp factor 1).
inline double composite_loss(const Network& net, const Dataset& batch, const TrainConfig& cfg) {
    if (batch.size() == 0) throw ContractError("composite_loss: empty batch");
    Tape tape;
    TapeNet tn = bind_network(tape, net, true);
    std::vector<BoundLayer<Var>> bl;
    if (const auto* gc = std::get_if<GradCertReg>(&cfg.regularizer); gc && gc->alpha != 0.0)
        bl = make_bound_layers(net, tn, ModelRegion(gc->gamma_t));
    Rng rng(Rng::mix(cfg.seed, 0xc0));
    Var total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor x = batch.row(i).reshaped({batch.feature_count(), 1});
        auto t = detail::example_objective(net, tape, tn, &bl, x, batch.labels[i], cfg, 1.0, rng);
        total = i == 0 ? t.term : add(total, t.term);
    }
    return scale(total, 1.0 / static_cast<double>(batch.size())).value().item();
}

/// Minibatch training with the configured composite loss. Deterministic for
/// a fixed config and seed. Throws on divergence (non-finite loss).
inline TrainReport fit(Network& net, const Dataset& train, const TrainConfig& cfg,
                       const Dataset* eval = nullptr) {
    if (train.size() == 0) throw ContractError("fit: empty dataset");
    TrainReport report;
    std::vector<detail::ParamSlot> slots = detail::parameter_slots(net);
    detail::OptimizerState opt;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t B = std::max<std::size_t>(1, cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(cfg.seed, 0x5eed + epoch));
        shuffle_rng.shuffle(order);
        Rng noise_rng(Rng::mix(cfg.seed, 0x4015e + epoch));
        const double ramp = cfg.ramp.factor(epoch, cfg.epochs);

        double loss_sum = 0.0, reg_sum = 0.0;
        std::size_t batches = 0, examples = 0;

        for (std::size_t start = 0; start < train.size(); start += B) {
            const std::size_t stop = std::min(train.size(), start + B);
            Tape tape;
            TapeNet tn = bind_network(tape, net, true);
            std::vector<BoundLayer<Var>> bl;
            if (const auto* gc = std::get_if<GradCertReg>(&cfg.regularizer);
                gc && gc->alpha != 0.0)
                bl = make_bound_layers(net, tn, ModelRegion(gc->gamma_t * ramp));

            Var total;
            for (std::size_t i = start; i < stop; ++i) {
                Tensor x = train.row(order[i]).reshaped({train.feature_count(), 1});
                auto t = detail::example_objective(net, tape, tn, &bl, x, train.labels[order[i]],
                                                   cfg, ramp, noise_rng);
                reg_sum += t.reg_value;
                total = (i == start) ? t.term : add(total, t.term);
            }
            Var root = scale(total, 1.0 / static_cast<double>(stop - start));
            const double batch_loss = root.value().item();
            if (!std::isfinite(batch_loss))
                throw Error("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batches));
            loss_sum += batch_loss;
            examples += stop - start;
            ++batches;

            tape.backward(root);
            std::size_t p = 0;
            for (std::size_t k = 0; k < net.layer_count(); ++k) {
                if (!net.layer(k).has_params()) continue;
                slots[p++].grad = tape.adjoint(tn.W(k));
                slots[p++].grad = tape.adjoint(tn.b(k));
            }
            opt.step(slots, cfg.optimizer);
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / static_cast<double>(batches);
        st.regularizer_value = reg_sum / static_cast<double>(examples);
        const Dataset& evaluation = eval ? *eval : train;
        st.test_accuracy = accuracy(net, evaluation);
        // probe: mean sum(delta) of the predicted-class logit explanation
        const std::size_t probe_n = std::min<std::size_t>(cfg.probe_size, evaluation.size());
        if (probe_n > 0 && cfg.probe_eps >= 0) {
            BoundNetwork bn = make_bound_network(net, ModelRegion(0.0));
            double dsum = 0.0;
            for (std::size_t i = 0; i < probe_n; ++i) {
                Tensor x = evaluation.row(i);
                LossSpec probe_loss = LossSpec::class_logit(predict(net, x));
                dsum += explanation_bounds(bn, InputRegion::uniform(x, cfg.probe_eps), probe_loss)
                            .delta_sum();
            }
            st.probe_delta_sum = dsum / static_cast<double>(probe_n);
        }
        report.epochs.push_back(st);
    }
    return report;
}

/// Gradient-dispersion statistic over a grid covering [0,1]^2: the largest
/// distance between any grid explanation and the mean explanation. The
/// statistic heads to zero as the decision function approaches linearity.
inline double gradient_dispersion(const Network& net, std::size_t grid = 32,
                                  const LossSpec& loss = LossSpec::class_logit(0)) {
    if (net.input_size() != 2)
        throw ContractError("gradient_dispersion expects a 2-feature network");
    std::vector<Tensor> vs;
    vs.reserve(grid * grid);
    Tensor mean({2, 1});
    for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < grid; ++j) {
            Tensor x = Tensor::column({static_cast<double>(i) / (grid - 1),
                                       static_cast<double>(j) / (grid - 1)});
            Tensor v = input_gradient(net, x, loss);
            mean = add(mean, v);
            vs.push_back(std::move(v));
        }
    mean = scale(mean, 1.0 / static_cast<double>(vs.size()));
    double worst = 0.0;
    for (const Tensor& v : vs) worst = std::max(worst, norm2(sub(v, mean)));
    return worst;
}

} // namespace gradcert

#endif // GRADCERT_TRAIN_HPP
