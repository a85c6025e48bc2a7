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

// gradcert: train, certify, and attack gradient-based explanations.
//
// Subcommands: train | certify | attack | evaluate | demo-halfmoons.
// Configs are JSON documents; reports are JSON plus plot-ready CSVs. All
// outputs are atomic (write-then-rename) and deterministic for a fixed
// config and seed. Exit codes: 0 success, 1 runtime failure, 2 config or
// usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcert/attack.hpp"
#include "gradcert/bounds.hpp"
#include "gradcert/certify.hpp"
#include "gradcert/data.hpp"
#include "gradcert/model_io.hpp"
#include "gradcert/network.hpp"
#include "gradcert/report.hpp"
#include "gradcert/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gradcert;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return j;
}

// ---------------------------------------------------------------------------
// Dataset specs
// ---------------------------------------------------------------------------

Dataset load_dataset_spec(const json& spec) {
    const std::string kind = spec.at("kind").get<std::string>();
    Dataset ds;
    if (kind == "halfmoons") {
        ds = half_moons(spec.value("n", std::size_t{500}), spec.value("noise", 0.06),
                        spec.value("seed", std::uint64_t{0}));
    } else if (kind == "csv") {
        ds = load_tabular(spec.at("path").get<std::string>(),
                          spec.at("schema").get<std::string>());
    } else if (kind == "idx") {
        ds = load_idx(spec.at("images").get<std::string>(),
                      spec.at("labels").get<std::string>());
    } else if (kind == "synthetic-images") {
        ds = synthetic_images(spec.value("n", std::size_t{1000}),
                              spec.value("classes", std::size_t{10}),
                              spec.value("h", std::size_t{28}), spec.value("w", std::size_t{28}),
                              spec.value("noise", 0.15), spec.value("seed", std::uint64_t{1}));
    } else {
        throw FormatError("unknown dataset kind: " + kind);
    }
    if (spec.contains("poison")) {
        const json& p = spec["poison"];
        ds = label_poison(ds, p.at("p").get<double>(), p.value("seed", std::uint64_t{0}));
    }
    return ds;
}

struct SplitData {
    Dataset train, test;
};

SplitData load_split(const json& spec) {
    if (spec.contains("train") && spec.contains("test"))
        return {load_dataset_spec(spec["train"]), load_dataset_spec(spec["test"])};
    Dataset full = load_dataset_spec(spec);
    const json split = spec.value("split", json::object());
    auto [tr, te] = train_test_split(full, split.value("train_fraction", 0.8),
                                     split.value("seed", std::uint64_t{7}));
    return {std::move(tr), std::move(te)};
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

Network build_architecture(const json& arch, const Dataset& ds) {
    Network net(ds.input_shape);
    const std::size_t classes = ds.class_count;
    auto fcn = [&](std::vector<std::size_t> hidden, Activation act) {
        if (ds.input_shape.size() == 3) net.add_flatten();
        for (std::size_t h : hidden) net.add_dense(h, act);
        net.add_dense(classes, Activation::Identity);
    };
    if (arch.is_string()) {
        const std::string name = arch.get<std::string>();
        if (name == "fcn-2x128") fcn({128, 128}, Activation::ReLU);
        else if (name == "fcn-2x256") fcn({256, 256}, Activation::ReLU);
        else if (name == "fcn-1x128") fcn({128}, Activation::ReLU);
        else if (name == "cnn-small") {
            // two 4x4 conv layers (16 then 32 filters), then a 100-unit layer
            net.add_conv2d(16, 4, 4, 2, 1, Activation::ReLU);
            net.add_conv2d(32, 4, 4, 1, 0, Activation::ReLU);
            net.add_flatten();
            net.add_dense(100, Activation::ReLU);
            net.add_dense(classes, Activation::Identity);
        } else {
            throw FormatError("unknown architecture preset: " + name);
        }
    } else {
        fcn(arch.at("hidden").get<std::vector<std::size_t>>(),
            activation_from_name(arch.value("activation", std::string("relu"))));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Train configs
// ---------------------------------------------------------------------------

Regularizer parse_regularizer(const json& j) {
    if (j.is_null()) return std::monostate{};
    const std::string kind = j.value("kind", std::string("none"));
    if (kind == "none") return std::monostate{};
    if (kind == "gradcert") {
        GradCertReg r;
        r.alpha = j.value("alpha", 0.5);
        r.eps_t = j.value("eps_t", 0.0);
        r.gamma_t = j.value("gamma_t", 0.0);
        const std::string seed = j.value("seed_loss", std::string("ce"));
        if (seed == "logit") r.seed = BoundSeed::ClassLogit;
        else if (seed == "ce") r.seed = BoundSeed::TrainingLoss;
        else throw FormatError("gradcert seed_loss must be 'ce' or 'logit'");
        return r;
    }
    if (kind == "l2noise") return L2NoiseReg{j.value("alpha", 0.5), j.value("eps", 0.0)};
    if (kind == "gnorm")
        return GNormReg{j.value("alpha", 1.0), j.value("eps", 0.0), j.value("inner_steps", 10)};
    if (kind == "gsumnorm") return GSumNormReg{j.value("eps", 0.0), j.value("inner_steps", 10)};
    if (kind == "pgd") return PGDAdvReg{j.value("eps", 0.0), j.value("inner_steps", 10)};
    throw FormatError("unknown regularizer kind: " + kind);
}

TrainConfig parse_train_config(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", std::size_t{10});
    cfg.batch_size = j.value("batch_size", std::size_t{32});
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.regularizer = parse_regularizer(j.value("regularizer", json()));
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        const std::string kind = o.value("kind", std::string("adam"));
        if (kind == "adam")
            cfg.optimizer = AdamConfig{o.value("lr", 1e-3), o.value("beta1", 0.9),
                                       o.value("beta2", 0.999), o.value("eps", 1e-8)};
        else if (kind == "sgd")
            cfg.optimizer = SGDConfig{o.value("lr", 0.01), o.value("momentum", 0.0)};
        else
            throw FormatError("unknown optimizer kind: " + kind);
    }
    if (j.contains("ramp")) {
        const json& r = j["ramp"];
        const std::string kind = r.value("kind", std::string("linear"));
        if (kind == "none") cfg.ramp = Ramp::none();
        else if (kind == "linear")
            cfg.ramp = Ramp::linear(r.value("fraction", 0.5), r.value("warmup", 0.0));
        else throw FormatError("unknown ramp kind: " + kind);
    }
    cfg.probe_size = j.value("probe_size", std::size_t{100});
    cfg.probe_eps = j.value("probe_eps", 0.01);
    return cfg;
}

// ---------------------------------------------------------------------------
// Losses and targets for certification/attack
// ---------------------------------------------------------------------------

LossSpec make_loss(const std::string& kind, const Network& net, const Tensor& x,
                   std::size_t true_label) {
    if (kind == "logit-pred") return LossSpec::class_logit(predict(net, x));
    if (kind == "logit-true") return LossSpec::class_logit(true_label);
    if (kind == "ce") return LossSpec::cross_entropy(true_label);
    if (kind == "se") return LossSpec::squared_error(onehot(true_label, net.class_count()));
    throw FormatError("unknown loss kind: " + kind + " (expected logit-pred|logit-true|ce|se)");
}

std::vector<Tensor> make_targets(const std::string& kind, const Dataset& ds) {
    if (kind == "corners") {
        if (ds.input_shape.size() != 3)
            throw ContractError("corner targets need image-shaped inputs");
        return corner_mask_targets(ds.input_shape[1], ds.input_shape[2], 5, 5, ds.input_shape[0]);
    }
    if (kind == "sensitive") {
        if (ds.sensitive_indices.empty())
            throw ContractError("sensitive targets need a dataset with sensitive columns");
        // ones at the sensitive features, zeros elsewhere, unit l2
        Tensor t({ds.feature_count(), 1});
        for (std::size_t j : ds.sensitive_indices) t[j] = 1.0;
        return {scale(t, 1.0 / norm2(t))};
    }
    throw FormatError("unknown target kind: " + kind + " (expected corners|sensitive)");
}

InputRegion input_region_for(const Dataset& ds, const Tensor& x, double eps) {
    InputRegion r;
    r.center = x.reshaped({x.size(), 1});
    r.eps = Tensor::full({x.size(), 1}, eps);
    auto [lo, hi] = ds.domain();
    r.domain = IntervalMatrix{lo, hi};
    return r;
}

void check_model_data(const Network& net, const Dataset& ds) {
    if (net.input_size() != ds.feature_count())
        throw ContractError("model expects " + std::to_string(net.input_size()) +
                            " features but dataset has " + std::to_string(ds.feature_count()));
}

// ---------------------------------------------------------------------------
// train subcommand
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
    json cfg = load_json_file(config_path);
    SplitData data = load_split(cfg.at("dataset"));
    Network net = build_architecture(cfg.value("architecture", json("fcn-2x128")), data.train);
    TrainConfig tc = parse_train_config(cfg.value("train", json::object()));
    if (seed_override) tc.seed = *seed_override;

    Rng init_rng(Rng::mix(tc.seed, 0x121));
    init_parameters(net, init_rng);
    TrainReport report = fit(net, data.train, tc, &data.test);

    fs::path out(out_dir);
    save_model(net, (out / "model.json").string());

    std::vector<std::vector<std::string>> rows;
    for (const auto& e : report.epochs)
        rows.push_back({std::to_string(e.epoch), fmt_double(e.train_loss),
                        fmt_double(e.regularizer_value), fmt_double(e.test_accuracy),
                        fmt_double(e.probe_delta_sum)});
    write_csv_atomic(out / "epochs.csv",
                     {"epoch", "train_loss", "regularizer", "test_accuracy", "probe_delta_sum"},
                     rows);

    json rj;
    rj["meta"] = report_meta("train", tc.seed);
    rj["meta"]["config"] = cfg;
    json epochs = json::array();
    for (const auto& e : report.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"regularizer", e.regularizer_value},
                          {"test_accuracy", e.test_accuracy},
                          {"probe_delta_sum", e.probe_delta_sum}});
    rj["results"] = {{"epochs", epochs},
                     {"final_test_accuracy", report.epochs.back().test_accuracy},
                     {"model_file", (out / "model.json").string()}};
    write_json_atomic(out / "train_report.json", rj);
    std::cout << "trained " << tc.epochs << " epochs; test accuracy "
              << report.epochs.back().test_accuracy << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// certify subcommand
// ---------------------------------------------------------------------------

struct CertifyOptions {
    std::string model, data_config, out_dir;
    double eps = 0.0, gamma = 0.0, tau = 0.04;
    std::string mode = "untargeted";
    std::string targets = "corners";
    std::string loss = "logit-pred";
    std::size_t limit = 0, topk = 5;
    bool tight = false;
    unsigned threads = 1;
    std::uint64_t seed = 0;
};

int cmd_certify(const CertifyOptions& opt) {
    Network net = load_model(opt.model);
    SplitData data = load_split(load_json_file(opt.data_config));
    const Dataset& ds = data.test;
    check_model_data(net, ds);

    const std::size_t n = opt.limit ? std::min(opt.limit, ds.size()) : ds.size();
    BoundNetwork bn = make_bound_network(net, ModelRegion(opt.gamma), opt.tight);
    std::vector<Tensor> targets;
    if (opt.mode == "targeted") targets = make_targets(opt.targets, ds);

    std::vector<std::vector<std::string>> rows(n);
    std::vector<double> per_input_certified(n, 0.0);
    std::vector<double> per_input_total(n, 0.0);

    parallel_for_indexed(n, opt.threads, [&](std::size_t i) {
        Tensor x = ds.row(i);
        LossSpec loss = make_loss(opt.loss, net, x, ds.labels[i]);
        InputRegion T = input_region_for(ds, x, opt.eps);
        std::vector<std::string> row{std::to_string(i)};
        if (opt.mode == "prediction") {
            const bool ok =
                predict(net, x) == ds.labels[i] && logit_bounds_margin(bn, T, ds.labels[i]);
            per_input_certified[i] = ok;
            per_input_total[i] = 1;
            row.push_back(ok ? "1" : "0");
        } else if (opt.mode == "topk") {
            if (ds.sensitive_indices.empty())
                throw ContractError("topk mode needs a dataset with sensitive columns");
            GradientBox box = explanation_bounds(bn, T, loss);
            const bool ok =
                certified_top_k_exclusion(box, ds.sensitive_indices.front(), opt.topk);
            per_input_certified[i] = ok;
            per_input_total[i] = 1;
            row.push_back(ok ? "1" : "0");
        } else if (opt.mode == "untargeted") {
            GradientBox box = explanation_bounds(bn, T, loss);
            Tensor v = input_gradient(net, x, loss).reshaped(box.v_lower.shape());
            CertificationOutcome o = certify_untargeted(box, v, opt.tau);
            per_input_certified[i] = o.certified;
            per_input_total[i] = 1;
            row.push_back(o.certified ? "1" : "0");
            row.push_back(fmt_double(o.score));
            row.push_back(fmt_double(untargeted_norm_ratio(box, v)));
            row.push_back(fmt_double(box.delta_sum()));
        } else if (opt.mode == "targeted") {
            GradientBox box = explanation_bounds(bn, T, loss);
            std::size_t cert_count = 0;
            double min_score = 1e300;
            for (const Tensor& t : targets) {
                CertificationOutcome o = certify_targeted(box, {t, opt.tau});
                cert_count += o.certified;
                min_score = std::min(min_score, o.score);
            }
            per_input_certified[i] = static_cast<double>(cert_count);
            per_input_total[i] = static_cast<double>(targets.size());
            row.push_back(std::to_string(cert_count));
            row.push_back(std::to_string(targets.size()));
            row.push_back(fmt_double(min_score));
        } else {
            throw FormatError("unknown certify mode: " + opt.mode);
        }
        rows[i] = std::move(row);
    });

    double certified = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        certified += per_input_certified[i];
        total += per_input_total[i];
    }
    const double rate = total > 0 ? certified / total : 0.0;

    fs::path out(opt.out_dir);
    std::vector<std::string> header{"input"};
    if (opt.mode == "targeted")
        header.insert(header.end(), {"certified", "targets", "min_score"});
    else if (opt.mode == "untargeted")
        header.insert(header.end(), {"certified", "score", "norm_ratio", "delta_sum"});
    else
        header.push_back("certified");
    write_csv_atomic(out / "certify.csv", header, rows);

    json rj;
    rj["meta"] = report_meta("certify", opt.seed);
    rj["meta"]["model"] = opt.model;
    rj["meta"]["mode"] = opt.mode;
    rj["meta"]["eps"] = opt.eps;
    rj["meta"]["gamma"] = opt.gamma;
    rj["meta"]["tau"] = opt.tau;
    rj["meta"]["loss"] = opt.loss;
    rj["meta"]["exact_corners"] = opt.tight;
    rj["results"] = {{"inputs", n}, {"certified_rate", rate}};
    write_json_atomic(out / "certify.json", rj);
    std::cout << "certified rate (" << opt.mode << ", eps=" << opt.eps << ", gamma=" << opt.gamma
              << "): " << rate << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// attack subcommand
// ---------------------------------------------------------------------------

struct AttackOptions {
    std::string model, data_config, out_dir;
    std::string space = "input"; // input | model
    bool targeted = false;
    double eps = 0.0, gamma = 0.0, tau = 0.04;
    int steps = 100, restarts = 1;
    double step_size = 0.0, h_fd = 1e-4;
    std::string estimator = "fd";
    std::string targets = "corners";
    std::string loss = "logit-pred";
    std::size_t limit = 0, max_targets = 0;
    unsigned threads = 1;
    std::uint64_t seed = 0;
};

int cmd_attack(const AttackOptions& opt) {
    Network net = load_model(opt.model);
    SplitData data = load_split(load_json_file(opt.data_config));
    const Dataset& ds = data.test;
    check_model_data(net, ds);
    const std::size_t n = opt.limit ? std::min(opt.limit, ds.size()) : ds.size();

    std::vector<Tensor> targets;
    if (opt.targeted) {
        targets = make_targets(opt.targets, ds);
        if (opt.max_targets && targets.size() > opt.max_targets) targets.resize(opt.max_targets);
    }

    AttackConfig base;
    base.steps = opt.steps;
    base.restarts = opt.restarts;
    base.step_size = opt.step_size;
    base.h_fd = opt.h_fd;
    base.estimator = (opt.estimator == "double") ? GradientEstimator::DoubleBackward
                                                 : GradientEstimator::CentralFiniteDifference;
    if (opt.space == "input")
        base.mode = opt.targeted ? AttackMode::TargetedInput : AttackMode::UntargetedInput;
    else if (opt.space == "model")
        base.mode = opt.targeted ? AttackMode::TargetedModel : AttackMode::UntargetedModel;
    else
        throw FormatError("attack space must be 'input' or 'model'");

    std::vector<std::vector<std::string>> rows(n);
    std::vector<double> robust(n, 0.0), total(n, 0.0);

    parallel_for_indexed(n, opt.threads, [&](std::size_t i) {
        Tensor x = ds.row(i);
        LossSpec loss = make_loss(opt.loss, net, x, ds.labels[i]);
        AttackConfig cfg = base;
        cfg.seed = Rng::mix(opt.seed, i);
        std::vector<std::string> row{std::to_string(i)};
        auto run_one = [&](const TargetSpec& spec) {
            if (opt.space == "input")
                return input_attack(net, x, input_region_for(ds, x, opt.eps), loss, spec, cfg);
            return model_attack(net, x, ModelRegion(opt.gamma), loss, spec, cfg);
        };
        if (opt.targeted) {
            std::size_t successes = 0;
            double best = 1e300;
            for (const Tensor& t : targets) {
                AttackResult r = run_one(TargetSpec{t, opt.tau});
                successes += r.success;
                best = std::min(best, r.best_objective);
            }
            robust[i] = static_cast<double>(targets.size() - successes);
            total[i] = static_cast<double>(targets.size());
            row.push_back(std::to_string(successes));
            row.push_back(std::to_string(targets.size()));
            row.push_back(fmt_double(best));
        } else {
            AttackResult r = run_one(TargetSpec{Tensor::zeros({net.input_size(), 1}), opt.tau});
            robust[i] = r.success ? 0.0 : 1.0;
            total[i] = 1.0;
            row.push_back(r.success ? "1" : "0");
            row.push_back(fmt_double(r.best_objective));
        }
        rows[i] = std::move(row);
    });

    double rsum = 0, tsum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        rsum += robust[i];
        tsum += total[i];
    }
    const double rate = tsum > 0 ? rsum / tsum : 0.0;

    fs::path out(opt.out_dir);
    std::vector<std::string> header{"input"};
    if (opt.targeted) header.insert(header.end(), {"successes", "targets", "best_objective"});
    else header.insert(header.end(), {"success", "best_objective"});
    write_csv_atomic(out / "attack.csv", header, rows);

    json rj;
    rj["meta"] = report_meta("attack", opt.seed);
    rj["meta"]["model"] = opt.model;
    rj["meta"]["space"] = opt.space;
    rj["meta"]["targeted"] = opt.targeted;
    rj["meta"]["eps"] = opt.eps;
    rj["meta"]["gamma"] = opt.gamma;
    rj["meta"]["tau"] = opt.tau;
    rj["meta"]["steps"] = opt.steps;
    rj["meta"]["estimator"] = opt.estimator;
    rj["results"] = {{"inputs", n}, {"attack_robustness", rate}};
    write_json_atomic(out / "attack.json", rj);
    std::cout << "attack robustness (" << opt.space
              << (opt.targeted ? ", targeted" : ", untargeted") << "): " << rate << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate subcommand
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& model_path, const std::string& data_config,
                 const std::string& grid_path, const std::string& out_dir, unsigned threads,
                 std::uint64_t seed) {
    Network net = load_model(model_path);
    json data_spec = load_json_file(data_config);
    SplitData data = load_split(data_spec);
    const Dataset& ds = data.test;
    check_model_data(net, ds);

    json grid = grid_path.empty() ? json::object() : load_json_file(grid_path);
    const std::size_t n = std::min<std::size_t>(grid.value("limit", std::size_t{200}), ds.size());
    const std::string loss_kind = grid.value("loss", std::string("logit-pred"));
    const double tau_targeted = grid.value("tau_targeted", 0.04);
    const double tau_untargeted = grid.value("tau_untargeted", 0.05);

    fs::path out(out_dir);
    json rj;
    rj["meta"] = report_meta("evaluate", seed);
    rj["meta"]["model"] = model_path;
    rj["meta"]["tau_targeted"] = tau_targeted;
    rj["meta"]["tau_untargeted"] = tau_untargeted;
    rj["meta"]["untargeted_norm_ratio_tau"] = grid.value("tau_norm_ratio", 2.0);
    rj["results"] = json::object();
    rj["results"]["accuracy"] = accuracy(net, ds);
    rj["results"]["inputs"] = n;

    std::vector<Tensor> targets;
    const std::string target_kind = grid.value("targets", std::string(""));
    if (!target_kind.empty()) targets = make_targets(target_kind, ds);

    auto certified_rates = [&](double eps, double gamma) {
        BoundNetwork bn = make_bound_network(net, ModelRegion(gamma));
        std::vector<double> tr(n, 0), tt(n, 0), ur(n, 0), pr(n, 0), nr(n, 0);
        parallel_for_indexed(n, threads, [&](std::size_t i) {
            Tensor x = ds.row(i);
            LossSpec loss = make_loss(loss_kind, net, x, ds.labels[i]);
            InputRegion T = input_region_for(ds, x, eps);
            GradientBox box = explanation_bounds(bn, T, loss);
            Tensor v = input_gradient(net, x, loss).reshaped(box.v_lower.shape());
            ur[i] = certify_untargeted(box, v, tau_untargeted).certified;
            nr[i] = untargeted_norm_ratio(box, v);
            pr[i] = predict(net, x) == ds.labels[i] && logit_bounds_margin(bn, T, ds.labels[i]);
            for (const Tensor& t : targets)
                tr[i] += certify_targeted(box, {t, tau_targeted}).certified;
            tt[i] = static_cast<double>(targets.size());
        });
        double trs = 0, tts = 0, urs = 0, prs = 0, nrs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            trs += tr[i];
            tts += tt[i];
            urs += ur[i];
            prs += pr[i];
            nrs += std::isfinite(nr[i]) ? nr[i] : 0.0;
        }
        json o;
        o["eps"] = eps;
        o["gamma"] = gamma;
        if (tts > 0) o["targeted_certified"] = trs / tts;
        o["untargeted_certified"] = urs / static_cast<double>(n);
        o["mean_norm_ratio"] = nrs / static_cast<double>(n);
        o["certified_prediction"] = prs / static_cast<double>(n);
        return o;
    };

    if (grid.contains("eps")) {
        json panel = json::array();
        std::vector<std::vector<std::string>> input_rows;
        for (double eps : grid["eps"].get<std::vector<double>>()) {
            json o = certified_rates(eps, 0.0);
            panel.push_back(o);
            input_rows.push_back({fmt_double(eps), fmt_double(o.value("targeted_certified", -1.0)),
                                  fmt_double(o["untargeted_certified"].get<double>()),
                                  fmt_double(o["mean_norm_ratio"].get<double>()),
                                  fmt_double(o["certified_prediction"].get<double>())});
        }
        rj["results"]["input_certified"] = panel;
        write_csv_atomic(out / "certified_input.csv",
                         {"eps", "targeted_certified", "untargeted_certified", "mean_norm_ratio",
                          "certified_prediction"},
                         input_rows);
    }
    if (grid.contains("gamma")) {
        json panel = json::array();
        std::vector<std::vector<std::string>> model_rows;
        for (double gamma : grid["gamma"].get<std::vector<double>>()) {
            json o = certified_rates(0.0, gamma);
            panel.push_back(o);
            model_rows.push_back({fmt_double(gamma),
                                  fmt_double(o.value("targeted_certified", -1.0)),
                                  fmt_double(o["untargeted_certified"].get<double>()),
                                  fmt_double(o["mean_norm_ratio"].get<double>()),
                                  fmt_double(o["certified_prediction"].get<double>())});
        }
        rj["results"]["model_certified"] = panel;
        write_csv_atomic(out / "certified_model.csv",
                         {"gamma", "targeted_certified", "untargeted_certified",
                          "mean_norm_ratio", "certified_prediction"},
                         model_rows);
    }

    if (grid.contains("attack")) {
        const json& aj = grid["attack"];
        AttackConfig cfg;
        cfg.steps = aj.value("steps", 20);
        cfg.restarts = aj.value("restarts", 1);
        cfg.estimator = aj.value("estimator", std::string("fd")) == "double"
                            ? GradientEstimator::DoubleBackward
                            : GradientEstimator::CentralFiniteDifference;
        const std::size_t an = std::min<std::size_t>(aj.value("limit", n), n);
        json panel = json::array();
        std::vector<std::vector<std::string>> arows;
        for (double eps : aj.value("eps", std::vector<double>{})) {
            std::vector<double> robust(an, 0);
            parallel_for_indexed(an, threads, [&](std::size_t i) {
                Tensor x = ds.row(i);
                LossSpec loss = make_loss(loss_kind, net, x, ds.labels[i]);
                AttackConfig c = cfg;
                c.mode = AttackMode::UntargetedInput;
                c.seed = Rng::mix(seed, i);
                AttackResult r =
                    input_attack(net, x, input_region_for(ds, x, eps), loss,
                                 TargetSpec{Tensor::zeros({net.input_size(), 1}), tau_untargeted},
                                 c);
                robust[i] = r.success ? 0.0 : 1.0;
            });
            double rs = 0;
            for (double v : robust) rs += v;
            json o{{"eps", eps}, {"untargeted_attack_robustness", rs / static_cast<double>(an)}};
            panel.push_back(o);
            arows.push_back({fmt_double(eps), fmt_double(rs / static_cast<double>(an))});
        }
        rj["results"]["attack"] = panel;
        write_csv_atomic(out / "attack_robustness.csv", {"eps", "untargeted_attack_robustness"},
                         arows);
    }

    if (grid.contains("bias_sweep")) {
        const json& bj = grid["bias_sweep"];
        TrainConfig tc = parse_train_config(bj.value("train", json::object()));
        json arch = bj.value("architecture", json("fcn-2x128"));
        json panel = json::array();
        std::vector<std::vector<std::string>> brows;
        for (double p : bj.at("p").get<std::vector<double>>()) {
            Dataset poisoned =
                label_poison(data.train, p, bj.value("poison_seed", std::uint64_t{17}));
            Network biased = build_architecture(arch, poisoned);
            Rng init_rng(Rng::mix(tc.seed, 0x121));
            init_parameters(biased, init_rng);
            fit(biased, poisoned, tc, &data.test);
            const std::size_t j = ds.sensitive_indices.front();
            double score = 0;
            for (std::size_t i = 0; i < n; ++i) {
                Tensor x = ds.row(i);
                LossSpec loss = make_loss(loss_kind, biased, x, ds.labels[i]);
                score += bias_score(input_gradient(biased, x, loss).reshaped({x.size(), 1}), j);
            }
            score /= static_cast<double>(n);
            const double acc = accuracy(biased, data.test);
            panel.push_back({{"p", p}, {"bias_score", score}, {"accuracy", acc}});
            brows.push_back({fmt_double(p), fmt_double(score), fmt_double(acc)});
        }
        rj["results"]["bias_sweep"] = panel;
        write_csv_atomic(out / "bias_sweep.csv", {"p", "bias_score", "accuracy"}, brows);
    }

    write_json_atomic(out / "evaluate.json", rj);
    std::cout << "accuracy: " << rj["results"]["accuracy"].get<double>() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// demo-halfmoons subcommand
// ---------------------------------------------------------------------------

int cmd_demo_halfmoons(const std::string& out_dir, std::uint64_t seed, std::size_t epochs) {
    Dataset ds = half_moons(500, 0.06, 23);
    auto [train_ds, test_ds] = train_test_split(ds, 0.8, 3);
    const std::vector<double> sweep{0.0, 0.05, 0.1, 0.2};

    fs::path out(out_dir);
    std::vector<std::vector<std::string>> rows;
    json panel = json::array();
    for (double eps_t : sweep) {
        Rng rng(Rng::mix(seed, 51));
        Network net(Shape{2});
        net.add_dense(16, Activation::Tanh)
            .add_dense(16, Activation::Tanh)
            .add_dense(2, Activation::Identity);
        init_parameters(net, rng);
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = 32;
        cfg.seed = Rng::mix(seed, 5);
        cfg.optimizer = AdamConfig{1e-2};
        cfg.probe_size = 20;
        cfg.probe_eps = 0.05;
        if (eps_t > 0) cfg.regularizer = GradCertReg{1.0, eps_t, 0.0, BoundSeed::ClassLogit};
        TrainReport r = fit(net, train_ds, cfg, &test_ds);
        const double disp = gradient_dispersion(net, 32);
        const double acc = r.epochs.back().test_accuracy;
        const double probe = r.epochs.back().probe_delta_sum;
        save_model(net, (out / ("model_eps_t_" + fmt_double(eps_t) + ".json")).string());
        rows.push_back({fmt_double(eps_t), fmt_double(acc), fmt_double(disp), fmt_double(probe)});
        panel.push_back(
            {{"eps_t", eps_t}, {"accuracy", acc}, {"dispersion", disp}, {"probe_delta", probe}});
        std::cout << "eps_t=" << eps_t << " accuracy=" << acc << " dispersion=" << disp << "\n";
    }
    write_csv_atomic(out / "halfmoons_sweep.csv",
                     {"eps_t", "test_accuracy", "gradient_dispersion", "probe_delta_sum"}, rows);
    json rj;
    rj["meta"] = report_meta("demo-halfmoons", seed);
    rj["results"] = {{"sweep", panel}};
    write_json_atomic(out / "demo_halfmoons.json", rj);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"certified robustness for gradient-based explanations"};
    app.require_subcommand(1);

    std::string out_dir = "out";
    unsigned threads = 1;
    std::uint64_t seed = 0;

    auto* train_cmd = app.add_subcommand("train", "train a model from a config");
    std::string train_config;
    std::uint64_t train_seed = 0;
    CLI::Option* train_seed_opt;
    train_cmd->add_option("--config", train_config, "training config JSON")->required();
    train_cmd->add_option("--out", out_dir, "output directory");
    train_seed_opt = train_cmd->add_option("--seed", train_seed, "override the config seed");

    auto* cert_cmd = app.add_subcommand("certify", "certify explanations over a region");
    CertifyOptions copt;
    cert_cmd->add_option("--model", copt.model, "model JSON file")->required();
    cert_cmd->add_option("--data", copt.data_config, "dataset config JSON")->required();
    cert_cmd->add_option("--eps", copt.eps, "input perturbation radius");
    cert_cmd->add_option("--gamma", copt.gamma, "relative parameter radius");
    cert_cmd->add_option("--tau", copt.tau, "similarity threshold");
    cert_cmd->add_option("--mode", copt.mode, "targeted|untargeted|topk|prediction");
    cert_cmd->add_option("--targets", copt.targets, "corners|sensitive");
    cert_cmd->add_option("--loss", copt.loss, "logit-pred|logit-true|ce|se");
    cert_cmd->add_option("--limit", copt.limit, "max test inputs (0 = all)");
    cert_cmd->add_option("--topk", copt.topk, "k for topk mode");
    cert_cmd->add_flag("--tight", copt.tight, "corner-exact interval products");
    cert_cmd->add_option("--threads", copt.threads, "worker threads");
    cert_cmd->add_option("--seed", copt.seed, "report seed");
    cert_cmd->add_option("--out", copt.out_dir, "output directory");

    auto* atk_cmd = app.add_subcommand("attack", "first-order explanation attacks");
    AttackOptions aopt;
    atk_cmd->add_option("--model", aopt.model, "model JSON file")->required();
    atk_cmd->add_option("--data", aopt.data_config, "dataset config JSON")->required();
    atk_cmd->add_option("--space", aopt.space, "input|model");
    atk_cmd->add_flag("--targeted", aopt.targeted, "targeted attack (default untargeted)");
    atk_cmd->add_option("--eps", aopt.eps, "input radius (input space)");
    atk_cmd->add_option("--gamma", aopt.gamma, "relative parameter radius (model space)");
    atk_cmd->add_option("--tau", aopt.tau, "success threshold");
    atk_cmd->add_option("--steps", aopt.steps, "PGD steps");
    atk_cmd->add_option("--step-size", aopt.step_size, "PGD step size (0 = 2.5 r / steps)");
    atk_cmd->add_option("--restarts", aopt.restarts, "random restarts");
    atk_cmd->add_option("--estimator", aopt.estimator, "fd|double");
    atk_cmd->add_option("--h-fd", aopt.h_fd, "finite-difference step");
    atk_cmd->add_option("--targets", aopt.targets, "corners|sensitive");
    atk_cmd->add_option("--max-targets", aopt.max_targets, "cap targeted masks (0 = all)");
    atk_cmd->add_option("--loss", aopt.loss, "logit-pred|logit-true|ce|se");
    atk_cmd->add_option("--limit", aopt.limit, "max test inputs (0 = all)");
    atk_cmd->add_option("--threads", aopt.threads, "worker threads");
    atk_cmd->add_option("--seed", aopt.seed, "attack seed");
    atk_cmd->add_option("--out", aopt.out_dir, "output directory");

    auto* eval_cmd = app.add_subcommand("evaluate", "combined metric report");
    std::string eval_model, eval_data, eval_grid;
    eval_cmd->add_option("--model", eval_model, "model JSON file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset config JSON")->required();
    eval_cmd->add_option("--grid", eval_grid, "evaluation grid JSON");
    eval_cmd->add_option("--threads", threads, "worker threads");
    eval_cmd->add_option("--seed", seed, "report seed");
    eval_cmd->add_option("--out", out_dir, "output directory");

    auto* demo_cmd = app.add_subcommand("demo-halfmoons", "linearization sweep demo");
    std::size_t demo_epochs = 100;
    demo_cmd->add_option("--out", out_dir, "output directory");
    demo_cmd->add_option("--seed", seed, "base seed");
    demo_cmd->add_option("--epochs", demo_epochs, "epochs per run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd)
            return cmd_train(train_config, out_dir,
                             train_seed_opt->count() ? std::optional<std::uint64_t>(train_seed)
                                                     : std::nullopt);
        if (*cert_cmd) {
            if (copt.out_dir.empty()) copt.out_dir = out_dir;
            return cmd_certify(copt);
        }
        if (*atk_cmd) {
            if (aopt.out_dir.empty()) aopt.out_dir = out_dir;
            return cmd_attack(aopt);
        }
        if (*eval_cmd)
            return cmd_evaluate(eval_model, eval_data, eval_grid, out_dir, threads, seed);
        if (*demo_cmd) return cmd_demo_halfmoons(out_dir, seed, demo_epochs);
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
