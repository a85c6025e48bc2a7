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

#ifndef GRADCERT_MODEL_IO_HPP
#define GRADCERT_MODEL_IO_HPP

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gradcert/network.hpp"

namespace gradcert {

// Versioned, self-describing model document. Parameters are decimal 64-bit
// reals in row-major order; the JSON writer emits shortest round-trip
// representations, so save/load is value-exact.

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "softplus") return Activation::Softplus;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw FormatError("unknown activation name: " + s);
}

inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["format"] = "gradcert-model";
    j["version"] = 1;
    j["input_shape"] = net.input_shape();
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t k = 0; k < net.layer_count(); ++k) {
        const LayerSpec& L = net.layer(k);
        nlohmann::json lj;
        lj["activation"] = activation_name(L.activation);
        if (L.is_dense()) {
            lj["kind"] = "dense";
            lj["out_features"] = std::get<DenseSpec>(L.kind).out_features;
        } else if (L.is_conv()) {
            const auto& c = std::get<Conv2DSpec>(L.kind);
            lj["kind"] = "conv2d";
            lj["filters"] = c.filters;
            lj["kernel"] = {c.kh, c.kw};
            lj["stride"] = c.stride;
            lj["pad"] = c.pad;
        } else {
            lj["kind"] = "flatten";
        }
        if (L.has_params()) {
            if (!L.W.all_finite() || !L.b.all_finite())
                throw ContractError("cannot serialize non-finite parameters");
            lj["W"] = L.W.vec();
            lj["b"] = L.b.vec();
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

inline Network network_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j["format"] != "gradcert-model")
        throw FormatError("model document: missing or wrong 'format'");
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw FormatError("model document: unsupported version");
    Network net(j.at("input_shape").get<Shape>());
    for (const auto& lj : j.at("layers")) {
        const std::string kind = lj.at("kind").get<std::string>();
        const Activation act =
            activation_from_name(lj.value("activation", std::string("identity")));
        if (kind == "dense") {
            net.add_dense(lj.at("out_features").get<std::size_t>(), act);
        } else if (kind == "conv2d") {
            const auto kernel = lj.at("kernel").get<std::vector<std::size_t>>();
            if (kernel.size() != 2) throw FormatError("conv2d kernel must be [kh, kw]");
            net.add_conv2d(lj.at("filters").get<std::size_t>(), kernel[0], kernel[1],
                           lj.value("stride", std::size_t{1}), lj.value("pad", std::size_t{0}),
                           act);
        } else if (kind == "flatten") {
            net.add_flatten();
            continue;
        } else {
            throw FormatError("unknown layer kind: " + kind);
        }
        LayerSpec& L = net.layer(net.layer_count() - 1);
        auto W = lj.at("W").get<std::vector<double>>();
        auto b = lj.at("b").get<std::vector<double>>();
        if (W.size() != L.W.size() || b.size() != L.b.size())
            throw FormatError("layer " + std::to_string(net.layer_count() - 1) +
                              ": parameter count does not match declared shape");
        L.W = Tensor(L.W.shape(), std::move(W));
        L.b = Tensor(L.b.shape(), std::move(b));
    }
    return net;
}

/// Write-then-rename so readers never observe partial files.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open for writing: " + tmp.string());
        f << content;
        if (!f) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void save_model(const Network& net, const std::string& path) {
    atomic_write_text(path, network_to_json(net).dump(1));
}

inline Network load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw FormatError("model " + path + ": " + e.what());
    }
    return network_from_json(j);
}

} // namespace gradcert

#endif // GRADCERT_MODEL_IO_HPP
