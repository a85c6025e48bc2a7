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

#ifndef GRADCERT_DATA_HPP
#define GRADCERT_DATA_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradcert/errors.hpp"
#include "gradcert/random.hpp"
#include "gradcert/tensor.hpp"

namespace gradcert {

/// Immutable dataset: N rows of n features, class labels, per-feature domain
/// bounds, and the encoded indices of sensitive source columns.
struct Dataset {
    Tensor inputs; // {N, n}
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;
    std::vector<std::array<double, 2>> feature_bounds; // per feature [lo, hi]
    std::vector<std::size_t> sensitive_indices;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    Shape input_shape; // {n} or {c,h,w}
    std::string name;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_count() const { return inputs.size() == 0 ? 0 : inputs.cols(); }

    Tensor row(std::size_t i) const {
        const std::size_t n = feature_count();
        std::vector<double> v(n);
        for (std::size_t j = 0; j < n; ++j) v[j] = inputs[i * n + j];
        Tensor t({n, 1}, std::move(v));
        return input_shape.empty() ? t : t.reshaped(input_shape);
    }

    /// Per-feature domain box for input regions (flat).
    std::pair<Tensor, Tensor> domain() const {
        const std::size_t n = feature_count();
        Tensor lo({n, 1}), hi({n, 1});
        for (std::size_t j = 0; j < n; ++j) {
            lo[j] = feature_bounds[j][0];
            hi[j] = feature_bounds[j][1];
        }
        return {lo, hi};
    }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset out = *this;
        const std::size_t n = feature_count();
        out.inputs = Tensor({idx.size(), n});
        out.labels.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            out.labels[r] = labels[idx[r]];
            for (std::size_t j = 0; j < n; ++j) out.inputs[r * n + j] = inputs[idx[r] * n + j];
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// CSV parsing (RFC-4180 subset: header required, quoted fields with ""
// escapes and embedded commas; no embedded line breaks).
// ---------------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(std::istream& in, const std::string& origin) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && t.header.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        cur.push_back('"');
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    cur.push_back(c);
                }
            } else if (c == '"') {
                if (!cur.empty())
                    throw FormatError(origin + ":" + std::to_string(lineno) +
                                      ": quote inside unquoted field");
                quoted = true;
            } else if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (quoted)
            throw FormatError(origin + ":" + std::to_string(lineno) + ": unterminated quote");
        fields.push_back(cur);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            if (fields.size() != t.header.size())
                throw FormatError(origin + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
            t.rows.push_back(std::move(fields));
        }
    }
    if (t.header.empty()) throw FormatError(origin + ": missing header row");
    return t;
}

// ---------------------------------------------------------------------------
// Tabular encoding: one-hot categoricals, min-max normalized numerics.
// ---------------------------------------------------------------------------

/// Schema document: {"target": col, "categorical": [cols...],
/// "sensitive": [cols...], "positive_label": optional}.
struct TabularSchema {
    std::string target;
    std::vector<std::string> categorical;
    std::vector<std::string> sensitive;
    std::optional<std::string> positive_label;

    static TabularSchema from_json(const nlohmann::json& j) {
        TabularSchema s;
        if (!j.contains("target") || !j["target"].is_string())
            throw FormatError("schema: missing string field 'target'");
        s.target = j["target"].get<std::string>();
        if (j.contains("categorical"))
            s.categorical = j["categorical"].get<std::vector<std::string>>();
        if (j.contains("sensitive"))
            s.sensitive = j["sensitive"].get<std::vector<std::string>>();
        if (j.contains("positive_label"))
            s.positive_label = j["positive_label"].get<std::string>();
        return s;
    }
};

/// Inverse map for the numeric normalization (round-trip checks, reporting).
struct TabularEncoding {
    struct NumericCol {
        std::string name;
        double min = 0.0, max = 0.0;
        std::size_t feature_index = 0;
    };
    std::vector<NumericCol> numeric;

    double denormalize(std::size_t numeric_col, double v) const {
        const auto& c = numeric.at(numeric_col);
        return c.min + v * (c.max - c.min);
    }
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
}

} // namespace detail

inline std::pair<Dataset, TabularEncoding> encode_tabular(const CsvTable& table,
                                                          const TabularSchema& schema,
                                                          const std::string& name) {
    auto col_index = [&](const std::string& col) {
        for (std::size_t i = 0; i < table.header.size(); ++i)
            if (table.header[i] == col) return i;
        throw FormatError("schema column '" + col + "' not found in CSV header");
    };

    const std::size_t target_col = col_index(schema.target);
    std::vector<std::size_t> cat_cols;
    for (const auto& c : schema.categorical) cat_cols.push_back(col_index(c));
    for (const auto& c : schema.sensitive) col_index(c); // existence check

    auto is_categorical = [&](std::size_t c) {
        return std::find(cat_cols.begin(), cat_cols.end(), c) != cat_cols.end();
    };

    // class labels: sorted distinct target values; positive_label forced to class 1
    std::vector<std::string> classes;
    for (const auto& row : table.rows)
        if (std::find(classes.begin(), classes.end(), row[target_col]) == classes.end())
            classes.push_back(row[target_col]);
    std::sort(classes.begin(), classes.end());
    if (schema.positive_label) {
        auto it = std::find(classes.begin(), classes.end(), *schema.positive_label);
        if (it == classes.end())
            throw FormatError("positive_label '" + *schema.positive_label +
                              "' never occurs in target column");
        if (classes.size() != 2)
            throw FormatError("positive_label requires a binary target");
        if (it != classes.begin() + 1) std::iter_swap(classes.begin() + 1, it);
    }

    // categorical levels: sorted distinct values per column
    std::map<std::size_t, std::vector<std::string>> levels;
    for (std::size_t c : cat_cols) {
        auto& lv = levels[c];
        for (const auto& row : table.rows)
            if (std::find(lv.begin(), lv.end(), row[c]) == lv.end()) lv.push_back(row[c]);
        std::sort(lv.begin(), lv.end());
    }

    // numeric ranges
    std::map<std::size_t, std::pair<double, double>> ranges;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == target_col || is_categorical(c)) continue;
        double lo = 0, hi = 0;
        bool first = true;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            double v;
            if (!detail::parse_double(table.rows[r][c], v))
                throw FormatError(name + ": row " + std::to_string(r + 2) + ", column '" +
                                  table.header[c] + "': cannot parse numeric value '" +
                                  table.rows[r][c] + "'");
            if (first) {
                lo = hi = v;
                first = false;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        ranges[c] = {lo, hi};
    }

    // feature layout, in header order
    Dataset ds;
    TabularEncoding enc;
    std::vector<std::function<double(const std::vector<std::string>&)>> encoders;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == target_col) continue;
        const bool sensitive_col =
            std::find(schema.sensitive.begin(), schema.sensitive.end(), table.header[c]) !=
            schema.sensitive.end();
        if (is_categorical(c)) {
            for (const std::string& lv : levels[c]) {
                if (sensitive_col) ds.sensitive_indices.push_back(encoders.size());
                ds.feature_names.push_back(table.header[c] + "=" + lv);
                encoders.push_back([c, lv](const std::vector<std::string>& row) {
                    return row[c] == lv ? 1.0 : 0.0;
                });
            }
        } else {
            const auto [lo, hi] = ranges[c];
            if (sensitive_col) ds.sensitive_indices.push_back(encoders.size());
            enc.numeric.push_back({table.header[c], lo, hi, encoders.size()});
            ds.feature_names.push_back(table.header[c]);
            encoders.push_back([c, lo, hi, &table, &name](const std::vector<std::string>& row) {
                double v = 0;
                detail::parse_double(row[c], v);
                // zero-range columns normalize to 0, not NaN
                return hi > lo ? (v - lo) / (hi - lo) : 0.0;
            });
        }
    }

    const std::size_t n = encoders.size();
    ds.inputs = Tensor({table.rows.size(), n});
    ds.labels.resize(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        ds.labels[r] = static_cast<std::size_t>(
            std::find(classes.begin(), classes.end(), row[target_col]) - classes.begin());
        for (std::size_t j = 0; j < n; ++j) ds.inputs[r * n + j] = encoders[j](row);
    }
    ds.class_count = classes.size();
    ds.class_names = classes;
    ds.feature_bounds.assign(n, {0.0, 1.0});
    ds.input_shape = {n};
    ds.name = name;
    return {std::move(ds), std::move(enc)};
}

inline std::pair<Dataset, TabularEncoding> load_tabular_full(const std::string& csv_path,
                                                             const std::string& schema_path) {
    std::ifstream csv(csv_path);
    if (!csv) throw FormatError("cannot open CSV file: " + csv_path);
    std::ifstream sf(schema_path);
    if (!sf) throw FormatError("cannot open schema file: " + schema_path);
    nlohmann::json sj;
    try {
        sf >> sj;
    } catch (const std::exception& e) {
        throw FormatError("schema " + schema_path + ": " + e.what());
    }
    CsvTable table = parse_csv(csv, csv_path);
    return encode_tabular(table, TabularSchema::from_json(sj), csv_path);
}

inline Dataset load_tabular(const std::string& csv_path, const std::string& schema_path) {
    return load_tabular_full(csv_path, schema_path).first;
}

// ---------------------------------------------------------------------------
// IDX image/label files (big-endian magic, dimension sizes, raw bytes).
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& origin, std::size_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw FormatError(origin + ": truncated at offset " + std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace detail

/// Load IDX images + labels; pixels divided by 255 into [0,1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream im(images_path, std::ios::binary);
    if (!im) throw FormatError("cannot open IDX image file: " + images_path);
    std::ifstream lb(labels_path, std::ios::binary);
    if (!lb) throw FormatError("cannot open IDX label file: " + labels_path);

    const std::uint32_t im_magic = detail::read_be32(im, images_path, 0);
    if (im_magic != 0x00000803u)
        throw FormatError(images_path + ": bad image magic at offset 0 (expected 0x00000803)");
    const std::uint32_t count = detail::read_be32(im, images_path, 4);
    const std::uint32_t h = detail::read_be32(im, images_path, 8);
    const std::uint32_t w = detail::read_be32(im, images_path, 12);

    const std::uint32_t lb_magic = detail::read_be32(lb, labels_path, 0);
    if (lb_magic != 0x00000801u)
        throw FormatError(labels_path + ": bad label magic at offset 0 (expected 0x00000801)");
    const std::uint32_t lcount = detail::read_be32(lb, labels_path, 4);
    if (lcount != count)
        throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                          std::to_string(lcount) + " labels");

    // payload length must equal count * h * w before anything is allocated
    {
        namespace fs = std::filesystem;
        std::error_code ec;
        const auto actual = fs::file_size(images_path, ec);
        const std::uintmax_t expected =
            16 + static_cast<std::uintmax_t>(count) * h * w;
        if (!ec && actual != expected)
            throw FormatError(images_path + ": truncated or oversized payload (expected " +
                              std::to_string(expected) + " bytes, file has " +
                              std::to_string(actual) + ")");
    }

    const std::size_t n = static_cast<std::size_t>(h) * w;
    Dataset ds;
    ds.inputs = Tensor({count, n});
    ds.labels.resize(count);
    std::vector<unsigned char> buf(n);
    for (std::uint32_t i = 0; i < count; ++i) {
        im.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (!im)
            throw FormatError(images_path + ": truncated at offset " +
                              std::to_string(16 + std::size_t(i) * n));
        for (std::size_t j = 0; j < n; ++j) ds.inputs[i * n + j] = buf[j] / 255.0;
        char lab;
        lb.read(&lab, 1);
        if (!lb)
            throw FormatError(labels_path + ": truncated at offset " + std::to_string(8 + i));
        ds.labels[i] = static_cast<unsigned char>(lab);
    }
    ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.feature_bounds.assign(n, {0.0, 1.0});
    ds.input_shape = {1, h, w};
    ds.name = images_path;
    for (std::size_t j = 0; j < n; ++j) ds.feature_names.push_back("px" + std::to_string(j));
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Two interleaving arcs with Gaussian radial jitter, scaled to [0,1]^2.
inline Dataset half_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n % 2 != 0) throw ContractError("half_moons: n must be even");
    Rng rng(seed);
    const std::size_t half = n / 2;
    Tensor pts({n, 2});
    std::vector<std::size_t> labels(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < half; ++i) {
        const double t = half == 1 ? 0.0 : pi * static_cast<double>(i) / (half - 1);
        // outer moon centered at (0,0); inner moon offset per the usual layout
        const double r0 = 1.0 + rng.normal(0.0, noise);
        pts[(2 * i) * 2 + 0] = r0 * std::cos(t);
        pts[(2 * i) * 2 + 1] = r0 * std::sin(t);
        labels[2 * i] = 0;
        const double r1 = 1.0 + rng.normal(0.0, noise);
        pts[(2 * i + 1) * 2 + 0] = 1.0 - r1 * std::cos(t);
        pts[(2 * i + 1) * 2 + 1] = 0.5 - r1 * std::sin(t);
        labels[2 * i + 1] = 1;
    }
    // min-max scale to the unit square
    for (std::size_t d = 0; d < 2; ++d) {
        double lo = pts[d], hi = pts[d];
        for (std::size_t i = 0; i < n; ++i) {
            lo = std::min(lo, pts[i * 2 + d]);
            hi = std::max(hi, pts[i * 2 + d]);
        }
        for (std::size_t i = 0; i < n; ++i)
            pts[i * 2 + d] = hi > lo ? (pts[i * 2 + d] - lo) / (hi - lo) : 0.0;
    }
    Dataset ds;
    ds.inputs = std::move(pts);
    ds.labels = std::move(labels);
    ds.class_count = 2;
    ds.feature_bounds.assign(2, {0.0, 1.0});
    ds.feature_names = {"x0", "x1"};
    ds.class_names = {"outer", "inner"};
    ds.input_shape = {2};
    ds.name = "half_moons";
    return ds;
}

/// Deterministic image classification set: per-class smooth random templates
/// plus pixel noise, clipped to [0,1]. A stand-in for digit data when no IDX
/// files are available.
inline Dataset synthetic_images(std::size_t n, std::size_t classes, std::size_t h, std::size_t w,
                                double noise, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t dim = h * w;
    // smooth templates: random low-frequency bumps
    std::vector<Tensor> templates;
    for (std::size_t c = 0; c < classes; ++c) {
        Tensor t({dim, 1});
        const int bumps = 3;
        for (int b = 0; b < bumps; ++b) {
            const double cy = rng.uniform(0.15, 0.85) * h;
            const double cx = rng.uniform(0.15, 0.85) * w;
            const double sg = rng.uniform(0.08, 0.2) * (h + w) / 2.0;
            const double amp = rng.uniform(0.5, 1.0);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    t[y * w + x] += amp * std::exp(-d2 / (2 * sg * sg));
                }
        }
        double mx = max_abs(t);
        if (mx > 0)
            for (std::size_t i = 0; i < dim; ++i) t[i] = 0.85 * t[i] / mx;
        templates.push_back(std::move(t));
    }
    Dataset ds;
    ds.inputs = Tensor({n, dim});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        ds.labels[i] = c;
        for (std::size_t j = 0; j < dim; ++j) {
            double v = templates[c][j] + rng.normal(0.0, noise);
            ds.inputs[i * dim + j] = std::clamp(v, 0.0, 1.0);
        }
    }
    ds.class_count = classes;
    ds.feature_bounds.assign(dim, {0.0, 1.0});
    ds.input_shape = {1, h, w};
    ds.name = "synthetic_images";
    for (std::size_t j = 0; j < dim; ++j) ds.feature_names.push_back("px" + std::to_string(j));
    return ds;
}

// ---------------------------------------------------------------------------
// Label poisoning and splits
// ---------------------------------------------------------------------------

/// Relabel a uniformly random fraction p of majority-group rows positive
/// (class 1) and of minority-group rows negative (class 0). Group membership
/// comes from the first sensitive feature (binary 0/1 after encoding);
/// majority is the more frequent group, ties toward the encoded-1 group.
inline Dataset label_poison(const Dataset& ds, double p, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw ContractError("label_poison: p must be in [0,1]");
    if (ds.sensitive_indices.empty())
        throw ContractError("label_poison: dataset has no sensitive attribute");
    if (ds.class_count != 2)
        throw ContractError("label_poison: requires a binary classification dataset");
    const std::size_t j = ds.sensitive_indices.front();
    const std::size_t n = ds.feature_count();

    std::vector<std::size_t> group1, group0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double v = ds.inputs[i * n + j];
        if (v != 0.0 && v != 1.0)
            throw ContractError("label_poison: sensitive feature is not binary 0/1");
        (v == 1.0 ? group1 : group0).push_back(i);
    }
    // majority group; ties toward group encoded as 1 (schema order)
    std::vector<std::size_t>& majority = group1.size() >= group0.size() ? group1 : group0;
    std::vector<std::size_t>& minority = group1.size() >= group0.size() ? group0 : group1;

    Dataset out = ds;
    Rng rng(seed);
    auto relabel = [&](std::vector<std::size_t>& rows, std::size_t new_label) {
        rng.shuffle(rows);
        const std::size_t count = static_cast<std::size_t>(p * rows.size());
        for (std::size_t i = 0; i < count; ++i) out.labels[rows[i]] = new_label;
    };
    relabel(majority, 1);
    relabel(minority, 0);
    return out;
}

/// Deterministic shuffled split (default 0.8 train fraction).
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_fraction,
                                                    std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction > 1.0)
        throw ContractError("train_test_split: fraction must be in (0,1]");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    const std::size_t ntrain = static_cast<std::size_t>(train_fraction * ds.size());
    std::vector<std::size_t> a(idx.begin(), idx.begin() + ntrain);
    std::vector<std::size_t> b(idx.begin() + ntrain, idx.end());
    return {ds.subset(a), ds.subset(b)};
}

} // namespace gradcert

#endif // GRADCERT_DATA_HPP
