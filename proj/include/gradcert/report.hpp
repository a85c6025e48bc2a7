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

#ifndef GRADCERT_REPORT_HPP
#define GRADCERT_REPORT_HPP

#include <atomic>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gradcert/model_io.hpp"

namespace gradcert {

inline void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
    atomic_write_text(path, j.dump(1) + "\n");
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline void write_csv_atomic(const std::filesystem::path& path,
                             const std::vector<std::string>& header,
                             const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i)
        os << (i ? "," : "") << csv_escape(header[i]);
    os << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
        os << "\n";
    }
    atomic_write_text(path, os.str());
}

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// Minimal structural validator for report documents. Schemas are JSON
/// objects with optional "type", "required" (names), and "properties"
/// (name -> sub-schema) fields.
inline bool validate_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                            std::string* error = nullptr, const std::string& where = "$") {
    auto fail = [&](const std::string& msg) {
        if (error) *error = where + ": " + msg;
        return false;
    };
    if (schema.contains("type")) {
        const std::string t = schema["type"].get<std::string>();
        const bool ok = (t == "object" && doc.is_object()) || (t == "array" && doc.is_array()) ||
                        (t == "string" && doc.is_string()) || (t == "number" && doc.is_number()) ||
                        (t == "boolean" && doc.is_boolean()) ||
                        (t == "integer" && doc.is_number_integer());
        if (!ok) return fail("expected type " + t);
    }
    if (schema.contains("required")) {
        for (const auto& name : schema["required"]) {
            if (!doc.is_object() || !doc.contains(name.get<std::string>()))
                return fail("missing required field '" + name.get<std::string>() + "'");
        }
    }
    if (schema.contains("properties") && doc.is_object()) {
        for (const auto& [name, sub] : schema["properties"].items()) {
            if (!doc.contains(name)) continue;
            if (!validate_schema(doc[name], sub, error, where + "." + name)) return false;
        }
    }
    if (schema.contains("items") && doc.is_array()) {
        for (std::size_t i = 0; i < doc.size(); ++i)
            if (!validate_schema(doc[i], schema["items"], error,
                                 where + "[" + std::to_string(i) + "]"))
                return false;
    }
    return true;
}

/// Standard report header: every document records the tool, the seed, and
/// the similarity/scaling conventions, so results are self-describing.
inline nlohmann::json report_meta(const std::string& command, std::uint64_t seed) {
    nlohmann::json meta;
    meta["tool"] = "gradcert";
    meta["format_version"] = 1;
    meta["command"] = command;
    meta["seed"] = seed;
    meta["similarity"] = "mse";
    meta["mse_convention"] = "squared_l2_over_n";
    meta["target_scaling"] = "unit_l2";
    return meta;
}

/// Run f(i) for i in [0, n), spread over worker threads. Each index writes
/// only its own output slots, so the result is identical for any thread
/// count.
template <typename F>
void parallel_for_indexed(std::size_t n, unsigned threads, F f) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(n));
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace gradcert

#endif // GRADCERT_REPORT_HPP
