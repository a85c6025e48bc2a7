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

#ifndef GRADCERT_ERRORS_HPP
#define GRADCERT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gradcert {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape/extent mismatch between operands.
struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Violated precondition of an operation contract.
struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(what) {}
};

/// Malformed external input (file format, CSV cell, schema).
struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(what) {}
};

} // namespace gradcert

#endif // GRADCERT_ERRORS_HPP
