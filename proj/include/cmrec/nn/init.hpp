// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cmath>
#include <string>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/nn/tensor.hpp"

namespace cmrec::nn {

enum class InitScheme {
    Zeros,
    Gaussian,       // N(0, sigma^2), sigma defaults to 0.01
    GlorotUniform,  // U(-L, L), L = sqrt(6 / (fan_in + fan_out))
};

inline InitScheme parse_init_scheme(const std::string& name) {
    if (name == "zeros") return InitScheme::Zeros;
    if (name == "gaussian") return InitScheme::Gaussian;
    if (name == "glorot_uniform") return InitScheme::GlorotUniform;
    throw ConfigError("unknown init scheme: " + name);
}

/// Deterministic for a given (shape, scheme, seed). For GlorotUniform the
/// fans are (cols, rows) of the matrix; vectors use fan_in = len, fan_out 1.
inline Tensor init_matrix(std::size_t rows, std::size_t cols, InitScheme scheme,
                          std::uint64_t seed, double sigma = 0.01) {
    Tensor t = Tensor::matrix(rows, cols);
    Rng rng(derive_seed(seed, "init", (static_cast<std::uint64_t>(rows) << 20) ^ cols));
    switch (scheme) {
    case InitScheme::Zeros:
        break;
    case InitScheme::Gaussian:
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = sigma * rng.gaussian();
        break;
    case InitScheme::GlorotUniform: {
        const double limit = std::sqrt(6.0 / static_cast<double>(cols + rows));
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = limit * (2.0 * rng.uniform() - 1.0);
        break;
    }
    }
    return t;
}

inline Tensor init_vector(std::size_t len, InitScheme scheme, std::uint64_t seed,
                          double sigma = 0.01) {
    Tensor t = Tensor::vector(len);
    Rng rng(derive_seed(seed, "init", static_cast<std::uint64_t>(len)));
    switch (scheme) {
    case InitScheme::Zeros:
        break;
    case InitScheme::Gaussian:
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = sigma * rng.gaussian();
        break;
    case InitScheme::GlorotUniform: {
        const double limit = std::sqrt(6.0 / static_cast<double>(len + 1));
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = limit * (2.0 * rng.uniform() - 1.0);
        break;
    }
    }
    return t;
}

} // namespace cmrec::nn
