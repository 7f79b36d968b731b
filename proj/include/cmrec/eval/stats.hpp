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
#include <cstddef>
#include <limits>
#include <span>

#include "cmrec/common/errors.hpp"

namespace cmrec::eval {

namespace detail {

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction
/// (Numerical Recipes form), accurate to ~1e-14 for the t-test range.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    return h; // converged to working precision in practice well before this
}

inline double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ConfigError("incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace detail

/// Two-sided p-value of a Student-t statistic with nu degrees of freedom:
/// p = I_{nu/(nu+t^2)}(nu/2, 1/2).
inline double student_t_two_sided_p(double t, double nu) {
    if (nu <= 0) throw ConfigError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    const double x = nu / (nu + t * t);
    return detail::incomplete_beta(nu / 2.0, 0.5, x);
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    bool degenerate = false; // all differences zero (or zero variance)
};

/// Paired two-sided t-test over aligned per-user metric vectors.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("paired_t_test: samples must be aligned and equal length");
    if (a.size() < 2) throw ConfigError("paired_t_test needs at least 2 pairs");
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);
    TTestResult r;
    r.n = n;
    if (var == 0.0) {
        // identical vectors (or constant shift with zero spread and zero mean)
        if (mean == 0.0) {
            r.degenerate = true;
            return r; // t = 0, p = 1 by convention
        }
        r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
    return r;
}

/// Bonferroni gate: significant iff p < 0.05/m.
inline bool bonferroni(double p, int m) {
    if (m < 1) throw ConfigError("bonferroni correction factor must be >= 1");
    return p < 0.05 / static_cast<double>(m);
}

} // namespace cmrec::eval
