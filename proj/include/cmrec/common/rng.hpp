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
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cmrec {

/// 64-bit FNV-1a. Used for seed derivation and dataset fingerprints, so the
/// exact byte feed order is part of the persisted-format contract.
class Fnv1a {
public:
    static constexpr std::uint64_t kOffset = 1469598103934665603ull;
    static constexpr std::uint64_t kPrime = 1099511628211ull;

    Fnv1a& add_byte(unsigned char b) {
        state_ ^= b;
        state_ *= kPrime;
        return *this;
    }

    Fnv1a& add(std::string_view s) {
        for (char c : s) add_byte(static_cast<unsigned char>(c));
        return add_byte(0xffu); // field separator
    }

    Fnv1a& add(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) add_byte(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
        return *this;
    }

    Fnv1a& add(std::int64_t v) { return add(static_cast<std::uint64_t>(v)); }
    Fnv1a& add(int v) { return add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }

    Fnv1a& add(double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        __builtin_memcpy(&bits, &v, sizeof(bits));
        return add(bits);
    }

    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = kOffset;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    Fnv1a h;
    h.add(master).add(tag);
    return h.digest();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view a, std::string_view b,
                                 std::string_view c) {
    Fnv1a h;
    h.add(master).add(a).add(b).add(c);
    return h.digest();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t n) {
    Fnv1a h;
    h.add(master).add(tag).add(n);
    return h.digest();
}

/// Deterministic RNG with hand-rolled distributions. std:: distributions are
/// implementation-defined; these are pinned so identical seeds reproduce
/// identical streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return v % n;
    }

    /// Standard normal via Box-Muller (no spare caching: call order maps
    /// 1:1 onto the underlying stream).
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

} // namespace cmrec
