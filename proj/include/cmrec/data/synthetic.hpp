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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/data/registry.hpp"

namespace cmrec::data {

/// Planted-factor generator spec. Each market's item pool mixes a shared core
/// (`item_overlap` fraction) with market-exclusive items. `divergence` plants
/// the cross-market structure that market-aware models should pick up: it
/// scales both per-market Givens rotations of the item factors and the spread
/// of a per-market weight on a shared item-popularity column (the latter is
/// what an elementwise market gate can genuinely express — a rotation alone
/// is absorbed into per-market user vectors and leaves no statistical trace).
struct SynthSpec {
    int n_markets = 3;
    int users_per_market = 50;
    int items_per_market = 40;
    int interactions_per_user = 20;
    double item_overlap = 0.5;
    double divergence = 0.0; // 0 → every market shares one factor model
    double noise = 0.1;      // sigma of the score jitter
    int latent_dim = 8;

    void validate() const {
        if (n_markets < 1) throw ConfigError("synthetic: need at least one market");
        if (n_markets > 26) throw ConfigError("synthetic: at most 26 markets");
        if (users_per_market < 1 || items_per_market < 1)
            throw ConfigError("synthetic: users/items per market must be positive");
        if (interactions_per_user < 1)
            throw ConfigError("synthetic: interactions per user must be positive");
        if (interactions_per_user > items_per_market)
            throw ConfigError("synthetic: interactions per user exceed the market item pool");
        if (item_overlap < 0.0 || item_overlap > 1.0)
            throw ConfigError("synthetic: item_overlap must be in [0, 1]");
        if (divergence < 0.0 || divergence > 1.0)
            throw ConfigError("synthetic: divergence must be in [0, 1]");
        if (noise < 0.0) throw ConfigError("synthetic: noise must be >= 0");
        if (latent_dim < 1) throw ConfigError("synthetic: latent_dim must be >= 1");
        if (divergence > 0.0 && latent_dim < 2)
            throw ConfigError("synthetic: divergence needs latent_dim >= 2");
    }
};

struct SynthRow {
    std::string market, user, item;
    double rating;
    std::int64_t timestamp;
};

/// Spread of the per-market weight on the popularity column. Weights are
/// zero-mean, so diverging markets routinely disagree in sign: pooled
/// market-blind training then sees the column cancel, while a market gate
/// can reconcile both markets. divergence 0 turns the column off entirely.
inline constexpr double kPopularitySpread = 5.0;

namespace detail {

struct Givens {
    int a, b;
    double c, s;
};

inline std::vector<Givens> market_rotation(const SynthSpec& spec, Rng& rng) {
    std::vector<Givens> rot;
    for (int a = 0; a + 1 < spec.latent_dim; a += 2) {
        const double angle = spec.divergence * (std::acos(-1.0) / 2.0) * rng.uniform();
        rot.push_back({a, a + 1, std::cos(angle), std::sin(angle)});
    }
    for (int a = 1; a + 1 < spec.latent_dim; a += 2) {
        const double angle = spec.divergence * (std::acos(-1.0) / 2.0) * rng.uniform();
        rot.push_back({a, a + 1, std::cos(angle), std::sin(angle)});
    }
    return rot;
}

inline void apply_rotation(const std::vector<Givens>& rot, std::vector<double>& v) {
    for (const Givens& g : rot) {
        const double va = v[g.a], vb = v[g.b];
        v[g.a] = g.c * va - g.s * vb;
        v[g.b] = g.s * va + g.c * vb;
    }
}

inline std::string pad_id(const char* prefix, int n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05d", prefix, n);
    return buf;
}

} // namespace detail

/// Deterministic synthetic interactions: every user takes their
/// `interactions_per_user` best-scoring pool items under the planted model
/// score <u, R_l v_i> + s_l beta_i + noise, with distinct per-user timestamps.
inline std::vector<SynthRow> generate_synthetic_rows(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int core = static_cast<int>(std::lround(spec.item_overlap * spec.items_per_market));
    const int exclusive = spec.items_per_market - core;
    const int n_items = core + spec.n_markets * exclusive;

    Rng rng(derive_seed(seed, "synth"));
    std::vector<std::vector<double>> item_vec(n_items, std::vector<double>(spec.latent_dim));
    for (auto& v : item_vec)
        for (double& x : v) x = rng.gaussian();
    std::vector<double> beta(n_items); // popularity column, weighted per market
    for (double& b : beta) b = rng.gaussian();

    std::vector<std::string> item_token(n_items);
    for (int i = 0; i < core; ++i) item_token[i] = detail::pad_id("core", i);

    std::vector<SynthRow> rows;
    rows.reserve(static_cast<std::size_t>(spec.n_markets) * spec.users_per_market *
                 spec.interactions_per_user);
    for (int l = 0; l < spec.n_markets; ++l) {
        const std::string code = std::string("s") + static_cast<char>('a' + l);
        std::vector<int> pool(core);
        std::iota(pool.begin(), pool.end(), 0);
        for (int e = 0; e < exclusive; ++e) {
            const int i = core + l * exclusive + e;
            item_token[i] = detail::pad_id(("x" + code).c_str(), e);
            pool.push_back(i);
        }
        const auto rot = detail::market_rotation(spec, rng);
        const double pop = spec.divergence * kPopularitySpread * rng.gaussian();
        std::vector<std::vector<double>> rotated(pool.size());
        for (std::size_t j = 0; j < pool.size(); ++j) {
            rotated[j] = item_vec[pool[j]];
            detail::apply_rotation(rot, rotated[j]);
        }

        for (int u = 0; u < spec.users_per_market; ++u) {
            std::vector<double> uvec(spec.latent_dim);
            for (double& x : uvec) x = rng.gaussian();
            std::vector<std::pair<double, int>> scored(pool.size());
            for (std::size_t j = 0; j < pool.size(); ++j) {
                double s = pop * beta[pool[j]];
                for (int k = 0; k < spec.latent_dim; ++k) s += uvec[k] * rotated[j][k];
                scored[j] = {s + spec.noise * rng.gaussian(), pool[j]};
            }
            std::partial_sort(scored.begin(), scored.begin() + spec.interactions_per_user,
                              scored.end(), [](const auto& a, const auto& b) {
                                  return a.first > b.first ||
                                         (a.first == b.first && a.second < b.second);
                              });
            std::vector<std::size_t> order(static_cast<std::size_t>(spec.interactions_per_user));
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);
            const std::string user = detail::pad_id("u", u);
            for (int j = 0; j < spec.interactions_per_user; ++j)
                rows.push_back(SynthRow{code, user, item_token[scored[j].second], 1.0,
                                        1600000000 + static_cast<std::int64_t>(order[j])});
        }
    }
    return rows;
}

inline void write_rows_tsv(const std::vector<SynthRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const SynthRow& r : rows) {
        out << r.market << '\t' << r.user << '\t' << r.item << '\t' << r.rating << '\t'
            << r.timestamp << '\n';
    }
    if (!out) throw DataError("failed writing: " + path);
}

/// Generation + ingestion in one step for in-memory use.
inline BuiltDataset generate_synthetic_markets(const SynthSpec& spec, std::uint64_t seed) {
    DatasetBuilder b;
    for (const SynthRow& r : generate_synthetic_rows(spec, seed))
        b.add_row(r.market, r.user, r.item, r.rating, r.timestamp, true);
    return b.build();
}

} // namespace cmrec::data
