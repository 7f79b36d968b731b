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
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/data/registry.hpp"

namespace cmrec::data {

inline constexpr int kEvalNegatives = 99;

/// One ranking task: the held-out positive against fixed negatives.
struct EvalRecord {
    int user = -1;
    int positive = -1;
    std::vector<int> negatives;
    int market = -1;
    bool shortfall = false; // pool had fewer than the requested negatives

    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct MarketSplit {
    std::vector<Interaction> train;
    std::vector<EvalRecord> validation;
    std::vector<EvalRecord> test;
};

/// Per-market splits over one frozen registry, reproducible from
/// (dataset_fingerprint, seed).
struct SplitDataset {
    std::uint64_t seed = 0;
    std::uint64_t dataset_fingerprint = 0;
    std::vector<MarketSplit> markets;
};

/// Draws k distinct items from `pool` minus `positives` (both ascending).
/// Returns all remaining candidates when fewer than k exist.
inline std::vector<int> sample_eval_negatives(const std::vector<int>& pool,
                                              const std::vector<int>& positives, int k, Rng& rng,
                                              bool* shortfall = nullptr) {
    std::vector<int> candidates;
    candidates.reserve(pool.size());
    for (int i : pool)
        if (!std::binary_search(positives.begin(), positives.end(), i)) candidates.push_back(i);
    if (shortfall) *shortfall = static_cast<int>(candidates.size()) < k;
    if (static_cast<int>(candidates.size()) <= k) return candidates;
    // partial Fisher-Yates: first k slots become the sample
    for (int j = 0; j < k; ++j) {
        const std::size_t pick = j + rng.below(candidates.size() - j);
        std::swap(candidates[j], candidates[pick]);
    }
    candidates.resize(k);
    return candidates;
}

/// Latest interaction → test, second latest → validation, rest → train.
/// Users with fewer than three interactions contribute train data only.
/// Missing timestamps order below any timestamp; remaining ties take a
/// per-user seeded random order.
inline SplitDataset leave_one_out_split(const BuiltDataset& data, std::uint64_t seed) {
    const MarketRegistry& reg = data.registry;
    SplitDataset out;
    out.seed = seed;
    out.dataset_fingerprint = data.fingerprint();
    out.markets.resize(reg.n_markets());

    std::vector<std::vector<Interaction>> by_user(reg.n_users());
    for (const Interaction& x : data.interactions) by_user[x.user].push_back(x);

    std::vector<std::vector<int>> positives(reg.n_users());
    for (int u = 0; u < reg.n_users(); ++u) {
        auto& hist = by_user[u];
        if (hist.empty()) continue;
        const int l = hist.front().market;
        for (const Interaction& x : hist) positives[u].push_back(x.item);
        std::sort(positives[u].begin(), positives[u].end());

        std::vector<std::size_t> rank(hist.size());
        for (std::size_t j = 0; j < rank.size(); ++j) rank[j] = j;
        Rng tie(derive_seed(seed, "loo-tie", static_cast<std::uint64_t>(u)));
        tie.shuffle(rank);
        std::vector<std::size_t> idx(hist.size());
        for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto ka = std::tuple(hist[a].has_timestamp,
                                       hist[a].has_timestamp ? hist[a].timestamp : 0, rank[a]);
            const auto kb = std::tuple(hist[b].has_timestamp,
                                       hist[b].has_timestamp ? hist[b].timestamp : 0, rank[b]);
            return ka < kb;
        });

        MarketSplit& split = out.markets[l];
        if (hist.size() < 3) {
            for (std::size_t j : idx) split.train.push_back(hist[j]);
            continue;
        }
        for (std::size_t j = 0; j + 2 < idx.size(); ++j) split.train.push_back(hist[idx[j]]);
        const Interaction& val_x = hist[idx[idx.size() - 2]];
        const Interaction& test_x = hist[idx[idx.size() - 1]];

        auto make_record = [&](const Interaction& held, const char* tag) {
            EvalRecord rec;
            rec.user = u;
            rec.positive = held.item;
            rec.market = l;
            Rng rng(derive_seed(seed, std::string("evalneg:") + tag, static_cast<std::uint64_t>(u)));
            rec.negatives = sample_eval_negatives(reg.market_items(l), positives[u],
                                                  kEvalNegatives, rng, &rec.shortfall);
            return rec;
        };
        split.validation.push_back(make_record(val_x, "val"));
        split.test.push_back(make_record(test_x, "test"));
    }
    return out;
}

/// All train interactions of one market across a split.
inline const std::vector<Interaction>& market_train(const SplitDataset& splits, int market) {
    return splits.markets.at(market).train;
}

/// Train-positive item sets per user (ascending), as needed by the training
/// negative sampler.
inline std::vector<std::vector<int>> train_positives_by_user(const SplitDataset& splits,
                                                             int n_users) {
    std::vector<std::vector<int>> pos(n_users);
    for (const MarketSplit& m : splits.markets)
        for (const Interaction& x : m.train) pos[x.user].push_back(x.item);
    for (auto& v : pos) std::sort(v.begin(), v.end());
    return pos;
}

} // namespace cmrec::data
