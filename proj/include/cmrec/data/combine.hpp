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
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/data/split.hpp"

namespace cmrec::data {

/// Uniform sample without replacement of min(|source|, target_size) rows.
/// Fixed by the seed so every model trains on the same subset.
inline std::vector<Interaction> downsample_source(const std::vector<Interaction>& source,
                                                  std::size_t target_size, std::uint64_t seed) {
    if (source.size() <= target_size) return source;
    std::vector<Interaction> rows = source;
    Rng rng(derive_seed(seed, "downsample"));
    for (std::size_t j = 0; j < target_size; ++j) {
        const std::size_t pick = j + rng.below(rows.size() - j);
        std::swap(rows[j], rows[pick]);
    }
    rows.resize(target_size);
    return rows;
}

namespace detail {
/// Every user ID must belong to exactly one market across the combined rows.
inline void check_disjoint_users(const std::vector<Interaction>& rows) {
    std::vector<int> owner;
    for (const Interaction& x : rows) {
        if (static_cast<std::size_t>(x.user) >= owner.size())
            owner.resize(static_cast<std::size_t>(x.user) + 1, -1);
        if (owner[x.user] == -1) owner[x.user] = x.market;
        else if (owner[x.user] != x.market)
            throw DataError("user ID " + std::to_string(x.user) +
                            " appears in two markets; registry invariant violated");
    }
}
} // namespace detail

/// Target train set plus the source train set downsampled to the target's
/// size. Evaluation stays per-market and is untouched by this.
inline std::vector<Interaction> make_pairwise(const std::vector<Interaction>& target_train,
                                              const std::vector<Interaction>& source_train,
                                              std::uint64_t seed) {
    if (!target_train.empty() && !source_train.empty() &&
        target_train.front().market == source_train.front().market)
        throw DataError("pairwise source and target must be different markets");
    std::vector<Interaction> out = target_train;
    std::vector<Interaction> sampled = downsample_source(source_train, target_train.size(), seed);
    out.insert(out.end(), sampled.begin(), sampled.end());
    detail::check_disjoint_users(out);
    return out;
}

/// Concatenation of every market's train set, no downsampling. Fatal if two
/// markets claim the same user ID.
inline std::vector<Interaction> make_global(const SplitDataset& splits) {
    std::vector<Interaction> out;
    std::size_t total = 0;
    for (const MarketSplit& m : splits.markets) total += m.train.size();
    out.reserve(total);
    for (const MarketSplit& m : splits.markets)
        out.insert(out.end(), m.train.begin(), m.train.end());
    detail::check_disjoint_users(out);
    return out;
}

} // namespace cmrec::data
