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
#include <span>

#include "cmrec/common/errors.hpp"

namespace cmrec::eval {

/// 1-indexed rank of the positive among {positive} ∪ negatives; ties count
/// against the positive (a negative scoring equal pushes the rank down).
inline int rank_of_positive(double positive_score, std::span<const double> negative_scores) {
    int rank = 1;
    for (double s : negative_scores)
        if (s >= positive_score) ++rank;
    return rank;
}

/// Single-relevant-item nDCG: 1/log2(rank+1) inside the cutoff, else 0.
inline double ndcg_at_k(int rank, int k = 10) {
    if (rank < 1) throw ConfigError("rank must be >= 1");
    if (rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

inline double hr_at_k(int rank, int k = 10) {
    if (rank < 1) throw ConfigError("rank must be >= 1");
    return rank <= k ? 1.0 : 0.0;
}

} // namespace cmrec::eval
