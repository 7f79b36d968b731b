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

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmrec/common/errors.hpp"
#include "cmrec/data/registry.hpp"
#include "cmrec/data/split.hpp"

namespace cmrec::data {

inline constexpr int kManifestVersion = 1;

struct RegistryIO {
    static nlohmann::json to_json(const MarketRegistry& reg) {
        nlohmann::json j;
        j["format_version"] = kManifestVersion;
        j["fingerprint"] = reg.fingerprint();
        j["markets"] = reg.market_codes_;
        nlohmann::json users = nlohmann::json::array();
        for (int u = 0; u < reg.n_users(); ++u)
            users.push_back({reg.user_markets_[u], reg.user_tokens_[u]});
        j["users"] = std::move(users);
        j["items"] = reg.item_tokens_;
        j["market_items"] = reg.market_items_;
        return j;
    }

    static MarketRegistry from_json(const nlohmann::json& j) {
        if (j.at("format_version").get<int>() != kManifestVersion)
            throw DataError("unsupported registry manifest version");
        MarketRegistry reg;
        reg.market_codes_ = j.at("markets").get<std::vector<std::string>>();
        for (int l = 0; l < reg.n_markets(); ++l) reg.market_index_[reg.market_codes_[l]] = l;
        for (const auto& entry : j.at("users")) {
            const int l = entry.at(0).get<int>();
            const auto token = entry.at(1).get<std::string>();
            reg.user_index_[MarketRegistry::user_key(reg.market_codes_.at(l), token)] =
                reg.n_users();
            reg.user_tokens_.push_back(token);
            reg.user_markets_.push_back(l);
        }
        reg.user_ranges_.assign(reg.market_codes_.size(), {0, 0});
        int cursor = 0;
        for (int l = 0; l < reg.n_markets(); ++l) {
            const int first = cursor;
            while (cursor < reg.n_users() && reg.user_markets_[cursor] == l) ++cursor;
            reg.user_ranges_[l] = {first, cursor};
        }
        if (cursor != reg.n_users())
            throw DataError("registry manifest users are not grouped by market");
        reg.item_tokens_ = j.at("items").get<std::vector<std::string>>();
        for (int i = 0; i < reg.n_items(); ++i) reg.item_index_[reg.item_tokens_[i]] = i;
        reg.market_items_ = j.at("market_items").get<std::vector<std::vector<int>>>();
        if (reg.market_items_.size() != reg.market_codes_.size())
            throw DataError("registry manifest market_items count mismatch");
        const std::uint64_t want = j.at("fingerprint").get<std::uint64_t>();
        if (reg.fingerprint() != want)
            throw DataError("registry manifest fingerprint mismatch (corrupt manifest?)");
        return reg;
    }
};

namespace detail {

inline nlohmann::json interaction_to_json(const Interaction& x) {
    return {x.user, x.item, x.rating, x.timestamp, x.has_timestamp ? 1 : 0, x.market};
}

inline Interaction interaction_from_json(const nlohmann::json& j) {
    Interaction x;
    x.user = j.at(0).get<int>();
    x.item = j.at(1).get<int>();
    x.rating = j.at(2).get<double>();
    x.timestamp = j.at(3).get<std::int64_t>();
    x.has_timestamp = j.at(4).get<int>() != 0;
    x.market = j.at(5).get<int>();
    return x;
}

inline nlohmann::json record_to_json(const EvalRecord& r) {
    return {r.user, r.positive, r.negatives, r.market, r.shortfall ? 1 : 0};
}

inline EvalRecord record_from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.user = j.at(0).get<int>();
    r.positive = j.at(1).get<int>();
    r.negatives = j.at(2).get<std::vector<int>>();
    r.market = j.at(3).get<int>();
    r.shortfall = j.at(4).get<int>() != 0;
    return r;
}

} // namespace detail

inline nlohmann::json splits_to_json(const SplitDataset& splits) {
    nlohmann::json j;
    j["format_version"] = kManifestVersion;
    j["seed"] = splits.seed;
    j["dataset_fingerprint"] = splits.dataset_fingerprint;
    nlohmann::json markets = nlohmann::json::array();
    for (const MarketSplit& m : splits.markets) {
        nlohmann::json jm;
        nlohmann::json train = nlohmann::json::array();
        for (const Interaction& x : m.train) train.push_back(detail::interaction_to_json(x));
        jm["train"] = std::move(train);
        nlohmann::json val = nlohmann::json::array();
        for (const EvalRecord& r : m.validation) val.push_back(detail::record_to_json(r));
        jm["validation"] = std::move(val);
        nlohmann::json test = nlohmann::json::array();
        for (const EvalRecord& r : m.test) test.push_back(detail::record_to_json(r));
        jm["test"] = std::move(test);
        markets.push_back(std::move(jm));
    }
    j["markets"] = std::move(markets);
    return j;
}

inline SplitDataset splits_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kManifestVersion)
        throw DataError("unsupported split manifest version");
    SplitDataset splits;
    splits.seed = j.at("seed").get<std::uint64_t>();
    splits.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();
    for (const auto& jm : j.at("markets")) {
        MarketSplit m;
        for (const auto& e : jm.at("train")) m.train.push_back(detail::interaction_from_json(e));
        for (const auto& e : jm.at("validation")) m.validation.push_back(detail::record_from_json(e));
        for (const auto& e : jm.at("test")) m.test.push_back(detail::record_from_json(e));
        splits.markets.push_back(std::move(m));
    }
    return splits;
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(1, '\t') << '\n';
    if (!out) throw DataError("failed writing: " + path);
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

/// Registry + splits bundle as produced by `prepare` and consumed everywhere
/// else. Fingerprint threading keeps mixed-up directories from training.
struct PreparedDataset {
    MarketRegistry registry;
    SplitDataset splits;
};

inline void save_prepared(const MarketRegistry& reg, const SplitDataset& splits,
                          const std::string& dir) {
    save_json(RegistryIO::to_json(reg), dir + "/registry.json");
    save_json(splits_to_json(splits), dir + "/splits.json");
}

inline PreparedDataset load_prepared(const std::string& dir) {
    PreparedDataset p;
    p.registry = RegistryIO::from_json(load_json(dir + "/registry.json"));
    p.splits = splits_from_json(load_json(dir + "/splits.json"));
    if (p.splits.markets.size() != static_cast<std::size_t>(p.registry.n_markets()))
        throw DataError("split manifest does not match registry market count");
    return p;
}

} // namespace cmrec::data
