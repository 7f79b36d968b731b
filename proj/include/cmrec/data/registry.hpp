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
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"

namespace cmrec::data {

/// One implicit-feedback event after ID mapping. Ratings are retained but all
/// interactions are treated as positives.
struct Interaction {
    int user = -1;
    int item = -1;
    double rating = 0.0;
    std::int64_t timestamp = 0;
    bool has_timestamp = false;
    int market = -1;

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Frozen ID space. Markets are numbered by sorted code; user IDs are grouped
/// per market (token-sorted inside each group) so ranges never overlap; item
/// IDs come from one shared token-sorted vocabulary across all markets.
class MarketRegistry {
  public:
    int n_markets() const { return static_cast<int>(market_codes_.size()); }
    int n_users() const { return static_cast<int>(user_tokens_.size()); }
    int n_items() const { return static_cast<int>(item_tokens_.size()); }

    int market_id(const std::string& code) const {
        auto it = market_index_.find(code);
        if (it == market_index_.end()) throw LookupError("unknown market code: " + code);
        return it->second;
    }
    const std::string& market_code(int id) const { return market_codes_.at(id); }

    int user_id(int market, const std::string& token) const {
        auto it = user_index_.find(user_key(market_code(market), token));
        if (it == user_index_.end())
            throw LookupError("unknown user " + token + " in market " + market_code(market));
        return it->second;
    }
    const std::string& user_token(int user) const { return user_tokens_.at(user); }
    int user_market(int user) const { return user_markets_.at(user); }

    int item_id(const std::string& token) const {
        auto it = item_index_.find(token);
        if (it == item_index_.end()) throw LookupError("unknown item token: " + token);
        return it->second;
    }
    const std::string& item_token(int item) const { return item_tokens_.at(item); }

    /// Contiguous [first, last) global user ID range of a market.
    std::pair<int, int> user_range(int market) const { return user_ranges_.at(market); }

    /// Ascending global item IDs observed in a market — its candidate pool.
    const std::vector<int>& market_items(int market) const { return market_items_.at(market); }

    bool market_has_item(int market, int item) const {
        const auto& pool = market_items_.at(market);
        return std::binary_search(pool.begin(), pool.end(), item);
    }

    /// Hash of the full ID mapping (codes, tokens, pools). Two registries with
    /// equal fingerprints assign identical IDs.
    std::uint64_t fingerprint() const {
        Fnv1a h;
        h.add("registry.v1");
        for (const auto& c : market_codes_) h.add(c);
        for (int u = 0; u < n_users(); ++u) {
            h.add(user_tokens_[u]);
            h.add(user_markets_[u]);
        }
        for (const auto& t : item_tokens_) h.add(t);
        for (const auto& pool : market_items_)
            for (int i : pool) h.add(i);
        return h.digest();
    }

    static std::string user_key(const std::string& market_code, const std::string& token) {
        return market_code + '\x1f' + token;
    }

  private:
    friend class DatasetBuilder;
    friend struct RegistryIO;
    std::vector<std::string> market_codes_;
    std::vector<std::string> user_tokens_;
    std::vector<int> user_markets_;
    std::vector<std::string> item_tokens_;
    std::unordered_map<std::string, int> market_index_;
    std::unordered_map<std::string, int> user_index_; // keyed by market_code + \x1f + token
    std::unordered_map<std::string, int> item_index_;
    std::vector<std::pair<int, int>> user_ranges_;
    std::vector<std::vector<int>> market_items_;
};

/// Registry plus the deduplicated, ID-mapped events.
struct BuiltDataset {
    MarketRegistry registry;
    std::vector<Interaction> interactions;

    /// Hash of registry + every interaction; identifies the dataset contents.
    std::uint64_t fingerprint() const {
        Fnv1a h;
        h.add("dataset.v1");
        h.add(registry.fingerprint());
        for (const auto& x : interactions) {
            h.add(x.user);
            h.add(x.item);
            h.add(x.rating);
            h.add(x.timestamp);
            h.add(x.has_timestamp ? 1 : 0);
            h.add(x.market);
        }
        return h.digest();
    }
};

/// Accumulates raw rows (from files or in-memory), then freezes the canonical
/// ID space in one pass so numbering is independent of ingestion order.
class DatasetBuilder {
  public:
    /// Restrict ingestion to these market codes; rows naming others fail.
    void set_allowed_markets(std::vector<std::string> codes) {
        allowed_ = std::set<std::string>(codes.begin(), codes.end());
    }

    /// Declare the base market whose item pool must contain every other
    /// market's pool; checked at build().
    void set_base_market(std::string code) { base_market_ = std::move(code); }

    void add_row(const std::string& market, const std::string& user, const std::string& item,
                 double rating, std::int64_t timestamp, bool has_timestamp,
                 const std::string& where = "") {
        if (market.empty() || user.empty() || item.empty())
            throw DataError(where + "empty market/user/item token");
        if (allowed_ && !allowed_->count(market))
            throw DataError(where + "unknown market code: " + market);
        rows_.push_back(Row{market, user, item, rating, timestamp, has_timestamp, rows_.size()});
    }

    void add_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open interaction file: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            parse_line(path, lineno, line);
        }
    }

    BuiltDataset build() const {
        BuiltDataset out;
        MarketRegistry& reg = out.registry;

        std::set<std::string> markets;
        for (const Row& r : rows_) markets.insert(r.market);
        if (allowed_) markets.insert(allowed_->begin(), allowed_->end());
        for (const auto& c : markets) {
            reg.market_index_[c] = static_cast<int>(reg.market_codes_.size());
            reg.market_codes_.push_back(c);
        }

        std::set<std::string> item_tokens;
        // user tokens grouped per market id (map is ordered → market id order)
        std::map<int, std::set<std::string>> users_by_market;
        for (const Row& r : rows_) {
            item_tokens.insert(r.item);
            users_by_market[reg.market_index_.at(r.market)].insert(r.user);
        }
        for (const auto& t : item_tokens) {
            reg.item_index_[t] = static_cast<int>(reg.item_tokens_.size());
            reg.item_tokens_.push_back(t);
        }
        reg.user_ranges_.assign(markets.size(), {0, 0});
        for (int l = 0; l < reg.n_markets(); ++l) {
            const int first = reg.n_users();
            auto it = users_by_market.find(l);
            if (it != users_by_market.end()) {
                for (const auto& t : it->second) {
                    reg.user_index_[MarketRegistry::user_key(reg.market_codes_[l], t)] =
                        reg.n_users();
                    reg.user_tokens_.push_back(t);
                    reg.user_markets_.push_back(l);
                }
            }
            reg.user_ranges_[l] = {first, reg.n_users()};
        }

        // Dedup (market, user, item): keep the row with the latest timestamp;
        // timestamp-less rows lose to any timestamped one; remaining ties go
        // to the later file position.
        std::map<std::tuple<int, int, int>, const Row*> kept;
        for (const Row& r : rows_) {
            const int l = reg.market_index_.at(r.market);
            const int u = reg.user_index_.at(MarketRegistry::user_key(r.market, r.user));
            const int i = reg.item_index_.at(r.item);
            auto [it, fresh] = kept.try_emplace({l, u, i}, &r);
            if (!fresh && row_order(r) > row_order(*it->second)) it->second = &r;
        }
        reg.market_items_.assign(markets.size(), {});
        std::set<std::pair<int, int>> pool_seen;
        out.interactions.reserve(kept.size());
        for (const auto& [key, r] : kept) {
            const auto [l, u, i] = key;
            out.interactions.push_back(
                Interaction{u, i, r->rating, r->timestamp, r->has_timestamp, l});
            if (pool_seen.insert({l, i}).second) reg.market_items_[l].push_back(i);
        }
        for (auto& pool : reg.market_items_) std::sort(pool.begin(), pool.end());

        if (base_market_) {
            const int b = reg.market_id(*base_market_);
            for (int l = 0; l < reg.n_markets(); ++l) {
                if (l == b) continue;
                for (int i : reg.market_items_[l])
                    if (!reg.market_has_item(b, i))
                        throw DataError("item " + reg.item_token(i) + " of market " +
                                        reg.market_code(l) + " is missing from base market " +
                                        *base_market_);
            }
        }
        return out;
    }

  private:
    struct Row {
        std::string market, user, item;
        double rating;
        std::int64_t timestamp;
        bool has_timestamp;
        std::size_t order;
    };

    static std::tuple<bool, std::int64_t, std::size_t> row_order(const Row& r) {
        return {r.has_timestamp, r.has_timestamp ? r.timestamp : 0, r.order};
    }

    void parse_line(const std::string& path, std::size_t lineno, const std::string& line) {
        const std::string where = path + ":" + std::to_string(lineno) + ": ";
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            f.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (f.size() != 5)
            throw DataError(where + "expected 5 tab-separated fields, got " +
                            std::to_string(f.size()));
        double rating = 0.0;
        try {
            std::size_t used = 0;
            rating = std::stod(f[3], &used);
            if (used != f[3].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw DataError(where + "bad rating: " + f[3]);
        }
        std::int64_t ts = 0;
        bool has_ts = f[4] != "-";
        if (has_ts) {
            try {
                std::size_t used = 0;
                ts = std::stoll(f[4], &used);
                if (used != f[4].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw DataError(where + "bad timestamp: " + f[4]);
            }
        }
        add_row(f[0], f[1], f[2], rating, ts, has_ts, where);
    }

    std::vector<Row> rows_;
    std::optional<std::set<std::string>> allowed_;
    std::optional<std::string> base_market_;
};

/// Single-file convenience wrapper.
inline BuiltDataset load_interactions(const std::string& path,
                                      const std::vector<std::string>& allowed_markets = {},
                                      const std::string& base_market = "") {
    DatasetBuilder b;
    if (!allowed_markets.empty()) b.set_allowed_markets(allowed_markets);
    if (!base_market.empty()) b.set_base_market(base_market);
    b.add_file(path);
    return b.build();
}

} // namespace cmrec::data
