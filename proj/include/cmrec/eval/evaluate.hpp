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
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmrec/common/errors.hpp"
#include "cmrec/data/split.hpp"
#include "cmrec/eval/metrics.hpp"
#include "cmrec/eval/stats.hpp"
#include "cmrec/models/model.hpp"

namespace cmrec::eval {

/// Per-user ranking outcome. `rank` is integral for raw evaluations and a
/// mean of ranks for source-aggregated reports.
struct UserEval {
    int user = -1;
    double rank = 0.0;
    int candidates = 0;
    double ndcg = 0.0;
    double hr = 0.0;
};

struct EvalReport {
    std::string model_id;
    int market = -1;
    std::string split; // "validation" | "test"
    std::vector<UserEval> users; // sorted by user ID
    double mean_ndcg = 0.0;
    double mean_hr = 0.0;

    void finalize() {
        std::sort(users.begin(), users.end(),
                  [](const UserEval& a, const UserEval& b) { return a.user < b.user; });
        double sn = 0.0, sh = 0.0;
        for (const UserEval& u : users) {
            sn += u.ndcg;
            sh += u.hr;
        }
        mean_ndcg = users.empty() ? 0.0 : sn / static_cast<double>(users.size());
        mean_hr = users.empty() ? 0.0 : sh / static_cast<double>(users.size());
    }
};

/// Ranks each record's positive against its fixed negatives.
inline EvalReport evaluate(models::Model& m, const std::vector<data::EvalRecord>& records,
                           const std::string& model_id, int market, const std::string& split,
                           int k = 10) {
    if (records.empty()) throw DataError("evaluate: empty evaluation set");
    EvalReport rep;
    rep.model_id = model_id;
    rep.market = market;
    rep.split = split;
    rep.users.reserve(records.size());
    std::vector<double> neg_scores;
    for (const data::EvalRecord& r : records) {
        const double pos = models::score(m, r.user, r.positive, r.market);
        neg_scores.clear();
        for (int item : r.negatives) neg_scores.push_back(models::score(m, r.user, item, r.market));
        UserEval u;
        u.user = r.user;
        const int rank = rank_of_positive(pos, neg_scores);
        u.rank = rank;
        u.candidates = 1 + static_cast<int>(r.negatives.size());
        u.ndcg = ndcg_at_k(rank, k);
        u.hr = hr_at_k(rank, k);
        rep.users.push_back(u);
    }
    rep.finalize();
    return rep;
}

/// Validation-driven source choice: highest mean nDCG, ties to the
/// lexicographically smallest market code.
inline std::string select_best_source(const std::vector<std::pair<std::string, EvalReport>>& val_reports) {
    if (val_reports.empty()) throw ConfigError("select_best_source: no source reports");
    const std::pair<std::string, EvalReport>* best = &val_reports.front();
    for (const auto& c : val_reports) {
        if (c.second.mean_ndcg > best->second.mean_ndcg ||
            (c.second.mean_ndcg == best->second.mean_ndcg && c.first < best->first))
            best = &c;
    }
    return best->first;
}

/// AVG aggregation: per-user metrics averaged across source reports. All
/// reports must cover the identical user set.
inline EvalReport aggregate_avg(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw ConfigError("aggregate_avg: no reports");
    EvalReport out = reports.front();
    out.model_id = reports.front().model_id;
    for (std::size_t s = 1; s < reports.size(); ++s) {
        const EvalReport& r = reports[s];
        if (r.users.size() != out.users.size())
            throw DataError("aggregate_avg: reports cover different user sets");
        for (std::size_t j = 0; j < out.users.size(); ++j) {
            if (r.users[j].user != out.users[j].user)
                throw DataError("aggregate_avg: reports cover different user sets");
            out.users[j].rank += r.users[j].rank;
            out.users[j].ndcg += r.users[j].ndcg;
            out.users[j].hr += r.users[j].hr;
        }
    }
    const double inv = 1.0 / static_cast<double>(reports.size());
    for (UserEval& u : out.users) {
        u.rank *= inv;
        u.ndcg *= inv;
        u.hr *= inv;
    }
    out.finalize();
    return out;
}

inline std::vector<double> ndcg_vector(const EvalReport& r) {
    std::vector<double> v;
    v.reserve(r.users.size());
    for (const UserEval& u : r.users) v.push_back(u.ndcg);
    return v;
}

struct SignificanceResult {
    std::string pair;
    std::string market;
    double t = 0.0;
    double p = 1.0;
    int m = 1;
    bool significant = false;
    bool degenerate = false;
};

/// Paired test of nDCG vectors of two reports over the same users.
inline SignificanceResult compare_reports(const EvalReport& a, const EvalReport& b,
                                          const std::string& pair_name,
                                          const std::string& market_code, int m) {
    if (a.users.size() != b.users.size())
        throw DataError("significance: reports cover different user sets");
    for (std::size_t j = 0; j < a.users.size(); ++j)
        if (a.users[j].user != b.users[j].user)
            throw DataError("significance: reports cover different user sets");
    const std::vector<double> va = ndcg_vector(a), vb = ndcg_vector(b);
    const TTestResult t = paired_t_test(va, vb);
    SignificanceResult r;
    r.pair = pair_name;
    r.market = market_code;
    r.t = t.t;
    r.p = t.p;
    r.m = m;
    r.significant = bonferroni(t.p, m);
    r.degenerate = t.degenerate;
    return r;
}

inline std::string report_to_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "user,rank,candidates,ndcg@10,hr@10\n";
    out.precision(17);
    for (const UserEval& u : r.users)
        out << u.user << ',' << u.rank << ',' << u.candidates << ',' << u.ndcg << ',' << u.hr
            << '\n';
    return out.str();
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["model_id"] = r.model_id;
    j["market"] = r.market;
    j["split"] = r.split;
    j["n_users"] = r.users.size();
    j["mean_ndcg"] = r.mean_ndcg;
    j["mean_hr"] = r.mean_hr;
    nlohmann::json users = nlohmann::json::array();
    for (const UserEval& u : r.users)
        users.push_back({u.user, u.rank, u.candidates, u.ndcg, u.hr});
    j["users"] = std::move(users);
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.market = j.at("market").get<int>();
    r.split = j.at("split").get<std::string>();
    for (const auto& e : j.at("users")) {
        UserEval u;
        u.user = e.at(0).get<int>();
        u.rank = e.at(1).get<double>();
        u.candidates = e.at(2).get<int>();
        u.ndcg = e.at(3).get<double>();
        u.hr = e.at(4).get<double>();
        r.users.push_back(u);
    }
    r.finalize();
    return r;
}

inline std::string significance_csv_header() { return "pair,market,t,p,m,significant\n"; }

inline std::string significance_to_csv_row(const SignificanceResult& s) {
    std::ostringstream out;
    out.precision(17);
    out << s.pair << ',' << s.market << ',' << s.t << ',' << s.p << ',' << s.m << ','
        << (s.significant ? 1 : 0) << '\n';
    return out.str();
}

} // namespace cmrec::eval
