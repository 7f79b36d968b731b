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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "cmrec/data/split.hpp"
#include "cmrec/data/synthetic.hpp"
#include "cmrec/eval/evaluate.hpp"
#include "cmrec/eval/metrics.hpp"
#include "cmrec/eval/stats.hpp"
#include "cmrec/models/model.hpp"

using namespace cmrec;
using Catch::Approx;

namespace {

// independent oracle: order all candidates best-first, positives losing every
// tie, and report the positive's 1-indexed position
int brute_rank(double pos, const std::vector<double>& negs) {
    std::vector<std::pair<double, int>> all; // (score, is_positive)
    all.reserve(negs.size() + 1);
    for (double s : negs) all.push_back({s, 0});
    all.push_back({pos, 1});
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second; // equal-scoring negatives sort above
    });
    for (std::size_t j = 0; j < all.size(); ++j)
        if (all[j].second == 1) return static_cast<int>(j) + 1;
    return -1;
}

eval::EvalReport report_with(const std::string& id, const std::vector<double>& ndcgs) {
    eval::EvalReport r;
    r.model_id = id;
    r.split = "validation";
    for (std::size_t j = 0; j < ndcgs.size(); ++j) {
        eval::UserEval u;
        u.user = static_cast<int>(j);
        u.rank = 1;
        u.candidates = 100;
        u.ndcg = ndcgs[j];
        u.hr = ndcgs[j] > 0 ? 1.0 : 0.0;
        r.users.push_back(u);
    }
    r.finalize();
    return r;
}

} // namespace

TEST_CASE("rank of the positive matches a brute-force sorter", "[evaluation]") {
    // pinned cases first
    REQUIRE(eval::rank_of_positive(0.9, std::vector<double>{0.1, 0.2}) == 1);
    std::vector<double> one_tie = {0.7, 0.1, 0.2};
    REQUIRE(eval::rank_of_positive(0.7, one_tie) == 2); // tie counts against
    std::vector<double> all_equal(99, 0.5);
    REQUIRE(eval::rank_of_positive(0.5, all_equal) == 100);

    // 10^4 random candidate sets on a coarse grid, so ties are routine
    Rng rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        const double pos = static_cast<double>(rng.below(10)) / 10.0;
        std::vector<double> negs(99);
        for (double& s : negs) s = static_cast<double>(rng.below(10)) / 10.0;
        REQUIRE(eval::rank_of_positive(pos, negs) == brute_rank(pos, negs));
    }
}

TEST_CASE("ranking metrics follow the closed forms", "[evaluation]") {
    REQUIRE(eval::ndcg_at_k(1) == 1.0);
    REQUIRE(eval::hr_at_k(1) == 1.0);
    REQUIRE(eval::ndcg_at_k(3) == Approx(0.5).epsilon(1e-12)); // 1/log2(4)
    REQUIRE(eval::hr_at_k(3) == 1.0);
    REQUIRE(eval::ndcg_at_k(10) == Approx(1.0 / std::log2(11.0)).epsilon(1e-12));
    REQUIRE(eval::hr_at_k(10) == 1.0);
    REQUIRE(eval::ndcg_at_k(11) == 0.0);
    REQUIRE(eval::hr_at_k(11) == 0.0);
    REQUIRE(eval::ndcg_at_k(2, 1) == 0.0); // custom cutoff
    REQUIRE_THROWS_AS(eval::ndcg_at_k(0), ConfigError);
    REQUIRE_THROWS_AS(eval::hr_at_k(-1), ConfigError);
}

TEST_CASE("random scoring lands on the analytic ndcg expectation", "[evaluation]") {
    // closed form: positive is uniform over the 100 positions
    double expect = 0.0;
    for (int r = 1; r <= 10; ++r) expect += 0.01 / std::log2(r + 1.0);
    REQUIRE(expect == Approx(0.0454).margin(5e-4));

    Rng rng(555);
    double sum = 0.0;
    const int n = 10000;
    std::vector<double> negs(99);
    for (int trial = 0; trial < n; ++trial) {
        const double pos = rng.uniform();
        for (double& s : negs) s = rng.uniform();
        sum += eval::ndcg_at_k(eval::rank_of_positive(pos, negs));
    }
    REQUIRE(sum / n == Approx(expect).margin(0.005));
}

TEST_CASE("paired t-test reproduces the reference oracle", "[evaluation]") {
    const std::vector<double> b = {0.0, 0.0, 0.0, 0.0, 0.0};
    const std::vector<double> a = {0.1, 0.2, 0.3, 0.4, 0.5};
    eval::TTestResult r = eval::paired_t_test(a, b);
    REQUIRE(r.t == Approx(4.2426).margin(1e-4));
    REQUIRE(r.t == Approx(3.0 * std::sqrt(2.0)).epsilon(1e-12)); // exact closed form
    REQUIRE(r.p == Approx(0.0132).margin(1e-3));
    REQUIRE(r.n == 5);
    REQUIRE_FALSE(r.degenerate);

    SECTION("swapping the samples negates t and keeps p") {
        eval::TTestResult s = eval::paired_t_test(b, a);
        REQUIRE(s.t == Approx(-r.t).epsilon(1e-12));
        REQUIRE(s.p == Approx(r.p).epsilon(1e-12));
    }
    SECTION("identical samples degenerate to t=0, p=1") {
        eval::TTestResult s = eval::paired_t_test(a, a);
        REQUIRE(s.degenerate);
        REQUIRE(s.t == 0.0);
        REQUIRE(s.p == 1.0);
    }
    SECTION("constant nonzero shift has zero variance and certain sign") {
        std::vector<double> shifted = {0.2, 0.2, 0.2, 0.2, 0.2};
        eval::TTestResult s = eval::paired_t_test(shifted, b);
        REQUIRE(std::isinf(s.t));
        REQUIRE(s.t > 0);
        REQUIRE(s.p == 0.0);
    }
    SECTION("degenerate inputs are refused") {
        REQUIRE_THROWS_AS(eval::paired_t_test(std::vector<double>{1.0}, std::vector<double>{1.0}),
                          ConfigError);
        REQUIRE_THROWS_AS(eval::paired_t_test(a, std::vector<double>{1.0, 2.0}), DimensionError);
    }
}

TEST_CASE("student-t p-values match low-dof closed forms", "[evaluation]") {
    // nu=1 is Cauchy: p = 1 - (2/pi) atan|t|
    for (double t : {0.0, 0.5, 1.0, 2.0, 7.5}) {
        const double want = 1.0 - 2.0 * std::atan(std::abs(t)) / std::acos(-1.0);
        REQUIRE(eval::student_t_two_sided_p(t, 1.0) == Approx(want).epsilon(1e-10));
        REQUIRE(eval::student_t_two_sided_p(-t, 1.0) == Approx(want).epsilon(1e-10));
    }
    // nu=2: p = 1 - |t| / sqrt(2 + t^2)
    for (double t : {0.0, 1.0, 3.0, 10.0}) {
        const double want = 1.0 - std::abs(t) / std::sqrt(2.0 + t * t);
        REQUIRE(eval::student_t_two_sided_p(t, 2.0) == Approx(want).epsilon(1e-10));
    }
    // wide nu approaches the normal tail
    REQUIRE(eval::student_t_two_sided_p(1.96, 1000.0) == Approx(0.05).margin(2e-3));
    REQUIRE(eval::student_t_two_sided_p(std::numeric_limits<double>::infinity(), 4.0) == 0.0);
    REQUIRE_THROWS_AS(eval::student_t_two_sided_p(1.0, 0.0), ConfigError);
}

TEST_CASE("bonferroni gates exactly at 0.05 over m", "[evaluation]") {
    REQUIRE(eval::bonferroni(0.004, 9));
    REQUIRE_FALSE(eval::bonferroni(0.006, 9));
    REQUIRE(eval::bonferroni(0.004, 12));
    REQUIRE_FALSE(eval::bonferroni(0.0042, 12));
    REQUIRE_FALSE(eval::bonferroni(0.05 / 9.0, 9)); // strict inequality
    REQUIRE_THROWS_AS(eval::bonferroni(0.01, 0), ConfigError);
}

TEST_CASE("evaluation agrees with a hand-scored model", "[evaluation]") {
    // D=1 item table split into hot positives and cold negatives
    models::ModelConfig c = models::parse_kind("gmf");
    c.embed_dim = 1;
    c.n_users = 5;
    c.n_items = 15;
    c.n_markets = 1;
    models::Model m = models::build_model(c, 3);
    for (int u = 0; u < 5; ++u) m.user_emb.value.at(u, 0) = 1.0;
    m.out_vec.value[0] = 1.0;
    for (int i = 0; i < 15; ++i) m.item_emb.value.at(i, 0) = i < 5 ? 3.0 : -3.0;

    std::vector<data::EvalRecord> records;
    for (int u = 0; u < 5; ++u) {
        data::EvalRecord r;
        r.user = u;
        r.positive = u; // hot item
        r.market = 0;
        for (int i = 5; i < 15; ++i) r.negatives.push_back(i);
        records.push_back(r);
    }

    eval::EvalReport rep = eval::evaluate(m, records, "oracle", 0, "test");
    REQUIRE(rep.model_id == "oracle");
    REQUIRE(rep.market == 0);
    REQUIRE(rep.split == "test");
    REQUIRE(rep.users.size() == 5);
    REQUIRE(rep.mean_ndcg == 1.0);
    REQUIRE(rep.mean_hr == 1.0);
    for (const eval::UserEval& u : rep.users) {
        REQUIRE(u.rank == 1.0);
        REQUIRE(u.candidates == 11);
    }

    SECTION("constant scorer collapses to the pessimistic floor") {
        for (int u = 0; u < 5; ++u) m.user_emb.value.at(u, 0) = 0.0; // sigma(0) everywhere
        eval::EvalReport flat = eval::evaluate(m, records, "flat", 0, "test");
        for (const eval::UserEval& u : flat.users) REQUIRE(u.rank == 11.0);
        REQUIRE(flat.mean_ndcg == 0.0); // 11 candidates, cutoff 10
        REQUIRE(flat.mean_hr == 0.0);
    }
    SECTION("empty record sets are refused") {
        REQUIRE_THROWS_AS(eval::evaluate(m, {}, "x", 0, "test"), DataError);
    }
}

TEST_CASE("evaluation of a trained model matches an external rescore", "[evaluation]") {
    data::SynthSpec spec;
    spec.n_markets = 2;
    spec.users_per_market = 10;
    spec.items_per_market = 25;
    spec.interactions_per_user = 5;
    spec.latent_dim = 4;
    data::BuiltDataset built = data::generate_synthetic_markets(spec, 7);
    data::SplitDataset splits = data::leave_one_out_split(built, 7);

    models::ModelConfig c = models::parse_kind("ma-gmf");
    c.embed_dim = 4;
    c.n_users = built.registry.n_users();
    c.n_items = built.registry.n_items();
    c.n_markets = built.registry.n_markets();
    models::Model m = models::build_model(c, 13);

    const std::vector<data::EvalRecord>& recs = splits.markets[1].test;
    eval::EvalReport rep = eval::evaluate(m, recs, "ma-gmf", 1, "test");

    double nd = 0.0, hr = 0.0;
    for (const data::EvalRecord& r : recs) {
        std::vector<double> negs;
        for (int i : r.negatives) negs.push_back(models::score(m, r.user, i, r.market));
        const int rank = brute_rank(models::score(m, r.user, r.positive, r.market), negs);
        nd += eval::ndcg_at_k(rank);
        hr += eval::hr_at_k(rank);
    }
    REQUIRE(rep.mean_ndcg == Approx(nd / recs.size()).epsilon(1e-12));
    REQUIRE(rep.mean_hr == Approx(hr / recs.size()).epsilon(1e-12));
    REQUIRE(std::is_sorted(rep.users.begin(), rep.users.end(),
                           [](const eval::UserEval& a, const eval::UserEval& b) {
                               return a.user < b.user;
                           }));

    SECTION("reports survive json and csv serialization") {
        eval::EvalReport back = eval::report_from_json(eval::report_to_json(rep));
        REQUIRE(back.model_id == rep.model_id);
        REQUIRE(back.market == rep.market);
        REQUIRE(back.split == rep.split);
        REQUIRE(back.mean_ndcg == rep.mean_ndcg);
        REQUIRE(back.mean_hr == rep.mean_hr);
        REQUIRE(back.users.size() == rep.users.size());
        for (std::size_t j = 0; j < rep.users.size(); ++j) {
            REQUIRE(back.users[j].user == rep.users[j].user);
            REQUIRE(back.users[j].rank == rep.users[j].rank);
            REQUIRE(back.users[j].ndcg == rep.users[j].ndcg);
        }
        const std::string csv = eval::report_to_csv(rep);
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        REQUIRE(line == "user,rank,candidates,ndcg@10,hr@10");
        std::size_t rows = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        REQUIRE(rows == rep.users.size());
    }
}

TEST_CASE("best source selection is an argmax with lexicographic ties", "[evaluation]") {
    auto rep = [](double mean) {
        eval::EvalReport r;
        r.mean_ndcg = mean;
        return r;
    };
    std::vector<std::pair<std::string, eval::EvalReport>> reports = {
        {"de", rep(0.30)}, {"jp", rep(0.31)}, {"uk", rep(0.29)}};
    REQUIRE(eval::select_best_source(reports) == "jp");

    REQUIRE(eval::select_best_source({{"uk", rep(0.5)}}) == "uk");

    std::vector<std::pair<std::string, eval::EvalReport>> tied = {
        {"jp", rep(0.40)}, {"de", rep(0.40)}, {"uk", rep(0.35)}};
    REQUIRE(eval::select_best_source(tied) == "de");
    REQUIRE_THROWS_AS(eval::select_best_source({}), ConfigError);
}

TEST_CASE("avg aggregation means per-user metrics across sources", "[evaluation]") {
    SECTION("identical reports aggregate to themselves") {
        eval::EvalReport r = report_with("m", {0.5, 0.25, 1.0});
        eval::EvalReport out = eval::aggregate_avg({r, r, r, r, r, r, r});
        REQUIRE(out.users.size() == 3);
        REQUIRE(out.mean_ndcg == Approx(r.mean_ndcg).epsilon(1e-12));
        for (std::size_t j = 0; j < 3; ++j)
            REQUIRE(out.users[j].ndcg == Approx(r.users[j].ndcg).epsilon(1e-12));
    }
    SECTION("two sources average per user") {
        eval::EvalReport out =
            eval::aggregate_avg({report_with("m", {0.2, 0.2}), report_with("m", {0.4, 0.4})});
        REQUIRE(out.users[0].ndcg == Approx(0.3).epsilon(1e-12));
        REQUIRE(out.users[1].ndcg == Approx(0.3).epsilon(1e-12));
        REQUIRE(out.mean_ndcg == Approx(0.3).epsilon(1e-12));
    }
    SECTION("aggregate mean equals the mean of report means") {
        Rng rng(77);
        std::vector<eval::EvalReport> reports;
        double mean_of_means = 0.0;
        for (int s = 0; s < 4; ++s) {
            std::vector<double> vals(20);
            for (double& v : vals) v = rng.uniform();
            reports.push_back(report_with("m", vals));
            mean_of_means += reports.back().mean_ndcg;
        }
        mean_of_means /= 4.0;
        REQUIRE(eval::aggregate_avg(reports).mean_ndcg ==
                Approx(mean_of_means).epsilon(1e-12));
    }
    SECTION("mismatched user sets are refused") {
        eval::EvalReport a = report_with("m", {0.1, 0.2});
        eval::EvalReport b = report_with("m", {0.1, 0.2, 0.3});
        REQUIRE_THROWS_AS(eval::aggregate_avg({a, b}), DataError);
        eval::EvalReport c = report_with("m", {0.1, 0.2});
        c.users[1].user = 42;
        REQUIRE_THROWS_AS(eval::aggregate_avg({a, c}), DataError);
        REQUIRE_THROWS_AS(eval::aggregate_avg({}), ConfigError);
    }
}

TEST_CASE("report comparison wires the t-test into significance rows", "[evaluation]") {
    eval::EvalReport a = report_with("ma-gmf", {0.1, 0.2, 0.3, 0.4, 0.5});
    eval::EvalReport b = report_with("gmf", {0.0, 0.0, 0.0, 0.0, 0.0});

    eval::SignificanceResult s = eval::compare_reports(a, b, "ma-gmf vs gmf", "de", 2);
    REQUIRE(s.pair == "ma-gmf vs gmf");
    REQUIRE(s.market == "de");
    REQUIRE(s.m == 2);
    REQUIRE(s.t == Approx(3.0 * std::sqrt(2.0)).epsilon(1e-12));
    REQUIRE(s.p == Approx(0.0132).margin(1e-3));
    REQUIRE(s.significant == eval::bonferroni(s.p, 2)); // 0.0132 < 0.025
    REQUIRE(s.significant);
    REQUIRE_FALSE(s.degenerate);

    SECTION("the bonferroni m changes the verdict, not the p") {
        eval::SignificanceResult strict = eval::compare_reports(a, b, "pair", "de", 9);
        REQUIRE(strict.p == Approx(s.p).epsilon(1e-12));
        REQUIRE_FALSE(strict.significant); // 0.0132 >= 0.05/9
    }
    SECTION("misaligned reports are refused") {
        eval::EvalReport c = report_with("gmf", {0.0, 0.0});
        REQUIRE_THROWS_AS(eval::compare_reports(a, c, "p", "de", 2), DataError);
        eval::EvalReport d = b;
        d.users[0].user = 99;
        d.finalize();
        REQUIRE_THROWS_AS(eval::compare_reports(a, d, "p", "de", 2), DataError);
    }
    SECTION("csv row carries the verdict") {
        REQUIRE(eval::significance_csv_header() == "pair,market,t,p,m,significant\n");
        const std::string row = eval::significance_to_csv_row(s);
        REQUIRE(row.find("ma-gmf vs gmf,de,") == 0);
        REQUIRE(row.find(",1\n") != std::string::npos);
    }
}
