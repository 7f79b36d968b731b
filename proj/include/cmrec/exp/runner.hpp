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
#include <atomic>
#include <cctype>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/data/combine.hpp"
#include "cmrec/data/persist.hpp"
#include "cmrec/eval/evaluate.hpp"
#include "cmrec/exp/results.hpp"
#include "cmrec/models/checkpoint.hpp"
#include "cmrec/train/maml.hpp"
#include "cmrec/train/trainer.hpp"

namespace cmrec::exp {

inline const std::vector<std::string> kBaseMethods = {"gmf",    "ma-gmf", "mlp", "ma-mlp",
                                                      "nmf",    "ma-nmf"};
inline const std::vector<std::string> kAllMethods = {"gmf", "ma-gmf", "mlp",  "ma-mlp",
                                                     "nmf", "ma-nmf", "maml", "forec"};

struct ExperimentConfig {
    std::string out_dir = "out";
    std::vector<std::string> targets; // empty → every market in the registry
    std::vector<std::string> sources; // empty → all other markets
    std::vector<std::string> methods; // empty → every method
    train::TrainConfig tcfg;
    train::MamlConfig mcfg;
    std::uint64_t master_seed = 7;
    int sig_m_avg = 9;
    int sig_m_bst = 12;
    int sig_m_global = 9;
    int jobs = 1;
    bool save_checkpoints = false;
    double warm_start_alpha = 0.5;
    train::FreezeMask forec_mask = train::FreezeMask::forec_default();
    int embed_dim = 8;
    std::vector<int> layer_plan = {16, 64, 32, 16, 8};
};

/// Everything one trained method leaves behind.
struct CellResult {
    eval::EvalReport validation;
    eval::EvalReport test;
    train::RunRecord record;
    std::string dir; // artifact directory (provenance)
};

namespace detail {

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

/// Methods closed under the training prerequisites nmf→{gmf,mlp},
/// maml→{nmf,...}, forec→{maml,...}, in canonical training order.
inline std::vector<std::string> close_methods(std::vector<std::string> wanted) {
    if (wanted.empty()) return kAllMethods;
    std::set<std::string> have(wanted.begin(), wanted.end());
    for (const auto& m : wanted)
        if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end())
            throw ConfigError("unknown method: " + m);
    if (have.count("forec")) have.insert("maml");
    if (have.count("maml")) have.insert("nmf");
    if (have.count("nmf")) {
        have.insert("gmf");
        have.insert("mlp");
    }
    if (have.count("ma-nmf")) {
        have.insert("ma-gmf");
        have.insert("ma-mlp");
    }
    std::vector<std::string> out;
    for (const auto& m : kAllMethods)
        if (have.count(m)) out.push_back(m);
    return out;
}

inline models::ModelConfig base_model_config(const ExperimentConfig& cfg,
                                             const data::MarketRegistry& reg,
                                             const std::string& kind) {
    models::ModelConfig mc = models::parse_kind(kind);
    mc.embed_dim = cfg.embed_dim;
    mc.layer_plan = cfg.layer_plan;
    mc.n_users = reg.n_users();
    mc.n_items = reg.n_items();
    mc.n_markets = reg.n_markets();
    return mc;
}

inline void save_cell(const CellResult& cell) {
    ensure_dir(cell.dir);
    data::save_json(train::run_record_to_json(cell.record), cell.dir + "/run.json");
    data::save_json(eval::report_to_json(cell.validation), cell.dir + "/validation.json");
    data::save_json(eval::report_to_json(cell.test), cell.dir + "/test.json");
    std::ofstream c1(cell.dir + "/validation.csv"), c2(cell.dir + "/test.csv");
    c1 << eval::report_to_csv(cell.validation);
    c2 << eval::report_to_csv(cell.test);
}

inline bool load_cell(const std::string& dir, CellResult& cell) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir + "/run.json") || !fs::exists(dir + "/validation.json") ||
        !fs::exists(dir + "/test.json"))
        return false;
    cell.record = train::run_record_from_json(data::load_json(dir + "/run.json"));
    cell.validation = eval::report_from_json(data::load_json(dir + "/validation.json"));
    cell.test = eval::report_from_json(data::load_json(dir + "/test.json"));
    cell.dir = dir;
    return true;
}

} // namespace detail

/// Shared manifest of completed/failed cells; supports resume.
class RunManifest {
  public:
    RunManifest(std::string out_dir, std::uint64_t dataset_fingerprint, std::uint64_t seed)
        : path_(out_dir + "/manifest.json"), fingerprint_(dataset_fingerprint), seed_(seed) {
        detail::ensure_dir(out_dir);
        namespace fs = std::filesystem;
        if (fs::exists(path_)) {
            const auto j = data::load_json(path_);
            if (j.at("dataset_fingerprint").get<std::uint64_t>() == fingerprint_ &&
                j.at("master_seed").get<std::uint64_t>() == seed_) {
                for (const auto& c : j.at("completed")) completed_.insert(c.get<std::string>());
            }
            // mismatched manifest → start clean (stale out-dir from another dataset)
        }
        write();
    }

    bool is_completed(const std::string& cell_id) {
        std::lock_guard<std::mutex> lock(mu_);
        return completed_.count(cell_id) > 0;
    }

    void mark_completed(const std::string& cell_id) {
        std::lock_guard<std::mutex> lock(mu_);
        completed_.insert(cell_id);
        write();
    }

    void mark_failed(const std::string& cell_id, const std::string& why) {
        std::lock_guard<std::mutex> lock(mu_);
        failed_[cell_id] = why;
        write();
    }

    std::size_t completed_count() {
        std::lock_guard<std::mutex> lock(mu_);
        return completed_.size();
    }

  private:
    void write() const {
        nlohmann::json j;
        j["dataset_fingerprint"] = fingerprint_;
        j["master_seed"] = seed_;
        j["completed"] = std::vector<std::string>(completed_.begin(), completed_.end());
        j["failed"] = failed_;
        data::save_json(j, path_);
    }

    std::string path_;
    std::uint64_t fingerprint_;
    std::uint64_t seed_;
    std::set<std::string> completed_;
    std::map<std::string, std::string> failed_;
    std::mutex mu_;
};

namespace detail {

struct SuiteInputs {
    const data::MarketRegistry* registry = nullptr;
    std::uint64_t dataset_fingerprint = 0;
    std::vector<data::Interaction> train_rows;           // combined training data
    std::vector<train::MamlTask> tasks;                  // per-market, for maml
    std::vector<data::Interaction> finetune_rows;        // forec target data
    const std::vector<data::EvalRecord>* eval_val = nullptr;
    const std::vector<data::EvalRecord>* eval_test = nullptr;
    int eval_market = -1;
    std::string scope;   // seed + artifact namespace, e.g. "pairwise/de/jp"
    std::string out_dir; // artifacts root
};

/// Model-donor edges: a method's trained model feeds these later stages.
inline std::vector<std::string> donor_children(const std::string& method) {
    if (method == "gmf" || method == "mlp") return {"nmf"};
    if (method == "ma-gmf" || method == "ma-mlp") return {"ma-nmf"};
    if (method == "nmf") return {"maml"};
    if (method == "maml") return {"forec"};
    return {};
}

/// Trains the requested methods (closed under prerequisites) on one train
/// set and evaluates each on the target split. Resumable per cell: a
/// completed cell is reloaded from disk, and its model retrained only when
/// an incomplete later stage needs it as a donor (deterministic seeds make
/// the retrained model identical; a saved checkpoint skips even that).
inline std::map<std::string, CellResult> run_suite(const SuiteInputs& in,
                                                   const std::vector<std::string>& methods,
                                                   const ExperimentConfig& cfg,
                                                   RunManifest* manifest) {
    std::map<std::string, CellResult> out;
    std::map<std::string, models::Model> kept; // donor models awaiting their consumer

    auto cell_dir = [&](const std::string& method) {
        return cfg.out_dir + "/runs/" + in.scope + "/" + method;
    };
    auto cell_id = [&](const std::string& method) { return in.scope + "/" + method; };
    auto listed = [&](const std::string& method) {
        return std::find(methods.begin(), methods.end(), method) != methods.end();
    };

    // plan: which cells are already done, which models must exist this run
    std::map<std::string, CellResult> resumed;
    for (const std::string& m : methods) {
        CellResult cell;
        if (manifest && manifest->is_completed(cell_id(m)) && load_cell(cell_dir(m), cell))
            resumed[m] = std::move(cell);
    }
    std::map<std::string, bool> must_train;
    for (auto it = methods.rbegin(); it != methods.rend(); ++it) {
        const std::string& m = *it;
        bool need = resumed.count(m) == 0;
        if (!need && !std::filesystem::exists(cell_dir(m) + "/checkpoint.json"))
            for (const std::string& c : donor_children(m))
                if (listed(c) && must_train[c]) need = true;
        must_train[m] = need;
    }

    auto need_model = [&](const std::string& method) -> models::Model& {
        auto it = kept.find(method);
        if (it != kept.end()) return it->second;
        const std::string ck = cell_dir(method) + "/checkpoint.json";
        if (std::filesystem::exists(ck)) {
            kept[method] = models::load_checkpoint(ck, in.dataset_fingerprint);
            return kept[method];
        }
        throw ConfigError("internal: donor model " + method + " not available");
    };

    auto finish = [&](models::Model& m, const std::string& method, train::RunRecord record) {
        if (auto it = resumed.find(method); it != resumed.end()) {
            out[method] = std::move(it->second); // keep the recorded artifacts
        } else {
            CellResult cell;
            cell.dir = cell_dir(method);
            cell.record = std::move(record);
            const std::string id = method + "@" + in.scope;
            cell.validation = eval::evaluate(m, *in.eval_val, id, in.eval_market, "validation");
            cell.test = eval::evaluate(m, *in.eval_test, id, in.eval_market, "test");
            save_cell(cell);
            if (cfg.save_checkpoints)
                models::save_checkpoint(m, cell.dir + "/checkpoint.json", in.dataset_fingerprint);
            if (manifest) manifest->mark_completed(cell_id(method));
            out[method] = std::move(cell);
        }
        bool donor = false;
        for (const std::string& c : donor_children(method))
            if (listed(c) && must_train[c]) donor = true;
        if (donor) kept[method] = std::move(m);
    };

    train::TrainConfig tcfg = cfg.tcfg;
    for (const std::string& method : methods) {
        tcfg.seed = derive_seed(cfg.master_seed, in.scope + "/" + method);
        if (!must_train[method]) {
            out[method] = std::move(resumed.at(method));
            continue;
        }

        if (method == "gmf" || method == "ma-gmf" || method == "mlp" || method == "ma-mlp") {
            models::Model m =
                models::build_model(base_model_config(cfg, *in.registry, method), tcfg.seed);
            train::RunRecord rec =
                train::train(m, in.train_rows, *in.registry, tcfg, in.dataset_fingerprint);
            finish(m, method, std::move(rec));
        } else if (method == "nmf" || method == "ma-nmf") {
            const bool ma = method == "ma-nmf";
            const std::string g = ma ? "ma-gmf" : "gmf", p = ma ? "ma-mlp" : "mlp";
            models::Model m =
                models::warm_start_nmf(need_model(g), need_model(p), cfg.warm_start_alpha);
            kept.erase(g);
            kept.erase(p);
            train::RunRecord rec =
                train::train(m, in.train_rows, *in.registry, tcfg, in.dataset_fingerprint);
            finish(m, method, std::move(rec));
        } else if (method == "maml") {
            models::Model m = models::fork(need_model("nmf"));
            kept.erase("nmf");
            train::MamlConfig mcfg = cfg.mcfg;
            mcfg.seed = tcfg.seed;
            train::RunRecord rec = train::train_maml(m, in.tasks, *in.registry, mcfg, tcfg,
                                                     in.dataset_fingerprint);
            finish(m, method, std::move(rec));
        } else if (method == "forec") {
            auto [m, rec] = train::forec_adapt(need_model("maml"), in.finetune_rows, *in.registry,
                                               cfg.forec_mask, tcfg, in.dataset_fingerprint);
            kept.erase("maml");
            finish(m, method, std::move(rec));
        } else {
            throw ConfigError("unknown method: " + method);
        }
    }
    return out;
}

inline std::vector<int> market_ids(const data::MarketRegistry& reg,
                                   const std::vector<std::string>& codes) {
    std::vector<int> out;
    for (const auto& c : codes) out.push_back(reg.market_id(c));
    return out;
}

inline std::string display_name(const std::string& method, bool plusplus) {
    std::string base;
    if (method == "maml") return "MAML";
    if (method == "forec") return "FOREC";
    for (char ch : method) base += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return plusplus ? base + "++" : base;
}

} // namespace detail

/// Outcome of one experiment family: the tables plus completion status.
struct ExperimentOutcome {
    std::vector<ResultsTable> tables;
    bool all_completed = true;
};

namespace detail {

struct SigInput {
    const eval::EvalReport* ma = nullptr;
    const eval::EvalReport* unaware = nullptr;
    const eval::EvalReport* single = nullptr;
    const eval::EvalReport* maml = nullptr;
    const eval::EvalReport* forec = nullptr;
};

/// Marks the MA cell's symbols: significant AND the MA mean is the higher
/// one (symbols report improvements, as in the captions).
inline void apply_significance(Cell& cell, const SigInput& s, const std::string& market, int m) {
    auto better = [&](const eval::EvalReport& other) {
        const auto r = eval::compare_reports(*s.ma, other, "ma", market, m);
        return r.significant && s.ma->mean_ndcg > other.mean_ndcg;
    };
    if (s.single) cell.sig_single = better(*s.single);
    if (s.unaware) cell.sig_unaware = better(*s.unaware);
    if (s.maml) cell.sig_maml = better(*s.maml);
    if (s.forec) cell.sig_forec = better(*s.forec);
}

} // namespace detail

/// Pairwise protocol: one suite per (target, source) on target ∪
/// downsampled-source data, then AVG (mean across sources) and BST
/// (validation-picked source) tables, the latter with single-market rows.
inline ExperimentOutcome run_pairwise(const data::PreparedDataset& prep,
                                      const ExperimentConfig& cfg) {
    const data::MarketRegistry& reg = prep.registry;
    std::vector<std::string> targets = cfg.targets;
    if (targets.empty())
        for (int l = 0; l < reg.n_markets(); ++l) targets.push_back(reg.market_code(l));
    const std::vector<std::string> methods = detail::close_methods(cfg.methods);
    const std::uint64_t fp = prep.splits.dataset_fingerprint;
    RunManifest manifest(cfg.out_dir, fp, cfg.master_seed);

    struct PairJob {
        std::string target, source;
    };
    std::vector<PairJob> jobs;
    for (const std::string& t : targets) {
        std::vector<std::string> sources = cfg.sources;
        if (sources.empty())
            for (int l = 0; l < reg.n_markets(); ++l)
                if (reg.market_code(l) != t) sources.push_back(reg.market_code(l));
        for (const std::string& s : sources) {
            if (s == t) throw ConfigError("pairwise: target " + t + " cannot be its own source");
            jobs.push_back({t, s});
        }
    }
    if (jobs.empty()) throw ConfigError("pairwise: no (target, source) pairs to run");

    // results[target][source][method]
    std::map<std::string, std::map<std::string, std::map<std::string, CellResult>>> results;
    std::map<std::string, std::map<std::string, CellResult>> single; // [target][method]
    std::mutex mu;
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;

    auto run_pair = [&](const PairJob& job) {
        const int tid = reg.market_id(job.target);
        const int sid = reg.market_id(job.source);
        const auto& tsplit = prep.splits.markets.at(tid);
        const auto& ssplit = prep.splits.markets.at(sid);
        if (tsplit.test.empty())
            throw DataError("target market " + job.target + " has no evaluation users");

        detail::SuiteInputs in;
        in.registry = &reg;
        in.dataset_fingerprint = fp;
        const std::uint64_t pair_seed =
            derive_seed(cfg.master_seed, "pair/" + job.target + "/" + job.source);
        in.train_rows = data::make_pairwise(tsplit.train, ssplit.train, pair_seed);
        std::vector<data::Interaction> src_sampled(in.train_rows.begin() + tsplit.train.size(),
                                                   in.train_rows.end());
        in.tasks = {train::MamlTask{tid, tsplit.train}, train::MamlTask{sid, src_sampled}};
        in.finetune_rows = tsplit.train;
        in.eval_val = &tsplit.validation;
        in.eval_test = &tsplit.test;
        in.eval_market = tid;
        in.scope = "pairwise/" + job.target + "/" + job.source;
        in.out_dir = cfg.out_dir;
        auto cells = detail::run_suite(in, methods, cfg, &manifest);
        std::lock_guard<std::mutex> lock(mu);
        results[job.target][job.source] = std::move(cells);
    };

    auto run_single_market = [&](const std::string& target) {
        const int tid = reg.market_id(target);
        const auto& tsplit = prep.splits.markets.at(tid);
        detail::SuiteInputs in;
        in.registry = &reg;
        in.dataset_fingerprint = fp;
        in.train_rows = tsplit.train;
        in.finetune_rows = tsplit.train;
        in.eval_val = &tsplit.validation;
        in.eval_test = &tsplit.test;
        in.eval_market = tid;
        in.scope = "single/" + target;
        in.out_dir = cfg.out_dir;
        std::vector<std::string> base;
        for (const auto& m : methods)
            if (m == "gmf" || m == "mlp" || m == "nmf") base.push_back(m);
        if (base.empty()) return;
        auto cells = detail::run_suite(in, base, cfg, &manifest);
        std::lock_guard<std::mutex> lock(mu);
        single[target] = std::move(cells);
    };

    // work queue: single-market baselines first (cheap), then the pairs
    std::vector<std::function<void()>> work;
    for (const std::string& t : targets) work.push_back([&, t] { run_single_market(t); });
    for (const PairJob& j : jobs) work.push_back([&, j] { run_pair(j); });

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t k = next.fetch_add(1);
            if (k >= work.size()) return;
            try {
                work[k]();
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(work.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // assemble AVG and BST tables
    std::vector<std::string> row_methods_avg, row_methods_bst;
    for (const auto& m : methods) {
        if (m == "gmf" || m == "mlp" || m == "nmf")
            row_methods_bst.push_back(detail::display_name(m, false));
        row_methods_avg.push_back(detail::display_name(m, true));
        row_methods_bst.push_back(detail::display_name(m, true));
    }
    ResultsTable avg = ResultsTable::make("AVG (pairwise, mean across sources)", row_methods_avg,
                                          targets, cfg.sig_m_avg);
    ResultsTable bst = ResultsTable::make("BST (pairwise, validation-selected source)",
                                          row_methods_bst, targets, cfg.sig_m_bst);

    auto avg_row = [&](const std::string& m) {
        return std::distance(row_methods_avg.begin(),
                             std::find(row_methods_avg.begin(), row_methods_avg.end(),
                                       detail::display_name(m, true)));
    };
    auto bst_row = [&](const std::string& m, bool plusplus) {
        return std::distance(row_methods_bst.begin(),
                             std::find(row_methods_bst.begin(), row_methods_bst.end(),
                                       detail::display_name(m, plusplus)));
    };

    for (std::size_t c = 0; c < targets.size(); ++c) {
        const std::string& target = targets[c];
        auto& per_source = results.at(target);

        // AVG: aggregate per-user test metrics across sources
        std::map<std::string, eval::EvalReport> avg_reports;
        std::map<std::string, eval::EvalReport> bst_reports;
        for (const auto& m : methods) {
            std::vector<eval::EvalReport> tests;
            std::vector<std::pair<std::string, eval::EvalReport>> vals;
            for (auto& [src, cells] : per_source) {
                tests.push_back(cells.at(m).test);
                vals.emplace_back(src, cells.at(m).validation);
            }
            avg_reports[m] = eval::aggregate_avg(tests);
            const std::string best_src = eval::select_best_source(vals);
            bst_reports[m] = per_source.at(best_src).at(m).test;

            Cell& ca = avg.at(avg_row(m), c);
            ca.value = avg_reports[m].mean_ndcg;
            ca.present = true;
            ca.provenance = cfg.out_dir + "/runs/pairwise/" + target;
            Cell& cb = bst.at(bst_row(m, true), c);
            cb.value = bst_reports[m].mean_ndcg;
            cb.present = true;
            cb.provenance = cfg.out_dir + "/runs/pairwise/" + target + "/" + best_src + "/" + m;
        }
        auto sit = single.find(target);
        for (const auto& m : {std::string("gmf"), std::string("mlp"), std::string("nmf")}) {
            if (sit == single.end() || !sit->second.count(m)) continue;
            Cell& cs = bst.at(bst_row(m, false), c);
            cs.value = sit->second.at(m).test.mean_ndcg;
            cs.present = true;
            cs.provenance = sit->second.at(m).dir;
        }

        // significance: MA vs unaware / single / MAML / FOREC
        for (const std::string& arch : {std::string("gmf"), std::string("mlp"), std::string("nmf")}) {
            const std::string ma = "ma-" + arch;
            if (!avg_reports.count(ma)) continue;
            detail::SigInput sa;
            sa.ma = &avg_reports.at(ma);
            if (avg_reports.count(arch)) sa.unaware = &avg_reports.at(arch);
            if (avg_reports.count("maml")) sa.maml = &avg_reports.at("maml");
            if (avg_reports.count("forec")) sa.forec = &avg_reports.at("forec");
            detail::apply_significance(avg.at(avg_row(ma), c), sa, target, cfg.sig_m_avg);

            detail::SigInput sb;
            sb.ma = &bst_reports.at(ma);
            if (bst_reports.count(arch)) sb.unaware = &bst_reports.at(arch);
            if (bst_reports.count("maml")) sb.maml = &bst_reports.at("maml");
            if (bst_reports.count("forec")) sb.forec = &bst_reports.at("forec");
            if (sit != single.end() && sit->second.count(arch))
                sb.single = &sit->second.at(arch).test;
            detail::apply_significance(bst.at(bst_row(ma, true), c), sb, target, cfg.sig_m_bst);
        }
    }
    avg.mark_best();
    bst.mark_best();

    ExperimentOutcome out;
    out.tables = {std::move(avg), std::move(bst)};
    return out;
}

/// Global protocol: one suite on the concatenation of all markets,
/// evaluated per market (FOREC fine-tunes per target market).
inline ExperimentOutcome run_global(const data::PreparedDataset& prep,
                                    const ExperimentConfig& cfg) {
    const data::MarketRegistry& reg = prep.registry;
    std::vector<std::string> markets = cfg.targets;
    if (markets.empty())
        for (int l = 0; l < reg.n_markets(); ++l) markets.push_back(reg.market_code(l));
    const std::vector<std::string> methods = detail::close_methods(cfg.methods);
    const std::uint64_t fp = prep.splits.dataset_fingerprint;
    RunManifest manifest(cfg.out_dir, fp, cfg.master_seed);

    std::vector<data::Interaction> global_train = data::make_global(prep.splits);
    std::vector<train::MamlTask> tasks;
    for (int l = 0; l < reg.n_markets(); ++l)
        if (!prep.splits.markets[l].train.empty())
            tasks.push_back(train::MamlTask{l, prep.splits.markets[l].train});

    // results[market][method]
    std::map<std::string, std::map<std::string, CellResult>> results;
    std::mutex mu;
    std::exception_ptr first_error;

    auto run_market = [&](const std::string& code) {
        const int mid = reg.market_id(code);
        const auto& msplit = prep.splits.markets.at(mid);
        if (msplit.test.empty())
            throw DataError("market " + code + " has no evaluation users");
        detail::SuiteInputs in;
        in.registry = &reg;
        in.dataset_fingerprint = fp;
        in.train_rows = global_train;
        in.tasks = tasks;
        in.finetune_rows = msplit.train;
        in.eval_val = &msplit.validation;
        in.eval_test = &msplit.test;
        in.eval_market = mid;
        in.scope = "global/" + code;
        in.out_dir = cfg.out_dir;
        auto cells = detail::run_suite(in, methods, cfg, &manifest);
        std::lock_guard<std::mutex> lock(mu);
        results[code] = std::move(cells);
    };

    // Note: base-model training repeats identically per market scope — the
    // global model itself is market-independent, but scoping cells per
    // market keeps provenance/resume uniform. Per-market FOREC requires the
    // split anyway; deterministic seeds make the repeats exact duplicates.
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t k = next.fetch_add(1);
            if (k >= markets.size()) return;
            try {
                run_market(markets[k]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(markets.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<std::string> rows;
    for (const auto& m : methods) rows.push_back(detail::display_name(m, true));
    ResultsTable table =
        ResultsTable::make("Global (all markets in unison)", rows, markets, cfg.sig_m_global);
    auto row_of = [&](const std::string& m) {
        return std::distance(rows.begin(),
                             std::find(rows.begin(), rows.end(), detail::display_name(m, true)));
    };
    for (std::size_t c = 0; c < markets.size(); ++c) {
        auto& cells = results.at(markets[c]);
        for (const auto& m : methods) {
            Cell& cell = table.at(row_of(m), c);
            cell.value = cells.at(m).test.mean_ndcg;
            cell.present = true;
            cell.provenance = cells.at(m).dir;
        }
        for (const std::string& arch : {std::string("gmf"), std::string("mlp"), std::string("nmf")}) {
            const std::string ma = "ma-" + arch;
            if (!cells.count(ma)) continue;
            detail::SigInput s;
            s.ma = &cells.at(ma).test;
            if (cells.count(arch)) s.unaware = &cells.at(arch).test;
            if (cells.count("maml")) s.maml = &cells.at("maml").test;
            if (cells.count("forec")) s.forec = &cells.at("forec").test;
            detail::apply_significance(table.at(row_of(ma), c), s, markets[c], cfg.sig_m_global);
        }
    }
    table.mark_best();
    ExperimentOutcome out;
    out.tables = {std::move(table)};
    return out;
}

/// Per-(method, target) training seconds summed across sources, emitted as
/// CSV plus a gnuplot-ready dataset/script (log-scale y, as in the figure).
/// MAML rows report meta-training proper; FOREC rows add its fine-tune on
/// top of the MAML time since a FOREC model cannot exist without one.
struct BenchmarkOutcome {
    std::vector<std::string> methods;
    std::vector<std::string> targets;
    std::map<std::string, std::map<std::string, double>> seconds; // [method][target]
};

inline BenchmarkOutcome run_benchmark(const data::PreparedDataset& prep,
                                      const ExperimentConfig& cfg) {
    // reuse the pairwise machinery; its artifacts carry the wall times
    ExperimentConfig bcfg = cfg;
    bcfg.out_dir = cfg.out_dir + "/benchmark";
    run_pairwise(prep, bcfg);

    const data::MarketRegistry& reg = prep.registry;
    std::vector<std::string> targets = cfg.targets;
    if (targets.empty())
        for (int l = 0; l < reg.n_markets(); ++l) targets.push_back(reg.market_code(l));
    const std::vector<std::string> methods = detail::close_methods(cfg.methods);

    BenchmarkOutcome out;
    out.methods = methods;
    out.targets = targets;
    for (const std::string& t : targets) {
        std::vector<std::string> sources = cfg.sources;
        if (sources.empty())
            for (int l = 0; l < reg.n_markets(); ++l)
                if (reg.market_code(l) != t) sources.push_back(reg.market_code(l));
        for (const std::string& m : methods) {
            double total = 0.0;
            for (const std::string& s : sources) {
                const std::string dir = bcfg.out_dir + "/runs/pairwise/" + t + "/" + s;
                const double tm =
                    train::run_record_from_json(data::load_json(dir + "/" + m + "/run.json"))
                        .wall_seconds;
                if (m == "forec")
                    total += tm + train::run_record_from_json(
                                      data::load_json(dir + "/maml/run.json"))
                                      .wall_seconds;
                else
                    total += tm;
            }
            out.seconds[m][t] = total;
        }
    }

    // emit csv + gnuplot files
    detail::ensure_dir(cfg.out_dir);
    {
        std::ofstream csv(cfg.out_dir + "/timing.csv");
        csv << "method,target,seconds\n";
        csv.precision(17);
        for (const auto& m : methods)
            for (const auto& t : targets) csv << m << ',' << t << ',' << out.seconds[m][t] << '\n';
    }
    {
        std::ofstream dat(cfg.out_dir + "/timing.dat");
        dat << "method";
        for (const auto& t : targets) dat << ' ' << t;
        dat << '\n';
        dat.precision(17);
        for (const auto& m : methods) {
            dat << m;
            for (const auto& t : targets) dat << ' ' << out.seconds[m][t];
            dat << '\n';
        }
    }
    {
        std::ofstream gp(cfg.out_dir + "/timing.gp");
        gp << "# training-time comparison; y is log-scaled\n"
           << "set terminal pngcairo size 960,540\n"
           << "set output 'timing.png'\n"
           << "set style data histogram\n"
           << "set style histogram clustered\n"
           << "set style fill solid 0.8\n"
           << "set logscale y\n"
           << "set ylabel 'training time (s, log scale)'\n"
           << "set key outside\n"
           << "plot for [COL=2:" << 1 + targets.size() << "] 'timing.dat' using COL:xtic(1) "
           << "title columnheader\n";
    }
    return out;
}

} // namespace cmrec::exp
