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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmrec/cmrec.hpp"

namespace fs = std::filesystem;
using namespace cmrec;

namespace {

struct CommonOpts {
    std::uint64_t seed = 7;
    std::string out_dir = "out";
    std::vector<std::string> dataset; // TSV file(s) or one prepared directory
    std::vector<std::string> markets; // allowed set (prepare) / targets (experiments)
    std::vector<std::string> methods;
};

struct TrainOpts {
    train::TrainConfig tcfg;
    train::MamlConfig mcfg;
    double warm_alpha = 0.5;
    std::vector<std::string> freeze;
    int embed_dim = 8;
    std::vector<int> layers = {16, 64, 32, 16, 8};
};

void add_train_flags(CLI::App* s, TrainOpts& o) {
    s->add_option("--epochs", o.tcfg.epochs, "training epochs");
    s->add_option("--batch-size", o.tcfg.batch_size, "minibatch size");
    s->add_option("--lr-gmf", o.tcfg.lr_gmf, "learning rate for GMF-style models");
    s->add_option("--lr-mlp", o.tcfg.lr_mlp, "learning rate for MLP-style models");
    s->add_option("--lr-nmf", o.tcfg.lr_nmf, "learning rate for NMF-style models");
    s->add_option("--l2", o.tcfg.l2_lambda, "L2 regularization strength");
    s->add_option("--negatives", o.tcfg.negatives_per_positive, "negatives per positive");
    s->add_option("--fast-lr", o.mcfg.fast_lr, "MAML inner-loop learning rate");
    s->add_option("--shots", o.mcfg.shots, "MAML support size per task");
    s->add_option("--inner-steps", o.mcfg.inner_steps, "MAML inner SGD steps");
    s->add_option("--meta-lr", o.mcfg.meta_lr, "MAML outer learning rate (0 = model default)");
    s->add_option("--meta-epochs", o.mcfg.meta_epochs, "MAML meta-epochs");
    s->add_flag("--second-order", o.mcfg.second_order, "second-order meta-gradients");
    s->add_option("--warm-alpha", o.warm_alpha, "NMF warm-start blend weight");
    s->add_option("--freeze", o.freeze, "FOREC frozen groups (user item market layers out)");
    s->add_option("--embed-dim", o.embed_dim, "embedding dimension");
    s->add_option("--layers", o.layers, "MLP tower layer plan");
}

exp::ExperimentConfig make_exp_config(const CommonOpts& c, const TrainOpts& t) {
    exp::ExperimentConfig cfg;
    cfg.out_dir = c.out_dir;
    cfg.targets = c.markets;
    cfg.methods = c.methods;
    cfg.tcfg = t.tcfg;
    cfg.mcfg = t.mcfg;
    cfg.master_seed = c.seed;
    cfg.warm_start_alpha = t.warm_alpha;
    cfg.embed_dim = t.embed_dim;
    cfg.layer_plan = t.layers;
    if (!t.freeze.empty()) {
        cfg.forec_mask.frozen = {t.freeze.begin(), t.freeze.end()};
        cfg.forec_mask.validate();
    }
    return cfg;
}

/// `--dataset` accepts TSV files (ingested and split with --seed) or a
/// single directory holding a prepared registry.json + splits.json.
data::PreparedDataset load_or_prepare(const CommonOpts& c, const std::string& base) {
    if (c.dataset.empty()) throw ConfigError("--dataset is required");
    if (c.dataset.size() == 1 && fs::is_directory(c.dataset.front()))
        return data::load_prepared(c.dataset.front());
    data::DatasetBuilder builder;
    if (!c.markets.empty()) builder.set_allowed_markets(c.markets);
    if (!base.empty()) builder.set_base_market(base);
    for (const auto& path : c.dataset) builder.add_file(path);
    data::BuiltDataset built = builder.build();
    data::PreparedDataset prep;
    prep.splits = data::leave_one_out_split(built, c.seed);
    prep.registry = std::move(built.registry);
    return prep;
}

void print_dataset_summary(const data::PreparedDataset& prep) {
    const data::MarketRegistry& reg = prep.registry;
    std::printf("%-8s %8s %8s %8s %8s %8s\n", "market", "users", "items", "train", "val", "test");
    for (int l = 0; l < reg.n_markets(); ++l) {
        const auto [lo, hi] = reg.user_range(l);
        const auto& split = prep.splits.markets.at(l);
        std::printf("%-8s %8d %8zu %8zu %8zu %8zu\n", reg.market_code(l).c_str(), hi - lo,
                    reg.market_items(l).size(), split.train.size(), split.validation.size(),
                    split.test.size());
    }
    std::printf("total    %8d %8d   (dataset fingerprint %016llx)\n", reg.n_users(), reg.n_items(),
                static_cast<unsigned long long>(prep.splits.dataset_fingerprint));
}

void emit_table(const exp::ResultsTable& t, const std::string& stem) {
    for (const char* f : {"csv", "json", "text"}) exp::emit_results(t, f, stem);
    std::cout << "\n" << exp::table_to_text(t);
}

int cmd_synth(const CommonOpts& c, const data::SynthSpec& spec, const std::string& tsv,
              bool prepare) {
    auto rows = data::generate_synthetic_rows(spec, c.seed);
    fs::create_directories(c.out_dir);
    const std::string path = c.out_dir + "/" + tsv;
    data::write_rows_tsv(rows, path);
    std::printf("wrote %zu interactions to %s\n", rows.size(), path.c_str());
    if (prepare) {
        data::BuiltDataset built = data::generate_synthetic_markets(spec, c.seed);
        data::SplitDataset splits = data::leave_one_out_split(built, c.seed);
        data::save_prepared(built.registry, splits, c.out_dir);
        data::PreparedDataset prep{built.registry, std::move(splits)};
        print_dataset_summary(prep);
    }
    return 0;
}

int cmd_prepare(const CommonOpts& c, const std::string& base) {
    data::PreparedDataset prep = load_or_prepare(c, base);
    data::save_prepared(prep.registry, prep.splits, c.out_dir);
    print_dataset_summary(prep);
    std::printf("prepared dataset written to %s\n", c.out_dir.c_str());
    return 0;
}

int cmd_train(const CommonOpts& c, const TrainOpts& t, const std::string& base,
              const std::string& market, const std::string& source, const std::string& method) {
    data::PreparedDataset prep = load_or_prepare(c, base);
    const data::MarketRegistry& reg = prep.registry;

    models::ModelConfig mc = models::parse_kind(method);
    mc.embed_dim = t.embed_dim;
    mc.layer_plan = t.layers;
    mc.n_users = reg.n_users();
    mc.n_items = reg.n_items();
    mc.n_markets = reg.n_markets();

    std::vector<data::Interaction> rows;
    if (market.empty()) {
        rows = data::make_global(prep.splits);
    } else {
        const auto& tsplit = prep.splits.markets.at(reg.market_id(market));
        if (source.empty())
            rows = tsplit.train;
        else
            rows = data::make_pairwise(tsplit.train,
                                       prep.splits.markets.at(reg.market_id(source)).train,
                                       derive_seed(c.seed, "pair/" + market + "/" + source));
    }

    train::TrainConfig tcfg = t.tcfg;
    tcfg.seed = derive_seed(c.seed, "train/" + method);
    models::Model m = models::build_model(mc, tcfg.seed);
    train::RunRecord rec =
        train::train(m, rows, reg, tcfg, prep.splits.dataset_fingerprint);

    fs::create_directories(c.out_dir);
    models::save_checkpoint(m, c.out_dir + "/checkpoint.json", prep.splits.dataset_fingerprint);
    data::save_json(train::run_record_to_json(rec), c.out_dir + "/run.json");
    std::printf("trained %s on %zu rows: final epoch loss %.6f, %.2fs\n", mc.kind_name().c_str(),
                rows.size(), rec.epoch_loss.empty() ? 0.0 : rec.epoch_loss.back(),
                rec.wall_seconds);
    return 0;
}

int cmd_evaluate(const CommonOpts& c, const std::string& base, const std::string& checkpoint,
                 const std::string& market, const std::string& split) {
    data::PreparedDataset prep = load_or_prepare(c, base);
    const data::MarketRegistry& reg = prep.registry;
    models::Model m = models::load_checkpoint(checkpoint, prep.splits.dataset_fingerprint);
    if (market.empty()) throw ConfigError("--market is required");
    const int mid = reg.market_id(market);
    const auto& msplit = prep.splits.markets.at(mid);
    const auto& records = split == "validation" ? msplit.validation : msplit.test;
    if (split != "validation" && split != "test")
        throw ConfigError("--split must be validation or test");
    eval::EvalReport report =
        eval::evaluate(m, records, m.config.kind_name() + "@" + checkpoint, mid, split);
    fs::create_directories(c.out_dir);
    data::save_json(eval::report_to_json(report), c.out_dir + "/" + split + ".json");
    std::ofstream csv(c.out_dir + "/" + split + ".csv");
    csv << eval::report_to_csv(report);
    std::printf("%s %s on %s: nDCG@10 %.4f  HR@10 %.4f  (%zu users)\n",
                m.config.kind_name().c_str(), split.c_str(), market.c_str(), report.mean_ndcg,
                report.mean_hr, report.users.size());
    return 0;
}

int cmd_pairwise(const CommonOpts& c, const TrainOpts& t, const std::string& base,
                 const std::vector<std::string>& sources, int jobs, bool save_checkpoints,
                 int sig_m_avg, int sig_m_bst) {
    data::PreparedDataset prep = load_or_prepare(c, base);
    exp::ExperimentConfig cfg = make_exp_config(c, t);
    cfg.sources = sources;
    cfg.jobs = jobs;
    cfg.save_checkpoints = save_checkpoints;
    cfg.sig_m_avg = sig_m_avg;
    cfg.sig_m_bst = sig_m_bst;
    exp::ExperimentOutcome out = exp::run_pairwise(prep, cfg);
    emit_table(out.tables.at(0), c.out_dir + "/avg");
    emit_table(out.tables.at(1), c.out_dir + "/bst");
    return 0;
}

int cmd_global(const CommonOpts& c, const TrainOpts& t, const std::string& base, int jobs,
               bool save_checkpoints, int sig_m) {
    data::PreparedDataset prep = load_or_prepare(c, base);
    exp::ExperimentConfig cfg = make_exp_config(c, t);
    cfg.jobs = jobs;
    cfg.save_checkpoints = save_checkpoints;
    cfg.sig_m_global = sig_m;
    exp::ExperimentOutcome out = exp::run_global(prep, cfg);
    emit_table(out.tables.at(0), c.out_dir + "/global");
    return 0;
}

int cmd_benchmark(const CommonOpts& c, const TrainOpts& t, const data::SynthSpec& workload,
                  int jobs) {
    data::PreparedDataset prep;
    if (!c.dataset.empty()) {
        prep = load_or_prepare(c, "");
    } else {
        data::BuiltDataset built = data::generate_synthetic_markets(workload, c.seed);
        prep.splits = data::leave_one_out_split(built, c.seed);
        prep.registry = std::move(built.registry);
    }
    exp::ExperimentConfig cfg = make_exp_config(c, t);
    cfg.jobs = jobs;
    exp::BenchmarkOutcome out = exp::run_benchmark(prep, cfg);
    std::printf("%-10s", "method");
    for (const auto& tg : out.targets) std::printf(" %10s", tg.c_str());
    std::printf("\n");
    for (const auto& m : out.methods) {
        std::printf("%-10s", m.c_str());
        for (const auto& tg : out.targets) std::printf(" %10.2f", out.seconds.at(m).at(tg));
        std::printf("\n");
    }
    std::printf("timing files written under %s\n", c.out_dir.c_str());
    return 0;
}

int cmd_report(const CommonOpts& c, const std::string& table_path,
               const std::vector<std::string>& formats, std::string stem) {
    exp::ResultsTable t = exp::table_from_json(data::load_json(table_path));
    fs::create_directories(c.out_dir);
    if (stem.empty()) stem = fs::path(table_path).stem().string();
    for (const auto& f : formats) exp::emit_results(t, f, c.out_dir + "/" + stem);
    std::cout << exp::table_to_text(t);
    return 0;
}

int cmd_significance(const CommonOpts& c, const std::string& path_a, const std::string& path_b,
                     int m, std::string pair_name) {
    eval::EvalReport a = eval::report_from_json(data::load_json(path_a));
    eval::EvalReport b = eval::report_from_json(data::load_json(path_b));
    if (pair_name.empty())
        pair_name = fs::path(path_a).stem().string() + "-vs-" + fs::path(path_b).stem().string();
    eval::SignificanceResult r =
        eval::compare_reports(a, b, pair_name, std::to_string(a.market), m);
    fs::create_directories(c.out_dir);
    std::ofstream csv(c.out_dir + "/significance.csv");
    csv << eval::significance_csv_header() << eval::significance_to_csv_row(r);
    std::printf("%s: t = %.6f, p = %.6g, threshold 0.05/%d → %s%s\n", pair_name.c_str(), r.t, r.p,
                m, r.significant ? "significant" : "not significant",
                r.degenerate ? " (degenerate: zero variance)" : "");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cmrec — cross-market recommendation laboratory"};
    app.set_config("--config", "", "config file (key=value lines; [subcommand] sections)");
    app.require_subcommand(1);

    CommonOpts c;
    app.add_option("--seed", c.seed, "master seed")->capture_default_str();
    app.add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
    app.add_option("--dataset", c.dataset, "TSV file(s) or a prepared dataset directory");
    app.add_option("--markets", c.markets, "market codes: allowed set (prepare) / targets");
    app.add_option("--methods", c.methods,
                   "methods: gmf ma-gmf mlp ma-mlp nmf ma-nmf maml forec (with prerequisites)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-market dataset");
    synth->fallthrough();
    data::SynthSpec spec;
    std::string tsv_name = "synthetic.tsv";
    bool synth_prepare = false;
    synth->add_option("--synth-markets", spec.n_markets, "number of markets");
    synth->add_option("--users", spec.users_per_market, "users per market");
    synth->add_option("--items", spec.items_per_market, "items per market pool");
    synth->add_option("--ipu", spec.interactions_per_user, "interactions per user");
    synth->add_option("--overlap", spec.item_overlap, "shared fraction of item pools");
    synth->add_option("--divergence", spec.divergence, "market taste divergence in [0,1]");
    synth->add_option("--noise", spec.noise, "preference noise scale");
    synth->add_option("--latent-dim", spec.latent_dim, "planted factor dimension");
    synth->add_option("--tsv", tsv_name, "output TSV filename");
    synth->add_flag("--prepare", synth_prepare, "also split and save a prepared dataset");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "ingest TSVs, split, sample eval negatives");
    prepare->fallthrough();
    std::string base_market;
    prepare->add_option("--base", base_market, "base market whose item pool must cover the rest");

    // train
    auto* tr = app.add_subcommand("train", "train a single model");
    tr->fallthrough();
    TrainOpts t_train;
    add_train_flags(tr, t_train);
    std::string train_method = "nmf", train_market, train_source, train_base;
    tr->add_option("--method", train_method, "model kind (gmf ma-gmf mlp ma-mlp nmf ma-nmf)");
    tr->add_option("--market", train_market, "target market (empty = global concatenation)");
    tr->add_option("--source", train_source, "optional source market (pairwise downsampling)");
    tr->add_option("--base", train_base, "base market check during ingest");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "rank held-out positives for a checkpoint");
    ev->fallthrough();
    std::string eval_checkpoint, eval_market, eval_split = "test", eval_base;
    ev->add_option("--checkpoint", eval_checkpoint, "model checkpoint path")->required();
    ev->add_option("--market", eval_market, "market to evaluate");
    ev->add_option("--split", eval_split, "validation or test");
    ev->add_option("--base", eval_base, "base market check during ingest");

    // pairwise
    auto* pw = app.add_subcommand("pairwise", "run the pairwise experiment matrix (AVG + BST)");
    pw->fallthrough();
    TrainOpts t_pw;
    add_train_flags(pw, t_pw);
    std::vector<std::string> pw_sources;
    int pw_jobs = 1, pw_sig_avg = 9, pw_sig_bst = 12;
    bool pw_ckpt = false;
    std::string pw_base;
    pw->add_option("--sources", pw_sources, "source markets (default: all others)");
    pw->add_option("--jobs", pw_jobs, "parallel worker threads");
    pw->add_flag("--save-checkpoints", pw_ckpt, "persist model checkpoints per cell");
    pw->add_option("--sig-m-avg", pw_sig_avg, "Bonferroni factor for the AVG table");
    pw->add_option("--sig-m-bst", pw_sig_bst, "Bonferroni factor for the BST table");
    pw->add_option("--base", pw_base, "base market check during ingest");

    // global
    auto* gl = app.add_subcommand("global", "run the global (all markets in unison) experiment");
    gl->fallthrough();
    TrainOpts t_gl;
    add_train_flags(gl, t_gl);
    int gl_jobs = 1, gl_sig = 9;
    bool gl_ckpt = false;
    std::string gl_base;
    gl->add_option("--jobs", gl_jobs, "parallel worker threads");
    gl->add_flag("--save-checkpoints", gl_ckpt, "persist model checkpoints per cell");
    gl->add_option("--sig-m", gl_sig, "Bonferroni factor for the global table");
    gl->add_option("--base", gl_base, "base market check during ingest");

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "time the training pipeline per method/target");
    bm->fallthrough();
    TrainOpts t_bm;
    add_train_flags(bm, t_bm);
    data::SynthSpec workload;
    workload.n_markets = 3;
    workload.users_per_market = 360;
    workload.items_per_market = 600;
    workload.interactions_per_user = 8;
    workload.item_overlap = 0.5;
    workload.divergence = 0.3;
    workload.noise = 0.2;
    int bm_jobs = 1;
    bm->add_option("--jobs", bm_jobs, "parallel worker threads");
    bm->add_option("--bench-users", workload.users_per_market, "workload users per market");
    bm->add_option("--bench-items", workload.items_per_market, "workload items per market");
    bm->add_option("--bench-ipu", workload.interactions_per_user, "workload interactions/user");

    // report
    auto* rp = app.add_subcommand("report", "re-emit a saved results table");
    rp->fallthrough();
    std::string rp_table, rp_stem;
    std::vector<std::string> rp_formats = {"csv", "json", "text"};
    rp->add_option("--table", rp_table, "table JSON file")->required();
    rp->add_option("--formats", rp_formats, "any of: csv json text");
    rp->add_option("--stem", rp_stem, "output filename stem (default: input stem)");

    // significance
    auto* sg = app.add_subcommand("significance", "paired t-test between two eval reports");
    sg->fallthrough();
    std::string sg_a, sg_b, sg_pair;
    int sg_m = 1;
    sg->add_option("--report-a", sg_a, "first eval report JSON")->required();
    sg->add_option("--report-b", sg_b, "second eval report JSON")->required();
    sg->add_option("--m", sg_m, "Bonferroni factor");
    sg->add_option("--pair-name", sg_pair, "label for the comparison");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(synth)) return cmd_synth(c, spec, tsv_name, synth_prepare);
        if (app.got_subcommand(prepare)) return cmd_prepare(c, base_market);
        if (app.got_subcommand(tr))
            return cmd_train(c, t_train, train_base, train_market, train_source, train_method);
        if (app.got_subcommand(ev))
            return cmd_evaluate(c, eval_base, eval_checkpoint, eval_market, eval_split);
        if (app.got_subcommand(pw))
            return cmd_pairwise(c, t_pw, pw_base, pw_sources, pw_jobs, pw_ckpt, pw_sig_avg,
                                pw_sig_bst);
        if (app.got_subcommand(gl))
            return cmd_global(c, t_gl, gl_base, gl_jobs, gl_ckpt, gl_sig);
        if (app.got_subcommand(bm)) return cmd_benchmark(c, t_bm, workload, bm_jobs);
        if (app.got_subcommand(rp)) return cmd_report(c, rp_table, rp_formats, rp_stem);
        if (app.got_subcommand(sg)) return cmd_significance(c, sg_a, sg_b, sg_m, sg_pair);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand given\n";
    return 1;
}
