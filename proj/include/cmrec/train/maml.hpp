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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/train/trainer.hpp"

namespace cmrec::train {

struct MamlConfig {
    double fast_lr = 0.1; // inner-loop SGD rate (beta)
    int shots = 20;       // support positives per task per iteration
    int inner_steps = 1;
    double meta_lr = 0.0; // 0 → the base learning rate of the model kind
    int meta_epochs = 25;
    bool second_order = false; // adds the Hessian-vector correction term
    std::uint64_t seed = 0;

    void validate() const {
        if (fast_lr < 0) throw ConfigError("fast_lr must be >= 0");
        if (shots < 1) throw ConfigError("shots must be >= 1");
        if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
        if (meta_lr < 0) throw ConfigError("meta_lr must be >= 0");
        if (meta_epochs < 0) throw ConfigError("meta_epochs must be >= 0");
        if (second_order && inner_steps != 1)
            throw ConfigError("second-order meta-gradients support inner_steps=1 only");
    }
};

inline nlohmann::json maml_config_to_json(const MamlConfig& c) {
    return {{"fast_lr", c.fast_lr},     {"shots", c.shots},
            {"inner_steps", c.inner_steps}, {"meta_lr", c.meta_lr},
            {"meta_epochs", c.meta_epochs}, {"second_order", c.second_order},
            {"seed", c.seed}};
}

/// One task = one market's train set.
struct MamlTask {
    int market = -1;
    std::vector<data::Interaction> train;
};

namespace detail {

inline void copy_param_values(models::Model& dst, models::Model& src) {
    auto d = dst.trainable();
    auto s = src.trainable();
    for (std::size_t k = 0; k < d.size(); ++k) d[k]->value = s[k]->value;
}

inline void sgd_step(const std::vector<nn::Param*>& params, double lr) {
    for (nn::Param* p : params)
        for (std::size_t k = 0; k < p->size(); ++k) p->value[k] -= lr * p->grad[k];
}

} // namespace detail

/// First-order MAML step for one task, written into `m`'s grad buffers:
/// adapt a copy by `inner_steps` SGD steps at fast_lr on the support batch,
/// then evaluate the query-batch gradient at the adapted parameters. With
/// `second_order`, the Hessian-vector term -fast_lr * H_support(theta) * g is
/// added via central finite differences of the support gradient. Returns the
/// query batch's mean BCE at the adapted point.
inline double maml_meta_gradient(models::Model& m, models::Model& scratch,
                                 const std::vector<Example>& support,
                                 const std::vector<Example>& query, const MamlConfig& mcfg,
                                 double lambda, nn::Tape& tape) {
    mcfg.validate();
    if (support.empty() || query.empty())
        throw ConfigError("maml_meta_gradient needs nonempty support and query batches");
    detail::copy_param_values(scratch, m);
    std::vector<nn::Param*> sp = scratch.trainable();
    for (int step = 0; step < mcfg.inner_steps; ++step) {
        batch_grad(scratch, tape, support.data(), support.size(), sp, lambda);
        detail::sgd_step(sp, mcfg.fast_lr);
    }
    const double query_loss =
        batch_grad(scratch, tape, query.data(), query.size(), sp, lambda);

    std::vector<nn::Param*> mp = m.trainable();
    if (!mcfg.second_order || mcfg.fast_lr == 0.0) {
        for (std::size_t k = 0; k < mp.size(); ++k) mp[k]->grad = sp[k]->grad;
        return query_loss;
    }

    // second-order correction: meta_grad = g_q(theta') - fast_lr * H_s(theta) * g_q(theta')
    double vmax = 0.0, tmax = 0.0;
    for (std::size_t k = 0; k < mp.size(); ++k)
        for (std::size_t j = 0; j < mp[k]->size(); ++j) {
            vmax = std::max(vmax, std::abs(sp[k]->grad[j]));
            tmax = std::max(tmax, std::abs(mp[k]->value[j]));
        }
    std::vector<nn::Tensor> gq(mp.size(), nn::Tensor{});
    for (std::size_t k = 0; k < mp.size(); ++k) gq[k] = sp[k]->grad;
    if (vmax == 0.0) {
        for (std::size_t k = 0; k < mp.size(); ++k) mp[k]->grad = gq[k];
        return query_loss;
    }
    const double eps = 1e-6 * (1.0 + tmax) / vmax;
    auto support_grad_at = [&](double shift) {
        detail::copy_param_values(scratch, m);
        for (std::size_t k = 0; k < mp.size(); ++k)
            for (std::size_t j = 0; j < mp[k]->size(); ++j)
                sp[k]->value[j] += shift * gq[k][j];
        batch_grad(scratch, tape, support.data(), support.size(), sp, lambda);
    };
    support_grad_at(eps);
    std::vector<nn::Tensor> hvp(mp.size(), nn::Tensor{});
    for (std::size_t k = 0; k < mp.size(); ++k) hvp[k] = sp[k]->grad;
    support_grad_at(-eps);
    for (std::size_t k = 0; k < mp.size(); ++k) {
        for (std::size_t j = 0; j < mp[k]->size(); ++j) {
            const double h = (hvp[k][j] - sp[k]->grad[j]) / (2.0 * eps);
            mp[k]->grad[j] = gq[k][j] - mcfg.fast_lr * h;
        }
    }
    return query_loss;
}

/// Meta-training across market tasks. Each meta-epoch walks every task's
/// positives once as support and once as query: windows of `shots` positives
/// are paired with the following window (wrapping), so iteration j adapts on
/// window j and meta-updates from window j+1. Tasks too small for two
/// disjoint windows fall back to sampling with replacement and flag it.
inline RunRecord train_maml(models::Model& m, const std::vector<MamlTask>& tasks,
                            const data::MarketRegistry& reg, const MamlConfig& mcfg,
                            const TrainConfig& tcfg, std::uint64_t dataset_fingerprint) {
    mcfg.validate();
    tcfg.validate();
    if (tasks.empty()) throw ConfigError("train_maml needs at least one task");
    for (const MamlTask& t : tasks)
        if (t.train.empty())
            throw DataError("maml task for market " + std::to_string(t.market) + " is empty");

    RunRecord rec;
    // tasks without two disjoint shot windows reuse examples across
    // support/query; record that the episode protocol was degraded
    for (const MamlTask& t : tasks)
        if (t.train.size() < 2 * static_cast<std::size_t>(mcfg.shots))
            rec.sampled_with_replacement = true;

    std::vector<data::Interaction> all_train;
    for (const MamlTask& t : tasks)
        all_train.insert(all_train.end(), t.train.begin(), t.train.end());
    NegativeSampler sampler(reg, all_train);

    const double meta_lr = mcfg.meta_lr > 0 ? mcfg.meta_lr : tcfg.lr_for(m.config.arch);
    std::vector<nn::Param*> params = m.trainable();
    nn::AdamState adam(params, {});
    models::Model scratch = m; // reused across iterations; values overwritten each time

    rec.model_kind = "maml(" + m.config.kind_name() + ")";
    rec.dataset_fingerprint = dataset_fingerprint;
    rec.config = maml_config_to_json(mcfg);
    rec.config["train"] = train_config_to_json(tcfg);
    rec.seed = mcfg.seed;

    const std::size_t shots = static_cast<std::size_t>(mcfg.shots);
    std::size_t max_windows = 1;
    for (const MamlTask& t : tasks)
        max_windows = std::max(max_windows, (t.train.size() + shots - 1) / shots);

    std::vector<nn::Tensor> meta_grad;
    for (nn::Param* p : params) meta_grad.push_back(nn::Tensor::zeros_like(p->value));
    std::vector<std::vector<std::size_t>> order(tasks.size());
    std::vector<Example> support, query;
    nn::Tape tape;

    auto fill_batch = [&](std::vector<Example>& out, const MamlTask& task,
                          const std::vector<std::size_t>& ord, std::size_t window, Rng& rng,
                          bool* replaced) {
        out.clear();
        for (std::size_t j = 0; j < shots; ++j) {
            std::size_t at = window * shots + j;
            if (at >= ord.size()) {
                if (ord.size() >= shots) {
                    at %= ord.size(); // wrap into the shuffled order
                } else {
                    at = rng.below(ord.size()); // tiny task: with replacement
                    *replaced = true;
                }
            }
            const data::Interaction& x = task.train[ord[at]];
            out.push_back(Example{x.user, x.item, x.market, 1.0});
            for (int n = 0; n < tcfg.negatives_per_positive; ++n)
                out.push_back(
                    Example{x.user, sampler.sample(x.user, x.market, rng), x.market, 0.0});
        }
    };

    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < mcfg.meta_epochs; ++epoch) {
        Rng rng(derive_seed(mcfg.seed, "meta-epoch", static_cast<std::uint64_t>(epoch)));
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            order[t].resize(tasks[t].train.size());
            for (std::size_t j = 0; j < order[t].size(); ++j) order[t][j] = j;
            rng.shuffle(order[t]);
        }
        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        for (std::size_t w = 0; w < max_windows; ++w) {
            for (auto& g : meta_grad) g.fill(0.0);
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                // tasks with fewer windows than the widest keep cycling theirs
                const std::size_t windows =
                    std::max<std::size_t>(1, (order[t].size() + shots - 1) / shots);
                fill_batch(support, tasks[t], order[t], w % windows, rng,
                           &rec.sampled_with_replacement);
                fill_batch(query, tasks[t], order[t], (w % windows) + 1, rng,
                           &rec.sampled_with_replacement);
                loss_sum += maml_meta_gradient(m, scratch, support, query, mcfg,
                                               tcfg.l2_lambda, tape);
                ++loss_n;
                for (std::size_t k = 0; k < params.size(); ++k)
                    for (std::size_t j = 0; j < params[k]->size(); ++j)
                        meta_grad[k][j] += params[k]->grad[j];
            }
            for (std::size_t k = 0; k < params.size(); ++k)
                for (std::size_t j = 0; j < params[k]->size(); ++j)
                    params[k]->grad[j] = meta_grad[k][j] / static_cast<double>(tasks.size());
            adam.step(params, meta_lr);
        }
        rec.epoch_loss.push_back(loss_sum / static_cast<double>(loss_n));
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// FOREC adaptation: fork the meta-trained model, freeze the masked groups,
/// fine-tune the rest on the target market's train set.
inline std::pair<models::Model, RunRecord> forec_adapt(const models::Model& maml_model,
                                                       const std::vector<data::Interaction>& target_train,
                                                       const data::MarketRegistry& reg,
                                                       const FreezeMask& mask,
                                                       const TrainConfig& cfg,
                                                       std::uint64_t dataset_fingerprint) {
    models::Model tuned = models::fork(maml_model);
    RunRecord rec = train(tuned, target_train, reg, cfg, dataset_fingerprint, &mask);
    rec.model_kind = "forec(" + maml_model.config.kind_name() + ")";
    return {std::move(tuned), std::move(rec)};
}

} // namespace cmrec::train
