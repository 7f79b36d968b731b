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
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/data/registry.hpp"
#include "cmrec/models/model.hpp"
#include "cmrec/nn/adam.hpp"
#include "cmrec/nn/tape.hpp"

namespace cmrec::train {

struct TrainConfig {
    int epochs = 25;
    int batch_size = 1024;
    double lr_gmf = 0.005;
    double lr_mlp = 0.01;
    double lr_nmf = 0.01;
    double l2_lambda = 1e-7;
    int negatives_per_positive = 4;
    std::uint64_t seed = 0;

    double lr_for(models::Arch arch) const {
        switch (arch) {
        case models::Arch::Gmf: return lr_gmf;
        case models::Arch::Mlp: return lr_mlp;
        case models::Arch::Nmf: return lr_nmf;
        }
        throw ConfigError("no learning rate for model kind");
    }

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (lr_gmf <= 0 || lr_mlp <= 0 || lr_nmf <= 0)
            throw ConfigError("learning rates must be positive");
        if (l2_lambda < 0) throw ConfigError("l2_lambda must be >= 0");
        if (negatives_per_positive < 0)
            throw ConfigError("negatives_per_positive must be >= 0");
    }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr_gmf", c.lr_gmf},
            {"lr_mlp", c.lr_mlp},
            {"lr_nmf", c.lr_nmf},
            {"l2_lambda", c.l2_lambda},
            {"negatives_per_positive", c.negatives_per_positive},
            {"seed", c.seed}};
}

/// Provenance record of one optimization run.
struct RunRecord {
    std::string model_kind;
    std::uint64_t dataset_fingerprint = 0;
    nlohmann::json config;
    std::vector<double> epoch_loss; // mean BCE per example, one entry per epoch
    double wall_seconds = 0.0;      // optimization loop only
    std::uint64_t seed = 0;
    bool sampled_with_replacement = false; // meta-learning small-task fallback
};

inline nlohmann::json run_record_to_json(const RunRecord& r) {
    return {{"model_kind", r.model_kind},
            {"dataset_fingerprint", r.dataset_fingerprint},
            {"config", r.config},
            {"epoch_loss", r.epoch_loss},
            {"wall_seconds", r.wall_seconds},
            {"seed", r.seed},
            {"sampled_with_replacement", r.sampled_with_replacement}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.model_kind = j.at("model_kind").get<std::string>();
    r.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();
    r.config = j.at("config");
    r.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.sampled_with_replacement = j.at("sampled_with_replacement").get<bool>();
    return r;
}

/// Parameter groups excluded from fine-tuning. Group names follow
/// models::Model::group_of: user, item, market, layers, out.
struct FreezeMask {
    std::set<std::string> frozen;

    static FreezeMask forec_default() { return FreezeMask{{"item", "layers"}}; }

    void validate() const {
        static const std::set<std::string> known = {"user", "item", "market", "layers", "out"};
        for (const auto& g : frozen)
            if (!known.count(g)) throw ConfigError("unknown freeze group: " + g);
    }

    bool is_frozen(const std::string& group) const { return frozen.count(group) > 0; }
};

/// Trainable parameters after masking; throws if nothing is left to tune.
inline std::vector<nn::Param*> unfrozen_params(models::Model& m, const FreezeMask* mask) {
    std::vector<nn::Param*> all = m.trainable();
    if (!mask) return all;
    mask->validate();
    std::vector<nn::Param*> out;
    for (nn::Param* p : all)
        if (!mask->is_frozen(models::Model::group_of(*p))) out.push_back(p);
    if (out.empty()) throw ConfigError("freeze mask leaves no trainable parameters");
    return out;
}

/// One labelled training example.
struct Example {
    int user;
    int item;
    int market;
    double label;
};

/// Uniform negative item draws from the user's market pool, excluding that
/// user's train positives.
class NegativeSampler {
  public:
    NegativeSampler(const data::MarketRegistry& reg, const std::vector<data::Interaction>& train)
        : reg_(&reg), user_pos_(reg.n_users()) {
        for (const data::Interaction& x : train) user_pos_[x.user].push_back(x.item);
        for (auto& v : user_pos_) std::sort(v.begin(), v.end());
    }

    const std::vector<int>& positives(int user) const { return user_pos_.at(user); }

    int sample(int user, int market, Rng& rng) const {
        const std::vector<int>& pool = reg_->market_items(market);
        const std::vector<int>& pos = user_pos_.at(user);
        if (pool.size() <= pos.size())
            throw DataError("market " + reg_->market_code(market) +
                            " has no negative candidates for user " + std::to_string(user));
        for (int tries = 0; tries < 1000; ++tries) {
            const int cand = pool[rng.below(pool.size())];
            if (!std::binary_search(pos.begin(), pos.end(), cand)) return cand;
        }
        // densely positive user: enumerate the complement instead
        std::vector<int> rest;
        for (int i : pool)
            if (!std::binary_search(pos.begin(), pos.end(), i)) rest.push_back(i);
        return rest[rng.below(rest.size())];
    }

  private:
    const data::MarketRegistry* reg_;
    std::vector<std::vector<int>> user_pos_;
};

/// Mean-BCE value of a batch plus the (lambda/2)·||theta||^2 term over
/// `l2_params` — the exact objective whose gradient batch_grad produces.
inline double batch_loss(models::Model& m, nn::Tape& tape, const Example* batch, std::size_t n,
                         const std::vector<nn::Param*>& l2_params, double lambda) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        tape.clear();
        const Example& e = batch[j];
        sum += tape.value_of(models::forward_loss(m, tape, e.user, e.item, e.market, e.label));
    }
    double reg = 0.0;
    if (lambda > 0)
        for (const nn::Param* p : l2_params)
            for (std::size_t k = 0; k < p->size(); ++k) reg += p->value[k] * p->value[k];
    return sum / static_cast<double>(n) + 0.5 * lambda * reg;
}

/// Accumulates d(objective)/d(theta) into the model's grad buffers and
/// returns the batch's mean BCE (data term only).
inline double batch_grad(models::Model& m, nn::Tape& tape, const Example* batch, std::size_t n,
                         const std::vector<nn::Param*>& l2_params, double lambda) {
    m.zero_grads();
    double sum = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        tape.clear();
        const Example& e = batch[j];
        const auto loss = models::forward_loss(m, tape, e.user, e.item, e.market, e.label);
        sum += tape.value_of(loss);
        tape.backward(loss, inv);
    }
    nn::add_l2_grad(l2_params, lambda);
    return sum * inv;
}

/// Standard mini-batch training: per epoch, resample negatives, shuffle,
/// minimize mean BCE + L2 with Adam. Deterministic under a fixed seed.
inline RunRecord train(models::Model& m, const std::vector<data::Interaction>& train_set,
                       const data::MarketRegistry& reg, const TrainConfig& cfg,
                       std::uint64_t dataset_fingerprint, const FreezeMask* mask = nullptr) {
    cfg.validate();
    if (train_set.empty()) throw DataError("cannot train on an empty train set");

    std::vector<nn::Param*> params = unfrozen_params(m, mask);
    nn::AdamState adam(params, {});
    const double lr = cfg.lr_for(m.config.arch);
    NegativeSampler sampler(reg, train_set);

    RunRecord rec;
    rec.model_kind = m.config.kind_name();
    rec.dataset_fingerprint = dataset_fingerprint;
    rec.config = train_config_to_json(cfg);
    rec.seed = cfg.seed;

    std::vector<Example> examples;
    examples.reserve(train_set.size() * (1 + static_cast<std::size_t>(cfg.negatives_per_positive)));
    nn::Tape tape;

    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        examples.clear();
        for (const data::Interaction& x : train_set) {
            examples.push_back(Example{x.user, x.item, x.market, 1.0});
            for (int j = 0; j < cfg.negatives_per_positive; ++j)
                examples.push_back(
                    Example{x.user, sampler.sample(x.user, x.market, rng), x.market, 0.0});
        }
        rng.shuffle(examples);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < examples.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t n =
                std::min<std::size_t>(cfg.batch_size, examples.size() - start);
            loss_sum += n * batch_grad(m, tape, examples.data() + start, n, params, cfg.l2_lambda);
            adam.step(params, lr);
        }
        rec.epoch_loss.push_back(loss_sum / static_cast<double>(examples.size()));
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

} // namespace cmrec::train
