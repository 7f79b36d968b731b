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
#include <string>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/nn/init.hpp"
#include "cmrec/nn/tape.hpp"
#include "cmrec/nn/tensor.hpp"

namespace cmrec::models {

enum class Arch { Gmf, Mlp, Nmf };

inline std::string arch_name(Arch a) {
    switch (a) {
    case Arch::Gmf: return "gmf";
    case Arch::Mlp: return "mlp";
    case Arch::Nmf: return "nmf";
    }
    return "?";
}

struct ModelConfig {
    Arch arch = Arch::Gmf;
    bool market_aware = false;
    int embed_dim = 8;
    std::vector<int> layer_plan = {16, 64, 32, 16, 8}; // Mlp/Nmf only
    int n_users = 0;
    int n_items = 0;
    int n_markets = 1;

    bool uses_layers() const { return arch == Arch::Mlp || arch == Arch::Nmf; }

    /// "gmf", "ma-mlp", ... — the wire name used by the CLI and checkpoints.
    std::string kind_name() const {
        return market_aware ? "ma-" + arch_name(arch) : arch_name(arch);
    }

    void validate() const {
        if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
        if (n_users < 1 || n_items < 1) throw ConfigError("model needs at least one user and item");
        if (n_markets < 1) throw ConfigError("n_markets must be >= 1");
        if (uses_layers()) {
            if (layer_plan.size() < 2) throw ConfigError("layer_plan needs >= 2 entries");
            if (layer_plan.front() != 2 * embed_dim)
                throw ConfigError("layer_plan[0] must equal 2*embed_dim");
            if (layer_plan.back() != embed_dim)
                throw ConfigError("layer_plan must end at embed_dim");
            for (int w : layer_plan)
                if (w < 1) throw ConfigError("layer_plan entries must be positive");
        }
    }
};

inline ModelConfig parse_kind(const std::string& kind) {
    ModelConfig c;
    std::string base = kind;
    if (base.rfind("ma-", 0) == 0) {
        c.market_aware = true;
        base = base.substr(3);
    }
    if (base == "gmf") c.arch = Arch::Gmf;
    else if (base == "mlp") c.arch = Arch::Mlp;
    else if (base == "nmf") c.arch = Arch::Nmf;
    else throw ConfigError("unknown model kind: " + kind);
    return c;
}

/// One scoring model: embedding tables plus the dense head. Value semantics;
/// copying a Model yields a fully independent parameter set.
struct Model {
    ModelConfig config;

    // Gmf/Mlp use user_emb/item_emb. Nmf keeps one pair per tower.
    nn::Param user_emb;
    nn::Param item_emb;
    nn::Param user_emb_gmf;
    nn::Param item_emb_gmf;
    nn::Param market_emb; // market-aware only
    std::vector<nn::Param> layer_w;
    std::vector<nn::Param> layer_b;
    nn::Param out_vec;

    /// Stable enumeration of trainable parameters. Order is part of the
    /// checkpoint/optimizer contract.
    std::vector<nn::Param*> trainable() {
        std::vector<nn::Param*> ps;
        ps.push_back(&user_emb);
        ps.push_back(&item_emb);
        if (config.arch == Arch::Nmf) {
            ps.push_back(&user_emb_gmf);
            ps.push_back(&item_emb_gmf);
        }
        if (config.market_aware) ps.push_back(&market_emb);
        for (std::size_t k = 0; k < layer_w.size(); ++k) {
            ps.push_back(&layer_w[k]);
            ps.push_back(&layer_b[k]);
        }
        ps.push_back(&out_vec);
        return ps;
    }

    /// Freeze-mask group of a parameter: user | item | market | layers | out.
    static std::string group_of(const nn::Param& p) {
        if (p.name.rfind("user_emb", 0) == 0) return "user";
        if (p.name.rfind("item_emb", 0) == 0) return "item";
        if (p.name.rfind("market_emb", 0) == 0) return "market";
        if (p.name.rfind("layer_", 0) == 0) return "layers";
        return "out";
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        for (const nn::Param* p : trainable()) n += static_cast<std::int64_t>(p->size());
        return n;
    }

    void zero_grads() {
        for (nn::Param* p : trainable()) p->zero_grad();
    }

    bool parameters_finite() {
        for (nn::Param* p : trainable())
            if (!p->value.all_finite()) return false;
        return true;
    }
};

/// Builds a model with the conventional initialization: embeddings and the
/// output vector ~ N(0, 0.01^2), layer weights Glorot-uniform, biases zero.
/// Market rows start at ones so the untrained gate is the identity and a
/// market-aware model begins exactly as its unaware counterpart.
inline Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    const auto d = static_cast<std::size_t>(config.embed_dim);
    const auto nu = static_cast<std::size_t>(config.n_users);
    const auto ni = static_cast<std::size_t>(config.n_items);
    auto emb = [&](const char* name, std::size_t rows) {
        return nn::Param(name, nn::init_matrix(rows, d, nn::InitScheme::Gaussian,
                                               derive_seed(seed, name)));
    };
    if (config.arch == Arch::Nmf) {
        m.user_emb = emb("user_emb_mlp", nu);
        m.item_emb = emb("item_emb_mlp", ni);
        m.user_emb_gmf = emb("user_emb_gmf", nu);
        m.item_emb_gmf = emb("item_emb_gmf", ni);
    } else {
        m.user_emb = emb("user_emb", nu);
        m.item_emb = emb("item_emb", ni);
    }
    if (config.market_aware) {
        m.market_emb =
            nn::Param("market_emb",
                      nn::Tensor::matrix(static_cast<std::size_t>(config.n_markets), d));
        m.market_emb.value.fill(1.0);
    }
    if (config.uses_layers()) {
        for (std::size_t k = 0; k + 1 < config.layer_plan.size(); ++k) {
            const auto in = static_cast<std::size_t>(config.layer_plan[k]);
            const auto out = static_cast<std::size_t>(config.layer_plan[k + 1]);
            const std::string wn = "layer_w" + std::to_string(k);
            m.layer_w.emplace_back(wn, nn::init_matrix(out, in, nn::InitScheme::GlorotUniform,
                                                       derive_seed(seed, wn)));
            m.layer_b.emplace_back("layer_b" + std::to_string(k),
                                   nn::Tensor::vector(out));
        }
    }
    const std::size_t head = config.arch == Arch::Gmf   ? d
                             : config.arch == Arch::Mlp ? static_cast<std::size_t>(config.layer_plan.back())
                                                        : d + static_cast<std::size_t>(config.layer_plan.back());
    m.out_vec = nn::Param("out_vec", nn::init_vector(head, nn::InitScheme::Gaussian,
                                                     derive_seed(seed, "out_vec")));
    return m;
}

namespace detail {
inline void check_ids(const Model& m, int user, int item, int market) {
    if (user < 0 || user >= m.config.n_users)
        throw LookupError("user id " + std::to_string(user) + " out of range");
    if (item < 0 || item >= m.config.n_items)
        throw LookupError("item id " + std::to_string(item) + " out of range");
    if (m.config.market_aware && (market < 0 || market >= m.config.n_markets))
        throw LookupError("market id " + std::to_string(market) + " out of range");
}
} // namespace detail

/// Records the forward pass for score(user, item, market) on the tape and
/// returns the sigmoid output node. Market-unaware kinds ignore `market`.
inline nn::Tape::NodeId forward_score(Model& m, nn::Tape& tape, int user, int item, int market) {
    detail::check_ids(m, user, item, market);
    using NodeId = nn::Tape::NodeId;
    const auto u = static_cast<std::size_t>(user);
    const auto i = static_cast<std::size_t>(item);
    const auto l = static_cast<std::size_t>(market);

    auto mlp_stack = [&](NodeId x) {
        for (std::size_t k = 0; k < m.layer_w.size(); ++k)
            x = tape.relu(tape.affine(m.layer_w[k], m.layer_b[k], x));
        return x;
    };

    NodeId pre;
    switch (m.config.arch) {
    case Arch::Gmf: {
        NodeId p = tape.embedding_row(m.user_emb, u);
        NodeId q = tape.embedding_row(m.item_emb, i);
        NodeId h = m.config.market_aware
                       ? tape.mul3(p, q, tape.embedding_row(m.market_emb, l))
                       : tape.mul(p, q);
        pre = tape.dot(tape.param_vector(m.out_vec), h);
        break;
    }
    case Arch::Mlp: {
        NodeId p = tape.embedding_row(m.user_emb, u);
        NodeId q = tape.embedding_row(m.item_emb, i);
        if (m.config.market_aware) q = tape.mul(q, tape.embedding_row(m.market_emb, l));
        NodeId x = mlp_stack(tape.concat(p, q));
        pre = tape.dot(tape.param_vector(m.out_vec), x);
        break;
    }
    case Arch::Nmf: {
        NodeId p1 = tape.embedding_row(m.user_emb, u);
        NodeId q1 = tape.embedding_row(m.item_emb, i);
        NodeId p2 = tape.embedding_row(m.user_emb_gmf, u);
        NodeId q2 = tape.embedding_row(m.item_emb_gmf, i);
        NodeId m_gmf;
        if (m.config.market_aware) {
            NodeId o = tape.embedding_row(m.market_emb, l);
            q1 = tape.mul(q1, o);
            m_gmf = tape.mul3(p2, q2, o);
        } else {
            m_gmf = tape.mul(p2, q2);
        }
        NodeId m_mlp = mlp_stack(tape.concat(p1, q1));
        pre = tape.dot(tape.param_vector(m.out_vec), tape.concat(m_gmf, m_mlp));
        break;
    }
    default:
        throw ConfigError("unknown arch");
    }
    return tape.sigmoid(pre);
}

/// BCE loss node for one labelled example.
inline nn::Tape::NodeId forward_loss(Model& m, nn::Tape& tape, int user, int item, int market,
                                     double label) {
    return tape.bce(forward_score(m, tape, user, item, market), label);
}

/// Plain score in (0,1); uses a per-thread scratch tape.
inline double score(Model& m, int user, int item, int market) {
    thread_local nn::Tape tape;
    tape.clear();
    return tape.value_of(forward_score(m, tape, user, item, market));
}

/// Deep copy. Mutating the fork never touches the original.
inline Model fork(const Model& m) { return m; }

/// Neural matrix factorization warm start: tower embeddings and layers are
/// copied from the trained donors, the output vector is the scaled
/// concatenation [alpha * h_gmf ; (1-alpha) * h_mlp]. Market tables (when
/// present) blend the donors with the same alpha.
inline Model warm_start_nmf(const Model& gmf, const Model& mlp, double alpha) {
    if (gmf.config.arch != Arch::Gmf || mlp.config.arch != Arch::Mlp)
        throw ConfigError("warm_start_nmf: donors must be a gmf and an mlp model");
    if (gmf.config.market_aware != mlp.config.market_aware)
        throw ConfigError("warm_start_nmf: donors disagree on market awareness");
    if (gmf.config.embed_dim != mlp.config.embed_dim || gmf.config.n_users != mlp.config.n_users ||
        gmf.config.n_items != mlp.config.n_items || gmf.config.n_markets != mlp.config.n_markets)
        throw DimensionError("warm_start_nmf: donor dimensions do not match");

    ModelConfig config = mlp.config;
    config.arch = Arch::Nmf;
    Model m = build_model(config, /*seed=*/0);
    m.user_emb.value = mlp.user_emb.value;
    m.item_emb.value = mlp.item_emb.value;
    m.user_emb_gmf.value = gmf.user_emb.value;
    m.item_emb_gmf.value = gmf.item_emb.value;
    for (std::size_t k = 0; k < m.layer_w.size(); ++k) {
        m.layer_w[k].value = mlp.layer_w[k].value;
        m.layer_b[k].value = mlp.layer_b[k].value;
    }
    if (config.market_aware) {
        for (std::size_t k = 0; k < m.market_emb.size(); ++k)
            m.market_emb.value[k] =
                alpha * gmf.market_emb.value[k] + (1.0 - alpha) * mlp.market_emb.value[k];
    }
    const std::size_t d = static_cast<std::size_t>(config.embed_dim);
    for (std::size_t k = 0; k < d; ++k) m.out_vec.value[k] = alpha * gmf.out_vec.value[k];
    for (std::size_t k = 0; k < mlp.out_vec.size(); ++k)
        m.out_vec.value[d + k] = (1.0 - alpha) * mlp.out_vec.value[k];
    return m;
}

} // namespace cmrec::models
