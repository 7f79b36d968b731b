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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cmrec/models/checkpoint.hpp"
#include "cmrec/models/model.hpp"

#include "test_support.hpp"

using Catch::Approx;
using namespace cmrec;

namespace {

models::ModelConfig small_config(const std::string& kind) {
    models::ModelConfig c = models::parse_kind(kind);
    c.embed_dim = 4;
    c.layer_plan = {8, 6, 4};
    c.n_users = 5;
    c.n_items = 6;
    c.n_markets = 3;
    return c;
}

const std::vector<std::string> kAllKinds = {"gmf", "ma-gmf", "mlp",
                                            "ma-mlp", "nmf", "ma-nmf"};

} // namespace

TEST_CASE("gmf score matches hand evaluation", "[models]") {
    models::ModelConfig c = models::parse_kind("gmf");
    c.embed_dim = 2;
    c.n_users = 1;
    c.n_items = 1;
    models::Model m = models::build_model(c, 1);
    m.user_emb.value.at(0, 0) = 1.0;
    m.user_emb.value.at(0, 1) = 1.0;
    m.item_emb.value.at(0, 0) = 2.0;
    m.item_emb.value.at(0, 1) = 3.0;
    m.out_vec.value[0] = 1.0;
    m.out_vec.value[1] = 1.0;
    // sigma(1*2 + 1*3) = sigma(5)
    REQUIRE(models::score(m, 0, 0, 0) == Approx(0.993307).margin(1e-6));
    REQUIRE(models::score(m, 0, 0, 0) == Approx(1.0 / (1.0 + std::exp(-5.0))).epsilon(1e-12));
}

TEST_CASE("gmf with zero user vector scores 0.5 for every item", "[models]") {
    models::ModelConfig c = models::parse_kind("gmf");
    c.embed_dim = 4;
    c.n_users = 2;
    c.n_items = 5;
    models::Model m = models::build_model(c, 3);
    for (std::size_t k = 0; k < 4; ++k) m.user_emb.value.at(1, k) = 0.0;
    for (int i = 0; i < 5; ++i) REQUIRE(models::score(m, 1, i, 0) == 0.5);
}

TEST_CASE("mlp score matches hand evaluation", "[models]") {
    models::ModelConfig c = models::parse_kind("mlp");
    c.embed_dim = 1;
    c.layer_plan = {2, 1};
    c.n_users = 1;
    c.n_items = 1;
    models::Model m = models::build_model(c, 1);
    m.user_emb.value.at(0, 0) = 2.0;
    m.item_emb.value.at(0, 0) = 3.0;
    m.layer_w[0].value.at(0, 0) = 1.0;
    m.layer_w[0].value.at(0, 1) = 1.0;
    m.layer_b[0].value[0] = 0.5;
    m.out_vec.value[0] = 2.0;
    // sigma(2 * relu(2 + 3 + 0.5)) = sigma(11)
    REQUIRE(models::score(m, 0, 0, 0) == Approx(1.0 / (1.0 + std::exp(-11.0))).epsilon(1e-12));
}

TEST_CASE("market-aware scores reduce bitwise to unaware with unit market rows",
          "[models]") {
    for (const std::string& base : {std::string("gmf"), std::string("mlp"), std::string("nmf")}) {
        models::Model plain = models::build_model(small_config(base), 11);
        models::Model aware = models::build_model(small_config("ma-" + base), 11);
        aware.market_emb.value.fill(1.0);
        Rng rng(derive_seed(11, "reduction/" + base));
        for (int k = 0; k < 500; ++k) {
            const int u = static_cast<int>(rng.below(5));
            const int i = static_cast<int>(rng.below(6));
            const int l = static_cast<int>(rng.below(3));
            REQUIRE(models::score(aware, u, i, l) == models::score(plain, u, i, 0));
        }
    }
}

TEST_CASE("market embeddings change scores across markets", "[models]") {
    for (const std::string& kind : {std::string("ma-gmf"), std::string("ma-mlp"),
                                    std::string("ma-nmf")}) {
        models::Model m = models::build_model(small_config(kind), 19);
        // distinct market rows are the premise; init is identity for all
        Rng rng(derive_seed(19, "sensitivity/" + kind));
        for (std::size_t k = 0; k < m.market_emb.size(); ++k)
            m.market_emb.value[k] = rng.gaussian();
        bool differs = false;
        for (int u = 0; u < 5 && !differs; ++u)
            for (int i = 0; i < 6 && !differs; ++i)
                if (models::score(m, u, i, 0) != models::score(m, u, i, 1)) differs = true;
        REQUIRE(differs);
    }
}

TEST_CASE("parameter accounting", "[models]") {
    models::ModelConfig g = models::parse_kind("gmf");
    g.embed_dim = 8;
    g.n_users = 3;
    g.n_items = 4;
    REQUIRE(models::build_model(g, 1).parameter_count() == 3 * 8 + 4 * 8 + 8);

    for (const std::string& base : {std::string("gmf"), std::string("mlp"), std::string("nmf")}) {
        models::ModelConfig plain = models::parse_kind(base);
        plain.n_users = 10;
        plain.n_items = 20;
        plain.n_markets = 2;
        models::ModelConfig aware = models::parse_kind("ma-" + base);
        aware.n_users = 10;
        aware.n_items = 20;
        aware.n_markets = 2;
        const auto diff = models::build_model(aware, 1).parameter_count() -
                          models::build_model(plain, 1).parameter_count();
        REQUIRE(diff == 2 * 8); // n_markets * D = 16
    }

    // MLP beyond the embeddings: layers [16,64,32,16,8] plus h
    models::ModelConfig p = models::parse_kind("mlp");
    p.n_users = 10;
    p.n_items = 20;
    models::Model mlp = models::build_model(p, 1);
    const std::int64_t non_embedding =
        mlp.parameter_count() - (10 * 8 + 20 * 8);
    REQUIRE(non_embedding == 1088 + 2080 + 528 + 136 + 8);
    REQUIRE(non_embedding == 3840);
}

TEST_CASE("nmf towers decompose through the output vector", "[models]") {
    models::Model m = models::build_model(small_config("nmf"), 23);
    // zero the MLP half of h: the score must ignore the MLP tower entirely
    for (std::size_t k = 4; k < m.out_vec.size(); ++k) m.out_vec.value[k] = 0.0;
    const double before = models::score(m, 2, 3, 0);
    m.user_emb.value.fill(9.0); // MLP-tower user table
    REQUIRE(models::score(m, 2, 3, 0) == before);
    // but the GMF tower still matters
    m.user_emb_gmf.value.fill(9.0);
    REQUIRE(models::score(m, 2, 3, 0) != before);
}

TEST_CASE("fork is a deep copy", "[models]") {
    models::Model m = models::build_model(small_config("nmf"), 29);
    models::Model f = models::fork(m);
    REQUIRE(models::score(f, 1, 2, 0) == models::score(m, 1, 2, 0));
    models::Model ff = models::fork(f);
    for (std::size_t k = 0; k < f.trainable().size(); ++k)
        REQUIRE(ff.trainable()[k]->value == f.trainable()[k]->value);

    f.item_emb.value.fill(5.0);
    REQUIRE(m.item_emb.value[0] != 5.0);
}

TEST_CASE("warm-started nmf blends donor heads", "[models]") {
    models::ModelConfig gc = small_config("gmf");
    models::ModelConfig mc = small_config("mlp");
    models::Model gmf = models::build_model(gc, 31);
    models::Model mlp = models::build_model(mc, 37);
    gmf.out_vec.value.fill(1.0);
    mlp.out_vec.value.fill(1.0);

    models::Model nmf = models::warm_start_nmf(gmf, mlp, 0.5);
    REQUIRE(nmf.out_vec.size() == 8); // D + plan.back() = 4 + 4
    for (std::size_t k = 0; k < nmf.out_vec.size(); ++k)
        REQUIRE(nmf.out_vec.value[k] == 0.5);

    // copy semantics: embeddings bitwise equal the donors'
    REQUIRE(nmf.user_emb.value == mlp.user_emb.value);
    REQUIRE(nmf.item_emb.value == mlp.item_emb.value);
    REQUIRE(nmf.user_emb_gmf.value == gmf.user_emb.value);
    REQUIRE(nmf.item_emb_gmf.value == gmf.item_emb.value);
    for (std::size_t k = 0; k < nmf.layer_w.size(); ++k) {
        REQUIRE(nmf.layer_w[k].value == mlp.layer_w[k].value);
        REQUIRE(nmf.layer_b[k].value == mlp.layer_b[k].value);
    }
}

TEST_CASE("warm start with alpha=1 isolates the gmf tower", "[models]") {
    models::Model gmf = models::build_model(small_config("gmf"), 41);
    models::Model mlp = models::build_model(small_config("mlp"), 43);
    models::Model nmf = models::warm_start_nmf(gmf, mlp, 1.0);
    // (1-alpha) = 0 zeroes the MLP half of h, so the NMF equals the donor GMF
    for (int u = 0; u < 5; ++u)
        for (int i = 0; i < 6; ++i)
            REQUIRE(models::score(nmf, u, i, 0) == Approx(models::score(gmf, u, i, 0)).epsilon(1e-15));
}

TEST_CASE("warm start rejects mismatched donors", "[models]") {
    models::Model gmf = models::build_model(small_config("gmf"), 47);
    models::Model mlp = models::build_model(small_config("mlp"), 53);
    REQUIRE_THROWS_AS(models::warm_start_nmf(mlp, gmf, 0.5), ConfigError);
    models::ModelConfig bigger = small_config("mlp");
    bigger.n_users = 7;
    REQUIRE_THROWS_AS(models::warm_start_nmf(gmf, models::build_model(bigger, 53), 0.5),
                      DimensionError);
}

TEST_CASE("all six models pass the finite-difference gradient check", "[models]") {
    Rng rng(derive_seed(61, "models-gradcheck"));
    for (const std::string& kind : kAllKinds) {
        models::Model m = models::build_model(small_config(kind), derive_seed(61, kind));
        auto params = m.trainable();
        for (int trial = 0; trial < 3; ++trial) {
            const int u = static_cast<int>(rng.below(5));
            const int i = static_cast<int>(rng.below(6));
            const int l = static_cast<int>(rng.below(3));
            const double label = trial % 2 ? 1.0 : 0.0;
            auto build = [&](nn::Tape& t) { return models::forward_loss(m, t, u, i, l, label); };
            auto r = testsup::gradcheck(params, build, 1e-7);
            INFO(kind << " trial " << trial << ": " << r.worst);
            REQUIRE(r.ok);
        }
    }
}

TEST_CASE("out-of-range ids raise lookup errors", "[models]") {
    models::Model m = models::build_model(small_config("ma-gmf"), 67);
    REQUIRE_THROWS_AS(models::score(m, 5, 0, 0), LookupError);
    REQUIRE_THROWS_AS(models::score(m, 0, 6, 0), LookupError);
    REQUIRE_THROWS_AS(models::score(m, 0, 0, 3), LookupError);
    REQUIRE_THROWS_AS(models::score(m, -1, 0, 0), LookupError);
}

TEST_CASE("model config validation", "[models]") {
    models::ModelConfig c = models::parse_kind("mlp");
    c.n_users = 1;
    c.n_items = 1;
    c.layer_plan = {10, 8}; // plan[0] != 2*embed_dim
    REQUIRE_THROWS_AS(models::build_model(c, 1), ConfigError);
    REQUIRE_THROWS_AS(models::parse_kind("cnn"), ConfigError);
}

TEST_CASE("checkpoints round-trip bitwise", "[models]") {
    testsup::TempDir tmp("ckpt");
    for (const std::string& kind : kAllKinds) {
        models::Model m = models::build_model(small_config(kind), derive_seed(71, kind));
        const std::string path = tmp.file(kind + ".json");
        models::save_checkpoint(m, path, 1234);
        models::Model back = models::load_checkpoint(path, 1234);
        REQUIRE(back.config.kind_name() == kind);
        auto a = m.trainable(), b = back.trainable();
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            REQUIRE(a[k]->name == b[k]->name);
            REQUIRE(a[k]->value == b[k]->value);
        }
    }
}

TEST_CASE("checkpoint fingerprint mismatch is fatal", "[models]") {
    testsup::TempDir tmp("ckpt-fp");
    models::Model m = models::build_model(small_config("gmf"), 73);
    const std::string path = tmp.file("m.json");
    models::save_checkpoint(m, path, 1111);
    REQUIRE_THROWS_AS(models::load_checkpoint(path, 2222), DataError);
    REQUIRE_NOTHROW(models::load_checkpoint(path)); // 0 skips the check
}
