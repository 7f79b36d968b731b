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
#include "cmrec/models/model.hpp"

namespace cmrec::models {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json tensor_to_json(const nn::Tensor& t) {
    nlohmann::json j;
    j["rank"] = t.rank();
    if (t.rank() == 2) {
        j["rows"] = t.rows();
        j["cols"] = t.cols();
    } else {
        j["len"] = t.size();
    }
    j["data"] = std::vector<double>(t.values().begin(), t.values().end());
    return j;
}

inline nn::Tensor tensor_from_json(const nlohmann::json& j) {
    const auto data = j.at("data").get<std::vector<double>>();
    nn::Tensor t;
    if (j.at("rank").get<int>() == 2) {
        t = nn::Tensor::matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    } else {
        t = nn::Tensor::vector(j.at("len").get<std::size_t>());
    }
    if (data.size() != t.size()) throw DataError("checkpoint tensor size mismatch");
    std::copy(data.begin(), data.end(), t.values().begin());
    return t;
}

} // namespace detail

/// Serializes config + every trainable tensor. `dataset_fingerprint` ties the
/// checkpoint to the ID registry it was trained against.
inline nlohmann::json checkpoint_to_json(Model& m, std::uint64_t dataset_fingerprint) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["kind"] = m.config.kind_name();
    j["embed_dim"] = m.config.embed_dim;
    j["layer_plan"] = m.config.layer_plan;
    j["n_users"] = m.config.n_users;
    j["n_items"] = m.config.n_items;
    j["n_markets"] = m.config.n_markets;
    j["dataset_fingerprint"] = dataset_fingerprint;
    nlohmann::json params = nlohmann::json::object();
    for (nn::Param* p : m.trainable()) params[p->name] = detail::tensor_to_json(p->value);
    j["params"] = std::move(params);
    return j;
}

inline Model checkpoint_from_json(const nlohmann::json& j,
                                  std::uint64_t expect_fingerprint = 0) {
    if (j.at("format_version").get<int>() != kCheckpointVersion)
        throw DataError("unsupported checkpoint format version");
    if (expect_fingerprint != 0) {
        const auto fp = j.at("dataset_fingerprint").get<std::uint64_t>();
        if (fp != expect_fingerprint)
            throw DataError("checkpoint was built against a different dataset registry");
    }
    ModelConfig config = parse_kind(j.at("kind").get<std::string>());
    config.embed_dim = j.at("embed_dim").get<int>();
    config.layer_plan = j.at("layer_plan").get<std::vector<int>>();
    config.n_users = j.at("n_users").get<int>();
    config.n_items = j.at("n_items").get<int>();
    config.n_markets = j.at("n_markets").get<int>();
    Model m = build_model(config, /*seed=*/0);
    const auto& params = j.at("params");
    for (nn::Param* p : m.trainable()) {
        if (!params.contains(p->name)) throw DataError("checkpoint missing tensor: " + p->name);
        nn::Tensor t = detail::tensor_from_json(params.at(p->name));
        if (!t.same_shape(p->value)) throw DataError("checkpoint shape mismatch: " + p->name);
        p->value = std::move(t);
    }
    return m;
}

inline void save_checkpoint(Model& m, const std::string& path, std::uint64_t dataset_fingerprint) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out << checkpoint_to_json(m, dataset_fingerprint).dump(1, '\t') << '\n';
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

inline Model load_checkpoint(const std::string& path, std::uint64_t expect_fingerprint = 0) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint " + path + ": " + e.what());
    }
    return checkpoint_from_json(j, expect_fingerprint);
}

} // namespace cmrec::models
