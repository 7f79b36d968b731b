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

#include <cmath>
#include <cstdint>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/nn/tensor.hpp"

namespace cmrec::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second-moment accumulators mirroring one fixed parameter list.
/// step() reads each Param's grad and applies the bias-corrected update.
class AdamState {
public:
    AdamState() = default;

    explicit AdamState(const std::vector<Param*>& params, AdamConfig cfg = {}) : cfg_(cfg) {
        slots_.reserve(params.size());
        for (const Param* p : params)
            slots_.push_back({Tensor::zeros_like(p->value), Tensor::zeros_like(p->value)});
    }

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    void step(const std::vector<Param*>& params, double lr) {
        if (params.size() != slots_.size())
            throw DimensionError("adam: parameter list does not match state");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param& p = *params[i];
            Slot& s = slots_[i];
            if (!s.m.same_shape(p.value))
                throw DimensionError("adam: state shape does not match parameter " + p.name);
            double* theta = p.value.data();
            const double* g = p.grad.data();
            double* m = s.m.data();
            double* v = s.v.data();
            const std::size_t n = p.size();
            for (std::size_t k = 0; k < n; ++k) {
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
                const double mhat = m[k] / bc1;
                const double vhat = v[k] / bc2;
                theta[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

private:
    struct Slot {
        Tensor m;
        Tensor v;
    };

    std::vector<Slot> slots_;
    std::int64_t t_ = 0;
    AdamConfig cfg_;
};

/// Adds the L2 penalty gradient (lambda * theta) for each parameter.
/// Applied with the batch loss gradient, before the optimizer step.
inline void add_l2_grad(const std::vector<Param*>& params, double lambda) {
    if (lambda < 0.0) throw ConfigError("l2: lambda must be >= 0");
    if (lambda == 0.0) return;
    for (Param* p : params) {
        double* g = p->grad.data();
        const double* theta = p->value.data();
        for (std::size_t k = 0; k < p->size(); ++k) g[k] += lambda * theta[k];
    }
}

} // namespace cmrec::nn
