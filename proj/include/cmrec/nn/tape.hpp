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
#include <span>
#include <vector>

#include "cmrec/common/errors.hpp"
#include "cmrec/nn/tensor.hpp"

namespace cmrec::nn {

/// Sigmoid outputs are pinned inside (0,1) so downstream logs stay finite.
inline constexpr double kSigmoidClamp = 1e-15;
/// Probability clamp inside the cross-entropy loss.
inline constexpr double kBceClamp = 1e-12;

inline double stable_sigmoid(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    if (s < kSigmoidClamp) s = kSigmoidClamp;
    if (s > 1.0 - kSigmoidClamp) s = 1.0 - kSigmoidClamp;
    return s;
}

/// Record of primitive operations applied in one forward pass, with the
/// operand values needed to replay it backward. Node buffers are pooled and
/// reused across clear() calls; a Tape must not be shared between threads.
class Tape {
public:
    using NodeId = std::int32_t;

    void clear() {
        live_ = 0;
        ops_.clear();
    }

    std::size_t op_count() const { return ops_.size(); }
    std::size_t node_count() const { return live_; }

    std::span<const double> values_of(NodeId id) const { return nodes_[check(id)].value; }
    double value_of(NodeId id) const {
        const auto& v = nodes_[check(id)].value;
        if (v.size() != 1) throw DimensionError("value_of: node is not scalar");
        return v[0];
    }

    // ---- leaves ------------------------------------------------------

    /// Copies row `r` of an embedding table onto the tape; backward adds the
    /// node gradient into that row of `table.grad`.
    NodeId embedding_row(Param& table, std::size_t r) {
        if (table.value.rank() != 2 || r >= table.value.rows())
            throw LookupError("embedding_row: row " + std::to_string(r) + " out of range for " +
                              table.name);
        const std::size_t d = table.value.cols();
        NodeId out = new_node(d);
        const double* src = table.value.row(r);
        double* dst = nodes_[out].value.data();
        for (std::size_t k = 0; k < d; ++k) dst[k] = src[k];
        ops_.push_back({OpKind::EmbeddingRow, out, -1, -1, &table, nullptr, r, 0.0});
        return out;
    }

    /// Copies a rank-1 parameter onto the tape.
    NodeId param_vector(Param& p) {
        if (p.value.rank() != 1) throw DimensionError("param_vector: " + p.name + " is not rank 1");
        NodeId out = new_node(p.value.size());
        const double* src = p.value.data();
        double* dst = nodes_[out].value.data();
        for (std::size_t k = 0; k < p.value.size(); ++k) dst[k] = src[k];
        ops_.push_back({OpKind::ParamVector, out, -1, -1, nullptr, &p, 0, 0.0});
        return out;
    }

    /// Constant input vector (no gradient flows into it).
    NodeId constant(std::span<const double> v) {
        NodeId out = new_node(v.size());
        double* dst = nodes_[out].value.data();
        for (std::size_t k = 0; k < v.size(); ++k) dst[k] = v[k];
        return out;
    }

    // ---- ops ---------------------------------------------------------

    NodeId mul(NodeId a, NodeId b) {
        const std::size_t na = nodes_[check(a)].value.size();
        const std::size_t nb = nodes_[check(b)].value.size();
        if (na != nb)
            throw DimensionError("elementwise mul: length mismatch " + std::to_string(na) +
                                 " vs " + std::to_string(nb));
        NodeId out = new_node(na); // may grow nodes_; re-index operands after
        const double* va = nodes_[a].value.data();
        const double* vb = nodes_[b].value.data();
        double* o = nodes_[out].value.data();
        for (std::size_t k = 0; k < na; ++k) o[k] = va[k] * vb[k];
        ops_.push_back({OpKind::Mul, out, a, b, nullptr, nullptr, 0, 0.0});
        return out;
    }

    /// Fused three-way elementwise product; one node instead of two.
    NodeId mul3(NodeId a, NodeId b, NodeId c) {
        const std::size_t na = nodes_[check(a)].value.size();
        const std::size_t nb = nodes_[check(b)].value.size();
        const std::size_t nc = nodes_[check(c)].value.size();
        if (na != nb || na != nc)
            throw DimensionError("elementwise mul3: length mismatch " + std::to_string(na) +
                                 " vs " + std::to_string(nb) + " vs " + std::to_string(nc));
        NodeId out = new_node(na); // may grow nodes_; re-index operands after
        const double* va = nodes_[a].value.data();
        const double* vb = nodes_[b].value.data();
        const double* vc = nodes_[c].value.data();
        double* o = nodes_[out].value.data();
        for (std::size_t k = 0; k < na; ++k) o[k] = va[k] * vb[k] * vc[k];
        ops_.push_back({OpKind::Mul3, out, a, b, c});
        return out;
    }

    NodeId concat(NodeId a, NodeId b) {
        const std::size_t na = nodes_[check(a)].value.size();
        const std::size_t nb = nodes_[check(b)].value.size();
        NodeId out = new_node(na + nb);
        const double* va = nodes_[a].value.data();
        const double* vb = nodes_[b].value.data();
        double* o = nodes_[out].value.data();
        for (std::size_t k = 0; k < na; ++k) o[k] = va[k];
        for (std::size_t k = 0; k < nb; ++k) o[na + k] = vb[k];
        ops_.push_back({OpKind::Concat, out, a, b, nullptr, nullptr, 0, 0.0});
        return out;
    }

    /// y = W x + b with W stored (out x in).
    NodeId affine(Param& w, Param& b, NodeId x) {
        const std::size_t nx = nodes_[check(x)].value.size();
        if (w.value.rank() != 2 || w.value.cols() != nx)
            throw DimensionError("affine: " + w.name + " has " + std::to_string(w.value.cols()) +
                                 " cols, input has length " + std::to_string(nx));
        if (b.value.size() != w.value.rows())
            throw DimensionError("affine: bias " + b.name + " length " +
                                 std::to_string(b.value.size()) + " != " +
                                 std::to_string(w.value.rows()) + " rows of " + w.name);
        const std::size_t nr = w.value.rows(), nc = w.value.cols();
        NodeId out = new_node(nr);
        const double* xs = nodes_[x].value.data();
        double* o = nodes_[out].value.data();
        for (std::size_t r = 0; r < nr; ++r) {
            const double* wr = w.value.row(r);
            double acc = b.value[r];
            for (std::size_t c = 0; c < nc; ++c) acc += wr[c] * xs[c];
            o[r] = acc;
        }
        ops_.push_back({OpKind::Affine, out, x, -1, &w, &b, 0, 0.0});
        return out;
    }

    NodeId relu(NodeId x) {
        const std::size_t nx = nodes_[check(x)].value.size();
        NodeId out = new_node(nx);
        const double* vx = nodes_[x].value.data();
        double* o = nodes_[out].value.data();
        for (std::size_t k = 0; k < nx; ++k) o[k] = vx[k] > 0.0 ? vx[k] : 0.0;
        ops_.push_back({OpKind::Relu, out, x, -1, nullptr, nullptr, 0, 0.0});
        return out;
    }

    NodeId dot(NodeId a, NodeId b) {
        const std::size_t na = nodes_[check(a)].value.size();
        const std::size_t nb = nodes_[check(b)].value.size();
        if (na != nb)
            throw DimensionError("dot: length mismatch " + std::to_string(na) + " vs " +
                                 std::to_string(nb));
        NodeId out = new_node(1);
        const double* va = nodes_[a].value.data();
        const double* vb = nodes_[b].value.data();
        double acc = 0.0;
        for (std::size_t k = 0; k < na; ++k) acc += va[k] * vb[k];
        nodes_[out].value[0] = acc;
        ops_.push_back({OpKind::Dot, out, a, b, nullptr, nullptr, 0, 0.0});
        return out;
    }

    NodeId sigmoid(NodeId x) {
        NodeId out = new_node(1);
        nodes_[out].value[0] = stable_sigmoid(value_of(x));
        ops_.push_back({OpKind::Sigmoid, out, x, -1, nullptr, nullptr, 0, 0.0});
        return out;
    }

    /// Binary cross-entropy against label y in {0,1}.
    NodeId bce(NodeId y_hat, double y) {
        double p = value_of(y_hat);
        if (p < kBceClamp) p = kBceClamp;
        if (p > 1.0 - kBceClamp) p = 1.0 - kBceClamp;
        NodeId out = new_node(1);
        nodes_[out].value[0] = -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
        ops_.push_back({OpKind::Bce, out, y_hat, -1, nullptr, nullptr, 0, y});
        return out;
    }

    // ---- reverse sweep -----------------------------------------------

    /// Accumulates d(seed * loss)/d(param) into each touched Param's grad.
    /// Node gradients are scratch; parameter values are never modified.
    void backward(NodeId loss, double seed = 1.0) {
        if (loss < 0 || static_cast<std::size_t>(loss) >= live_)
            throw Error("backward: loss node is not on the tape");
        for (std::size_t i = 0; i < live_; ++i) {
            auto& g = nodes_[i].grad;
            g.assign(nodes_[i].value.size(), 0.0);
        }
        nodes_[loss].grad[0] = seed;

        for (std::size_t oi = ops_.size(); oi-- > 0;) {
            const OpRec& op = ops_[oi];
            const auto& g = nodes_[op.out].grad;
            switch (op.kind) {
            case OpKind::EmbeddingRow: {
                double* dst = op.w->grad.row(op.row);
                for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
                break;
            }
            case OpKind::ParamVector: {
                double* dst = op.pb->grad.data();
                for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
                break;
            }
            case OpKind::Mul: {
                const auto& va = nodes_[op.a].value;
                const auto& vb = nodes_[op.b].value;
                auto& ga = nodes_[op.a].grad;
                auto& gb = nodes_[op.b].grad;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    ga[k] += g[k] * vb[k];
                    gb[k] += g[k] * va[k];
                }
                break;
            }
            case OpKind::Mul3: {
                const auto& va = nodes_[op.a].value;
                const auto& vb = nodes_[op.b].value;
                const auto& vc = nodes_[op.c].value;
                auto& ga = nodes_[op.a].grad;
                auto& gb = nodes_[op.b].grad;
                auto& gc = nodes_[op.c].grad;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    ga[k] += g[k] * vb[k] * vc[k];
                    gb[k] += g[k] * va[k] * vc[k];
                    gc[k] += g[k] * va[k] * vb[k];
                }
                break;
            }
            case OpKind::Concat: {
                auto& ga = nodes_[op.a].grad;
                auto& gb = nodes_[op.b].grad;
                for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k];
                for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g[ga.size() + k];
                break;
            }
            case OpKind::Affine: {
                const auto& vx = nodes_[op.a].value;
                auto& gx = nodes_[op.a].grad;
                const std::size_t nr = op.w->value.rows(), nc = op.w->value.cols();
                for (std::size_t r = 0; r < nr; ++r) {
                    const double gr = g[r];
                    if (gr == 0.0) continue;
                    const double* wr = op.w->value.row(r);
                    double* wgr = op.w->grad.row(r);
                    for (std::size_t c = 0; c < nc; ++c) {
                        gx[c] += wr[c] * gr;
                        wgr[c] += gr * vx[c];
                    }
                    op.pb->grad[r] += gr;
                }
                break;
            }
            case OpKind::Relu: {
                const auto& vx = nodes_[op.a].value;
                auto& gx = nodes_[op.a].grad;
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (vx[k] > 0.0) gx[k] += g[k];
                break;
            }
            case OpKind::Dot: {
                const double gs = g[0];
                const auto& va = nodes_[op.a].value;
                const auto& vb = nodes_[op.b].value;
                auto& ga = nodes_[op.a].grad;
                auto& gb = nodes_[op.b].grad;
                for (std::size_t k = 0; k < va.size(); ++k) {
                    ga[k] += gs * vb[k];
                    gb[k] += gs * va[k];
                }
                break;
            }
            case OpKind::Sigmoid: {
                const double s = nodes_[op.out].value[0];
                nodes_[op.a].grad[0] += g[0] * s * (1.0 - s);
                break;
            }
            case OpKind::Bce: {
                double p = nodes_[op.a].value[0];
                // Inside the clamp region the loss is constant in y_hat.
                if (p > kBceClamp && p < 1.0 - kBceClamp)
                    nodes_[op.a].grad[0] += g[0] * (p - op.label) / (p * (1.0 - p));
                break;
            }
            }
        }
    }

    bool values_finite() const {
        for (std::size_t i = 0; i < live_; ++i)
            for (double v : nodes_[i].value)
                if (!std::isfinite(v)) return false;
        return true;
    }

private:
    enum class OpKind : std::uint8_t {
        EmbeddingRow,
        ParamVector,
        Mul,
        Mul3,
        Concat,
        Affine,
        Relu,
        Dot,
        Sigmoid,
        Bce,
    };

    struct OpRec {
        OpKind kind;
        NodeId out;
        NodeId a;
        NodeId b;
        NodeId c;        // Mul3 only
        Param* w;       // EmbeddingRow table / Affine weight
        Param* pb;      // ParamVector target / Affine bias
        std::size_t row; // EmbeddingRow only
        double label;    // Bce only

        OpRec(OpKind k, NodeId o, NodeId a_, NodeId b_, Param* w_, Param* pb_, std::size_t r,
              double l)
            : kind(k), out(o), a(a_), b(b_), c(-1), w(w_), pb(pb_), row(r), label(l) {}
        OpRec(OpKind k, NodeId o, NodeId a_, NodeId b_, NodeId c_)
            : kind(k), out(o), a(a_), b(b_), c(c_), w(nullptr), pb(nullptr), row(0), label(0.0) {}
    };

    struct Node {
        std::vector<double> value;
        std::vector<double> grad;
    };

    NodeId check(NodeId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= live_)
            throw Error("tape: node id out of range");
        return id;
    }

    NodeId new_node(std::size_t len) {
        if (live_ == nodes_.size()) nodes_.emplace_back();
        Node& n = nodes_[live_];
        n.value.assign(len, 0.0);
        return static_cast<NodeId>(live_++);
    }

    std::vector<Node> nodes_;
    std::size_t live_ = 0;
    std::vector<OpRec> ops_;
};

} // namespace cmrec::nn
