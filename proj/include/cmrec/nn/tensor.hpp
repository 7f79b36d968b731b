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
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmrec/common/errors.hpp"

namespace cmrec::nn {

/// Dense array of 64-bit floats, rank 1 or 2, row-major. Dimensions are
/// fixed at creation; values are mutable.
class Tensor {
public:
    Tensor() = default;

    static Tensor vector(std::size_t len, double fill = 0.0) {
        Tensor t;
        t.rows_ = len;
        t.cols_ = 1;
        t.rank_ = 1;
        t.values_.assign(len, fill);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        Tensor t;
        t.rows_ = rows;
        t.cols_ = cols;
        t.rank_ = 2;
        t.values_.assign(rows * cols, fill);
        return t;
    }

    /// Zero tensor with the same shape as `other`.
    static Tensor zeros_like(const Tensor& other) {
        Tensor t = other;
        t.fill(0.0);
        return t;
    }

    std::size_t size() const { return values_.size(); }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    int rank() const { return rank_; }
    bool empty() const { return values_.empty() && rank_ == 0; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    double* row(std::size_t r) { return values_.data() + r * cols_; }
    const double* row(std::size_t r) const { return values_.data() + r * cols_; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    void fill(double v) { values_.assign(values_.size(), v); }

    bool same_shape(const Tensor& o) const {
        return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_;
    }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const {
        return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_ && values_ == o.values_;
    }

private:
    std::vector<double> values_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    int rank_ = 0;
};

/// Named trainable tensor with a gradient accumulator of the same shape.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros_like(value);
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { grad.fill(0.0); }
};

} // namespace cmrec::nn
