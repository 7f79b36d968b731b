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

#include "cmrec/common/rng.hpp"
#include "cmrec/nn/adam.hpp"
#include "cmrec/nn/init.hpp"
#include "cmrec/nn/tape.hpp"
#include "cmrec/nn/tensor.hpp"

#include "test_support.hpp"

using Catch::Approx;
using namespace cmrec;

namespace {

nn::Param vec_param(const char* name, std::vector<double> v) {
    nn::Tensor t = nn::Tensor::vector(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) t[k] = v[k];
    return nn::Param(name, std::move(t));
}

nn::Param mat_param(const char* name, std::size_t rows, std::size_t cols,
                    std::vector<double> v) {
    nn::Tensor t = nn::Tensor::matrix(rows, cols);
    for (std::size_t k = 0; k < v.size(); ++k) t[k] = v[k];
    return nn::Param(name, std::move(t));
}

std::vector<double> values(const nn::Tape& tape, nn::Tape::NodeId id) {
    auto s = tape.values_of(id);
    return {s.begin(), s.end()};
}

} // namespace

TEST_CASE("affine matches hand-computed products", "[nn]") {
    nn::Tape tape;
    nn::Param w = mat_param("w", 2, 2, {1, 0, 0, 1});
    nn::Param b = vec_param("b", {0, 0});
    const std::vector<double> x = {3, 4};

    auto y = values(tape, tape.affine(w, b, tape.constant(x)));
    REQUIRE(y == std::vector<double>{3, 4});

    nn::Param b1 = vec_param("b1", {1, 1});
    tape.clear();
    y = values(tape, tape.affine(w, b1, tape.constant(x)));
    REQUIRE(y == std::vector<double>{4, 5});

    nn::Param w2 = mat_param("w2", 2, 2, {1, 2, 3, 4});
    const std::vector<double> ones = {1, 1};
    tape.clear();
    y = values(tape, tape.affine(w2, b, tape.constant(ones)));
    REQUIRE(y == std::vector<double>{3, 7});
}

TEST_CASE("affine rejects mismatched dimensions", "[nn]") {
    nn::Tape tape;
    nn::Param w = mat_param("w", 2, 2, {1, 0, 0, 1});
    nn::Param b = vec_param("b", {0, 0});
    nn::Param b3 = vec_param("b3", {0, 0, 0});
    const std::vector<double> x3 = {1, 2, 3};
    REQUIRE_THROWS_AS(tape.affine(w, b, tape.constant(x3)), DimensionError);
    const std::vector<double> x2 = {1, 2};
    REQUIRE_THROWS_AS(tape.affine(w, b3, tape.constant(x2)), DimensionError);
}

TEST_CASE("elementwise mul matches hand products", "[nn]") {
    nn::Tape tape;
    const std::vector<double> a1 = {1, 1, 1}, b1 = {5, 6, 7};
    REQUIRE(values(tape, tape.mul(tape.constant(a1), tape.constant(b1))) ==
            std::vector<double>{5, 6, 7});
    tape.clear();
    const std::vector<double> a2 = {0, 0, 0};
    REQUIRE(values(tape, tape.mul(tape.constant(a2), tape.constant(b1))) ==
            std::vector<double>{0, 0, 0});
    tape.clear();
    const std::vector<double> a3 = {2, 3}, b3 = {4, 5};
    REQUIRE(values(tape, tape.mul(tape.constant(a3), tape.constant(b3))) ==
            std::vector<double>{8, 15});
    tape.clear();
    REQUIRE_THROWS_AS(tape.mul(tape.constant(a3), tape.constant(b1)), DimensionError);
}

TEST_CASE("fused mul3 matches hand products and chained muls", "[nn]") {
    nn::Tape tape;
    const std::vector<double> a = {2, -1, 0.5}, b = {3, 4, -2}, c = {-1, 0, 8};
    REQUIRE(values(tape, tape.mul3(tape.constant(a), tape.constant(b), tape.constant(c))) ==
            std::vector<double>{-6, 0, -8});
    tape.clear();
    // identity third factor reduces to the two-way product bitwise
    const std::vector<double> ones = {1, 1, 1};
    REQUIRE(values(tape, tape.mul3(tape.constant(a), tape.constant(b), tape.constant(ones))) ==
            values(tape, tape.mul(tape.constant(a), tape.constant(b))));
    tape.clear();
    const std::vector<double> short2 = {1.0, 2.0};
    REQUIRE_THROWS_AS(tape.mul3(tape.constant(a), tape.constant(b), tape.constant(short2)),
                      DimensionError);
}

TEST_CASE("mul3 gradients match finite differences", "[nn]") {
    for (int trial = 0; trial < 5; ++trial) {
        nn::Param u = nn::Param("u", nn::init_vector(4, nn::InitScheme::Gaussian,
                                                     derive_seed(93, "u", trial)));
        nn::Param v = nn::Param("v", nn::init_vector(4, nn::InitScheme::Gaussian,
                                                     derive_seed(93, "v", trial)));
        nn::Param g = nn::Param("g", nn::init_vector(4, nn::InitScheme::Gaussian,
                                                     derive_seed(93, "g", trial)));
        nn::Param h = nn::Param("h", nn::init_vector(4, nn::InitScheme::Gaussian,
                                                     derive_seed(93, "h", trial)));
        const double label = trial % 2 ? 1.0 : 0.0;
        auto build = [&](nn::Tape& t) {
            auto prod = t.mul3(t.param_vector(u), t.param_vector(v), t.param_vector(g));
            return t.bce(t.sigmoid(t.dot(t.param_vector(h), prod)), label);
        };
        auto r = testsup::gradcheck({&u, &v, &g, &h}, build, 1e-3);
        INFO(r.worst);
        REQUIRE(r.ok);
    }
}

TEST_CASE("relu, sigmoid closed forms", "[nn]") {
    nn::Tape tape;
    const std::vector<double> x = {-2, 3};
    REQUIRE(values(tape, tape.relu(tape.constant(x))) == std::vector<double>{0, 3});

    const std::vector<double> zero = {0.0};
    tape.clear();
    REQUIRE(tape.value_of(tape.sigmoid(tape.constant(zero))) == 0.5);

    const std::vector<double> eight = {8.0};
    tape.clear();
    REQUIRE(tape.value_of(tape.sigmoid(tape.constant(eight))) ==
            Approx(0.999665).margin(1e-6));
}

TEST_CASE("sigmoid output strictly inside (0,1) after clamping", "[nn]") {
    nn::Tape tape;
    for (double x : {-1000.0, -40.0, 0.0, 40.0, 1000.0}) {
        tape.clear();
        const std::vector<double> v = {x};
        const double s = tape.value_of(tape.sigmoid(tape.constant(v)));
        REQUIRE(s > 0.0);
        REQUIRE(s < 1.0);
    }
}

TEST_CASE("bce closed forms", "[nn]") {
    nn::Tape tape;
    auto bce_of = [&](double p, double y) {
        tape.clear();
        const std::vector<double> v = {p};
        return tape.value_of(tape.bce(tape.constant(v), y));
    };
    REQUIRE(bce_of(0.5, 1.0) == Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(bce_of(0.5, 0.0) == Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(bce_of(0.9, 1.0) == Approx(0.105361).margin(1e-6));
    REQUIRE(bce_of(0.0, 1.0) > 0.0); // clamped, stays finite
    REQUIRE(std::isfinite(bce_of(1.0, 0.0)));
}

TEST_CASE("backward closed-form gradients", "[nn]") {
    // d sigmoid(w x)/dw at w=0, x=1 is sigma'(0) = 0.25
    nn::Tape tape;
    nn::Param w = vec_param("w", {0.0});
    const std::vector<double> x = {1.0};
    tape.backward(tape.sigmoid(tape.dot(tape.param_vector(w), tape.constant(x))));
    REQUIRE(w.grad[0] == Approx(0.25).epsilon(1e-12));

    // d bce(sigmoid(z), 1)/dz at z=0 is sigma(0) - 1 = -0.5
    nn::Param z = vec_param("z", {0.0});
    tape.clear();
    const std::vector<double> one = {1.0};
    tape.backward(tape.bce(
        tape.sigmoid(tape.dot(tape.param_vector(z), tape.constant(one))), 1.0));
    REQUIRE(z.grad[0] == Approx(-0.5).epsilon(1e-12));

    // a parameter outside the graph keeps a zero gradient
    nn::Param unused = vec_param("unused", {3.0});
    REQUIRE(unused.grad[0] == 0.0);
}

TEST_CASE("tape gradients accumulate for reused parameters", "[nn]") {
    // loss = p . p  ->  d/dp = 2p, both uses contribute
    nn::Tape tape;
    nn::Param p = vec_param("p", {1.5});
    auto pv = tape.param_vector(p);
    auto pv2 = tape.param_vector(p);
    tape.backward(tape.dot(pv, pv2));
    REQUIRE(p.grad[0] == Approx(3.0).epsilon(1e-12));
}

TEST_CASE("backward rejects an off-tape loss node", "[nn]") {
    nn::Tape tape;
    REQUIRE_THROWS_AS(tape.backward(5), Error);
}

TEST_CASE("gradcheck on composite graphs", "[nn]") {
    Rng rng(derive_seed(77, "nn-gradcheck"));
    for (int trial = 0; trial < 5; ++trial) {
        nn::Param w = nn::Param("w", nn::init_matrix(3, 4, nn::InitScheme::GlorotUniform,
                                                     derive_seed(91, "w", trial)));
        nn::Param b = nn::Param("b", nn::init_vector(3, nn::InitScheme::Gaussian,
                                                     derive_seed(91, "b", trial)));
        nn::Param h = nn::Param("h", nn::init_vector(3, nn::InitScheme::Gaussian,
                                                     derive_seed(91, "h", trial)));
        nn::Param e = nn::Param("e", nn::init_matrix(2, 2, nn::InitScheme::Gaussian,
                                                     derive_seed(91, "e", trial)));
        std::vector<double> x(2);
        for (auto& v : x) v = rng.gaussian();
        const double label = trial % 2 ? 1.0 : 0.0;

        auto build = [&](nn::Tape& t) {
            auto row = t.embedding_row(e, 0);
            auto in = t.concat(t.mul(row, t.embedding_row(e, 1)), t.constant(x));
            auto hid = t.relu(t.affine(w, b, in));
            return t.bce(t.sigmoid(t.dot(t.param_vector(h), hid)), label);
        };
        auto r = testsup::gradcheck({&w, &b, &h, &e}, build, 1e-3);
        INFO(r.worst);
        REQUIRE(r.ok);
    }
}

TEST_CASE("adam first step collapses to -lr sign(g)", "[nn]") {
    nn::Param p = vec_param("p", {0.0});
    nn::AdamState adam({&p});
    p.grad[0] = 2.0;
    adam.step({&p}, 0.01);
    // independent arithmetic: mhat = g, vhat = g^2, step = lr*g/(|g| + eps)
    const double expect = -0.01 * 2.0 / (2.0 + 1e-8);
    REQUIRE(p.value[0] == Approx(expect).epsilon(1e-12));
    REQUIRE(p.value[0] == Approx(-0.01).margin(1e-6));
    REQUIRE(adam.step_count() == 1);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged", "[nn]") {
    nn::Param p = vec_param("p", {1.25});
    nn::AdamState adam({&p});
    p.grad[0] = 0.0;
    adam.step({&p}, 0.1);
    REQUIRE(p.value[0] == 1.25);
}

TEST_CASE("adam bias-corrected steps shrink under constant gradient", "[nn]") {
    nn::Param p = vec_param("p", {0.0});
    nn::AdamState adam({&p});
    p.grad[0] = 0.7;
    adam.step({&p}, 0.01);
    const double d1 = std::abs(p.value[0]);
    const double before = p.value[0];
    p.grad[0] = 0.7;
    adam.step({&p}, 0.01);
    const double d2 = std::abs(p.value[0] - before);
    REQUIRE(d2 <= d1 + 1e-9);
}

TEST_CASE("adam rejects mismatched parameter lists", "[nn]") {
    nn::Param p = vec_param("p", {0.0});
    nn::Param q = vec_param("q", {0.0});
    nn::AdamState adam({&p});
    REQUIRE_THROWS_AS(adam.step({&p, &q}, 0.01), DimensionError);
}

TEST_CASE("l2 gradient contribution", "[nn]") {
    nn::Param p = vec_param("p", {1000.0});
    p.zero_grad();
    nn::add_l2_grad({&p}, 0.0);
    REQUIRE(p.grad[0] == 0.0);
    nn::add_l2_grad({&p}, 1e-7);
    REQUIRE(p.grad[0] == Approx(1e-4).epsilon(1e-12));

    // finite difference of (lambda/2) theta^2 vs lambda*theta
    const double lambda = 0.3, theta = 1.7, h = 1e-6;
    const double fd =
        (0.5 * lambda * (theta + h) * (theta + h) - 0.5 * lambda * (theta - h) * (theta - h)) /
        (2 * h);
    REQUIRE(fd == Approx(lambda * theta).epsilon(1e-6));
}

TEST_CASE("init determinism and schemes", "[nn]") {
    auto a = nn::init_matrix(7, 5, nn::InitScheme::Gaussian, 42);
    auto b = nn::init_matrix(7, 5, nn::InitScheme::Gaussian, 42);
    REQUIRE(a == b);
    auto c = nn::init_matrix(7, 5, nn::InitScheme::Gaussian, 43);
    REQUIRE(!(a == c));

    auto z = nn::init_vector(9, nn::InitScheme::Zeros, 42);
    for (std::size_t k = 0; k < z.size(); ++k) REQUIRE(z[k] == 0.0);

    // Glorot bound: |w| <= sqrt(6/(fan_in+fan_out))
    auto g = nn::init_matrix(6, 10, nn::InitScheme::GlorotUniform, 42);
    const double limit = std::sqrt(6.0 / 16.0);
    for (std::size_t k = 0; k < g.size(); ++k) REQUIRE(std::abs(g[k]) <= limit);
}

TEST_CASE("gaussian init sample mean within statistical bounds", "[nn]") {
    const std::size_t n = 100000;
    auto t = nn::init_matrix(n / 100, 100, nn::InitScheme::Gaussian, 4242);
    double mean = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) mean += t[k];
    mean /= static_cast<double>(t.size());
    REQUIRE(std::abs(mean) <= 3.0 * 0.01 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("derive_seed separates tags and is stable", "[nn]") {
    REQUIRE(derive_seed(7, "alpha") == derive_seed(7, "alpha"));
    REQUIRE(derive_seed(7, "alpha") != derive_seed(7, "beta"));
    REQUIRE(derive_seed(7, "alpha") != derive_seed(8, "alpha"));
    REQUIRE(derive_seed(7, "a", 1) != derive_seed(7, "a", 2));
    // concatenation cannot collide across the separator
    REQUIRE(derive_seed(7, "ab", 0) != derive_seed(7, "a", 0));
}

TEST_CASE("rng uniform range and shuffle permutation", "[nn]") {
    Rng rng(123);
    for (int k = 0; k < 1000; ++k) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
    auto sorted = v;
    rng.shuffle(v);
    auto back = v;
    std::sort(back.begin(), back.end());
    REQUIRE(back == sorted);

    Rng r1(55), r2(55);
    std::vector<int> a = {1, 2, 3, 4, 5}, b = a;
    r1.shuffle(a);
    r2.shuffle(b);
    REQUIRE(a == b);
}

TEST_CASE("tape clear resets op and node counts", "[nn]") {
    nn::Tape tape;
    const std::vector<double> x = {1.0, 2.0};
    tape.relu(tape.constant(x));
    REQUIRE(tape.node_count() > 0);
    tape.clear();
    REQUIRE(tape.op_count() == 0);
    REQUIRE(tape.node_count() == 0);
}
