#include "doctest.h"

#include <cmath>

#include "sima/rng.hpp"
#include "sima/tensor.hpp"

using namespace sima;

namespace {

// Independent triple-loop oracle for matmul.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0;
            for (std::size_t t = 0; t < a.cols(); ++t) s += a(i, t) * b(t, j);
            c(i, j) = s;
        }
    return c;
}

} // namespace

TEST_CASE("matmul identity and hand arithmetic") {
    const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
    const Tensor b = Tensor::from_rows({{5, 6}, {7, 8}});
    CHECK(max_abs_diff(matmul(eye, b), b) == 0.0);

    const Tensor row = Tensor::from_rows({{1, 2}});
    const Tensor col = Tensor::from_rows({{3}, {4}});
    const Tensor p = matmul(row, col);
    CHECK(p.rows() == 1);
    CHECK(p.cols() == 1);
    CHECK(p(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(7);
    const Tensor a = rng.normal_tensor({7, 5});
    const Tensor b = rng.normal_tensor({5, 3});
    CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);

    // all shapes <= 16x16x16, sampled
    for (std::size_t m : {1, 4, 16})
        for (std::size_t k : {1, 5, 16})
            for (std::size_t n : {2, 9, 16}) {
                const Tensor x = rng.normal_tensor({m, k});
                const Tensor y = rng.normal_tensor({k, n});
                CHECK(max_abs_diff(matmul(x, y), matmul_oracle(x, y)) < 1e-12);
            }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul charges m*n*k mul-adds") {
    CostReport cost;
    matmul(Tensor::zeros({3, 4}), Tensor::zeros({4, 5}), &cost);
    CHECK(cost.mul_adds == 3u * 4u * 5u);
}

TEST_CASE("transpose") {
    CHECK(max_abs_diff(transpose(Tensor::from_rows({{1, 2}, {3, 4}})),
                       Tensor::from_rows({{1, 3}, {2, 4}})) == 0.0);
    const Tensor row = Tensor::from_rows({{1, 2, 3}});
    const Tensor t = transpose(row);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 1);

    Rng rng(3);
    const Tensor a = rng.normal_tensor({5, 8});
    CHECK(max_abs_diff(transpose(transpose(a)), a) == 0.0);

    CHECK_THROWS_AS(transpose(Tensor::zeros({4})), ShapeError);
}

TEST_CASE("softmax_rows basics") {
    const Tensor u = softmax_rows(Tensor::from_rows({{0, 0}}));
    CHECK(u(0, 0) == doctest::Approx(0.5));
    CHECK(u(0, 1) == doctest::Approx(0.5));

    // overflow safety
    const Tensor big = softmax_rows(Tensor::from_rows({{1000, 1000}}));
    CHECK(big(0, 0) == doctest::Approx(0.5));
    CHECK(big.all_finite());

    // scalar arithmetic oracle for [1, 0]
    const double e = std::exp(1.0);
    const Tensor s = softmax_rows(Tensor::from_rows({{1, 0}}));
    CHECK(s(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
}

TEST_CASE("softmax_rows rows sum to one, entries in [0,1], shift invariant") {
    Rng rng(11);
    const Tensor a = rng.normal_tensor({6, 9}, 4.0);
    const Tensor s = softmax_rows(a);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < s.cols(); ++j) {
            sum += s(i, j);
            CHECK(s(i, j) >= 0.0);
            CHECK(s(i, j) <= 1.0);
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    Tensor shifted = a;
    for (double& v : shifted.data) v += 17.25;
    CHECK(max_abs_diff(softmax_rows(shifted), s) < 1e-12);
}

TEST_CASE("softmax_rows counts m*n exps") {
    CostReport cost;
    softmax_rows(Tensor::zeros({4, 6}), &cost);
    CHECK(cost.exp_ops == 24u);
}

TEST_CASE("gelu") {
    CHECK(gelu_scalar(0.0) == 0.0);
    CHECK(gelu_scalar(10.0) > 9.999);
    CHECK(gelu_scalar(10.0) <= 10.0);
    // erf oracle at 1: 0.5 * (1 + erf(1/sqrt(2)))
    const double exact = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(std::abs(gelu_scalar(1.0) - exact) < 1e-3);

    CostReport cost;
    gelu(Tensor::zeros({4, 5}), &cost);
    CHECK(cost.exp_ops == 20u);
}

TEST_CASE("relu") {
    const Tensor r = relu(Tensor::from_rows({{-3, 3}}));
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == 3.0);
    Rng rng(5);
    const Tensor a = rng.normal_tensor({4, 5});
    CHECK(relu(a).shape == a.shape);
}

TEST_CASE("layer_norm") {
    const Tensor gain = Tensor::full({3}, 1.0);
    const Tensor bias = Tensor::zeros({3});

    // constant row -> zeros (eps absorbs the zero variance)
    const Tensor c = layer_norm(Tensor::from_rows({{4, 4, 4}}), gain, bias);
    CHECK(max_abs(c) < 1e-9);

    // already standardized row
    const Tensor g2 = Tensor::full({2}, 1.0);
    const Tensor b2 = Tensor::zeros({2});
    const Tensor s = layer_norm(Tensor::from_rows({{1, -1}}), g2, b2);
    CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));

    // random rows: pre-affine mean ~0, variance ~1
    Rng rng(13);
    const std::size_t d = 32;
    const Tensor x = rng.normal_tensor({5, d}, 2.5);
    const Tensor gd = Tensor::full({d}, 1.0);
    const Tensor bd = Tensor::zeros({d});
    const Tensor y = layer_norm(x, gd, bd);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < d; ++j) mean += y(i, j);
        mean /= double(d);
        for (std::size_t j = 0; j < d; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
        var /= double(d);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("rng determinism is bitwise") {
    Rng a(123), b(123);
    const Tensor ta = a.normal_tensor({8, 8});
    const Tensor tb = b.normal_tensor({8, 8});
    CHECK(ta.data == tb.data);

    Rng c(124);
    CHECK(c.normal_tensor({8, 8}).data != ta.data);
}
