#include <doctest.h>

#include <cmath>
#include <random>

#include "prose/error.hpp"
#include "prose/linalg.hpp"
#include "test_support.hpp"

using namespace prose;
using prose::testing::gaussian_matrix;
using prose::testing::naive_matmul;

TEST_CASE("matmul: identity, hand product and shape contract") {
    std::mt19937_64 rng(1);
    const Matrix m = gaussian_matrix(3, 3, rng);
    CHECK(matmul(Matrix::identity(3), m) == m);

    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{0, 1}, {1, 0}});
    CHECK(matmul(a, b) == Matrix::from_rows({{2, 1}, {4, 3}}));

    const Matrix c = matmul(gaussian_matrix(2, 3, rng), gaussian_matrix(3, 1, rng));
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 1);
}

TEST_CASE("matmul: mismatch names both shapes") {
    try {
        matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string what = e.what();
        CHECK(what.find("2x3") != std::string::npos);
    }
}

TEST_CASE("matmul agrees with the triple-loop oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<std::size_t> dim(1, 40);
        const Matrix a = gaussian_matrix(dim(rng), dim(rng), rng);
        const Matrix b = gaussian_matrix(a.cols(), dim(rng), rng);
        const Matrix fast = matmul(a, b);
        const Matrix slow = naive_matmul(a, b);
        // Elementwise bound scaled by Σ|a||b|, which is what a reordered sum can lose.
        for (std::size_t i = 0; i < fast.rows(); ++i)
            for (std::size_t j = 0; j < fast.cols(); ++j) {
                double mag = 0.0;
                for (std::size_t m = 0; m < a.cols(); ++m) mag += std::abs(a(i, m) * b(m, j));
                CHECK(std::abs(fast(i, j) - slow(i, j)) <= 1e-13 * mag);
            }
        const Matrix tn = matmul_tn(transpose(a), b);
        const Matrix nt = matmul_nt(a, transpose(b));
        CHECK(frobenius_norm(tn - fast) <= 1e-12 * (1.0 + frobenius_norm(fast)));
        CHECK(frobenius_norm(nt - fast) <= 1e-12 * (1.0 + frobenius_norm(fast)));
    }
}

TEST_CASE("solve_linear: examples") {
    std::mt19937_64 rng(3);
    const Matrix b = gaussian_matrix(4, 2, rng);
    CHECK(solve_linear(Matrix::identity(4), b) == b);

    const Matrix x = solve_linear(Matrix::from_rows({{2, 0}, {0, 4}}), Matrix::column({2, 8}));
    CHECK(x(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(x(1, 0) == doctest::Approx(2.0).epsilon(1e-15));

    Matrix singular = gaussian_matrix(5, 5, rng);
    for (std::size_t c = 0; c < 5; ++c) singular(2, c) = 0.0;
    CHECK_THROWS_AS(solve_linear(singular, gaussian_matrix(5, 1, rng)), SingularError);
    CHECK_THROWS_AS(solve_linear(Matrix(2, 3), Matrix(2, 1)), ShapeError);
}

TEST_CASE("solve_linear residual over 1000 random systems") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> dim(1, 24);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = dim(rng);
        Matrix a = gaussian_matrix(n, n, rng);
        for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);   // well conditioned
        const Matrix b = gaussian_matrix(n, 3, rng);
        const Matrix x = solve_linear(a, b);
        const double residual = frobenius_norm(matmul(a, x) - b) / (1.0 + frobenius_norm(b));
        worst = std::max(worst, residual);
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("qr_orthonormalize: examples") {
    const Matrix q = qr_orthonormalize(Matrix::column({3, 4}));
    CHECK(q(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(q(1, 0) == doctest::Approx(0.8).epsilon(1e-15));

    std::mt19937_64 rng(5);
    const Matrix basis = qr_orthonormalize(gaussian_matrix(6, 3, rng));
    CHECK(frobenius_norm(qr_orthonormalize(basis) - basis) <= 1e-12);

    CHECK_THROWS_AS(qr_orthonormalize(Matrix::from_rows({{1, 1}, {0, 0}, {0, 0}})), RankError);
    CHECK_THROWS_AS(qr_orthonormalize(Matrix(2, 3, 1.0)), ShapeError);
}

TEST_CASE("qr_orthonormalize: orthonormal up to 128x16 with positive R diagonal") {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> cols_dist(1, 16);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t cols = cols_dist(rng);
        std::uniform_int_distribution<std::size_t> rows_dist(cols, 128);
        const Matrix m = gaussian_matrix(rows_dist(rng), cols, rng);
        const Matrix q = qr_orthonormalize(m);
        CHECK(prose::testing::gram_distance_to_identity(q) <= 1e-12);
        // R = QᵀM is upper triangular with positive diagonal.
        const Matrix r = matmul_tn(q, m);
        for (std::size_t i = 0; i < cols; ++i) {
            CHECK(r(i, i) > 0.0);
            for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(r(i, j)) <= 1e-10 * (1.0 + std::abs(r(i, i))));
        }
    }
}

TEST_CASE("Matrix rejects inconsistent data length") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>(3)), ShapeError);
    CHECK_THROWS_AS(require_finite(Matrix(1, 1, std::nan("")), "x"), NonFiniteError);
}
