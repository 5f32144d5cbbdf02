#pragma once

// Dense row-major double-precision matrices and the handful of factorizations
// the manifold and network code needs. Products are delegated to Eigen; the
// LU solve and QR orthonormalization are written out so their pivot and sign
// conventions are fixed.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace prose {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::initializer_list<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

    std::string shape_string() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

Matrix transpose(const Matrix& a);

// a · b
Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Frobenius inner product Σ a_ij b_ij.
double frobenius_dot(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

bool all_finite(std::span<const double> values) noexcept;
// Throws NonFiniteError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

// Solves a·X = b with partial-pivot LU. Pivots below 1e-12 in magnitude raise
// SingularError carrying the elimination step.
Matrix solve_linear(const Matrix& a, const Matrix& b);

// Orthonormal basis of the column space, same shape as the input, with the
// implied R factor having a positive diagonal. Columns whose residual norm
// falls below 1e-10 raise RankError.
Matrix qr_orthonormalize(const Matrix& m);

}  // namespace prose
