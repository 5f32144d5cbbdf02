#include "prose/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include <Eigen/Core>

#include "prose/error.hpp"

namespace prose {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
    return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

MutMap view(Matrix& m) {
    return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                     b.shape_string());
}

constexpr double kPivotFloor = 1e-12;
constexpr double kRankFloor = 1e-10;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + shape_string());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::initializer_list<double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values));
}

std::string Matrix::shape_string() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) shape_mismatch("operator+=", *this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) shape_mismatch("operator-=", *this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
    Matrix out(a.rows(), b.cols());
    if (a.cols() == 0) return out;
    view(out).noalias() = view(a) * view(b);
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
    Matrix out(a.cols(), b.cols());
    if (a.rows() == 0) return out;
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
    Matrix out(a.rows(), b.rows());
    if (a.cols() == 0) return out;
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_dot");
    double s = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

bool all_finite(std::span<const double> values) noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, const std::string& what) {
    if (!all_finite(m.data())) throw NonFiniteError(what + ": non-finite entry");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

Matrix solve_linear(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols()) {
        throw ShapeError("solve_linear: matrix " + a.shape_string() + " is not square");
    }
    if (a.rows() != b.rows()) shape_mismatch("solve_linear", a, b);

    const std::size_t n = a.rows();
    const std::size_t m = b.cols();
    Matrix lu = a;
    Matrix x = b;

    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pivot = step;
        double best = std::abs(lu(step, step));
        for (std::size_t r = step + 1; r < n; ++r) {
            const double v = std::abs(lu(r, step));
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (!(best >= kPivotFloor)) {
            throw SingularError("solve_linear: singular matrix, pivot " + std::to_string(step) +
                                    " has magnitude " + std::to_string(best),
                                step);
        }
        if (pivot != step) {
            std::swap_ranges(lu.row(step).begin(), lu.row(step).end(), lu.row(pivot).begin());
            std::swap_ranges(x.row(step).begin(), x.row(step).end(), x.row(pivot).begin());
        }
        const double inv = 1.0 / lu(step, step);
        for (std::size_t r = step + 1; r < n; ++r) {
            const double f = lu(r, step) * inv;
            if (f == 0.0) continue;
            lu(r, step) = f;
            for (std::size_t c = step + 1; c < n; ++c) lu(r, c) -= f * lu(step, c);
            for (std::size_t c = 0; c < m; ++c) x(r, c) -= f * x(step, c);
        }
    }

    for (std::size_t step = n; step-- > 0;) {
        for (std::size_t c = 0; c < m; ++c) {
            double s = x(step, c);
            for (std::size_t k = step + 1; k < n; ++k) s -= lu(step, k) * x(k, c);
            x(step, c) = s / lu(step, step);
        }
    }
    require_finite(x, "solve_linear");
    return x;
}

Matrix qr_orthonormalize(const Matrix& m) {
    if (m.rows() < m.cols()) {
        throw ShapeError("qr_orthonormalize: need rows >= cols, got " + m.shape_string());
    }
    require_finite(m, "qr_orthonormalize");
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    Matrix q(rows, cols);

    std::vector<double> v(rows);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < rows; ++i) v[i] = m(i, j);
        double diag = 0.0;
        // Modified Gram-Schmidt, run twice so orthogonality holds to machine
        // precision even for mildly ill-conditioned columns.
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < j; ++p) {
                double proj = 0.0;
                for (std::size_t i = 0; i < rows; ++i) proj += q(i, p) * v[i];
                for (std::size_t i = 0; i < rows; ++i) v[i] -= proj * q(i, p);
            }
        }
        for (double x : v) diag += x * x;
        diag = std::sqrt(diag);
        if (diag < kRankFloor) {
            throw RankError("qr_orthonormalize: column " + std::to_string(j) +
                            " is linearly dependent (residual norm " + std::to_string(diag) + ")");
        }
        for (std::size_t i = 0; i < rows; ++i) q(i, j) = v[i] / diag;
    }
    return q;
}

}  // namespace prose
