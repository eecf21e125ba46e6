#include "mmfbsde/autodiff/matrix.hpp"

#include "mmfbsde/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmfbsde {

std::string to_string(Shape s) {
    return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
        std::copy(row.begin(), row.end(), m.data() + i * c);
        ++i;
    }
    return m;
}

Matrix Matrix::column(std::span<const double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<double> Matrix::column_values(std::size_t c) const {
    std::vector<double> v(rows());
    for (std::size_t r = 0; r < rows(); ++r) v[r] = (*this)(r, c);
    return v;
}

void Matrix::set_column(std::size_t c, std::span<const double> v) {
    for (std::size_t r = 0; r < rows(); ++r) (*this)(r, c) = v[r];
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: shape mismatch " + to_string(a.shape()) + " * " +
                                    to_string(b.shape()));
    }
    Matrix c(a.rows(), b.cols());
    kernels::active().gemm_nn(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace mmfbsde
