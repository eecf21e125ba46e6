#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mmfbsde {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(Shape s);

// Dense row-major array of 64-bit reals. Batched quantities keep one sample
// per column.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : shape_{rows, cols}, data_(rows * cols, fill) {}
    explicit Matrix(Shape s, double fill = 0.0) : Matrix(s.rows, s.cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::span<const double> values);
    static Matrix identity(std::size_t n);

    Shape shape() const { return shape_; }
    std::size_t rows() const { return shape_.rows; }
    std::size_t cols() const { return shape_.cols; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * shape_.cols, shape_.cols}; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * shape_.cols, shape_.cols};
    }

    std::vector<double> column_values(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> v);

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    Shape shape_{};
    std::vector<double> data_;
};

// Plain dense helpers for setup code outside the tape.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace mmfbsde
