#pragma once

// Two interchangeable evaluators for code written once against the
// primitive set: TapeEngine records onto a Tape for differentiation,
// ValueEngine computes the same values directly. Both call ad::forward, so
// a computation gives bit-identical values under either engine.

#include "mmfbsde/autodiff/tape.hpp"

#include <concepts>
#include <span>

namespace mmfbsde::ad {

// Column-wise vector function with an analytic Jacobian.
class ColumnFunction {
public:
    virtual ~ColumnFunction() = default;
    virtual std::size_t out_dim() const = 0;
    virtual void eval(std::span<const double> x, std::span<double> y) const = 0;
    // Fills y and the row-major (out_dim × x.size()) Jacobian.
    virtual void eval_with_jacobian(std::span<const double> x, std::span<double> y,
                                    std::span<double> jac) const = 0;
};

class TapeEngine {
public:
    using Value = Var;

    explicit TapeEngine(Tape& tape) : tape_(&tape) {}

    Tape& tape() { return *tape_; }

    Value constant(Matrix m) { return tape_->constant(std::move(m)); }
    Value variable(Matrix m) { return tape_->variable(std::move(m)); }
    const Matrix& value(const Value& v) const { return tape_->value(v); }

    Value matmul(const Value& a, const Value& b) { return tape_->matmul(a, b); }
    Value add(const Value& a, const Value& b) { return tape_->add(a, b); }
    Value sub(const Value& a, const Value& b) { return tape_->sub(a, b); }
    Value mul(const Value& a, const Value& b) { return tape_->mul(a, b); }
    Value scale(const Value& a, double s) { return tape_->scale(a, s); }
    Value tanh(const Value& a) { return tape_->tanh(a); }
    Value sigmoid(const Value& a) { return tape_->sigmoid(a); }
    Value sum(const Value& a) { return tape_->sum(a); }
    Value sum_of_squares(const Value& a) { return tape_->sum_of_squares(a); }
    Value concat_rows(std::span<const Value> parts) { return tape_->concat_rows(parts); }
    Value slice_rows(const Value& a, std::size_t begin, std::size_t count) {
        return tape_->slice_rows(a, begin, count);
    }
    Value column_map(const Value& x, const ColumnFunction& f);

private:
    Tape* tape_;
};

class ValueEngine {
public:
    using Value = Matrix;

    Value constant(Matrix m) const { return m; }
    Value variable(Matrix m) const { return m; }
    const Matrix& value(const Value& v) const { return v; }

    Value matmul(const Value& a, const Value& b) const { return run(Primitive::MatMul, a, b); }
    Value add(const Value& a, const Value& b) const { return run(Primitive::Add, a, b); }
    Value sub(const Value& a, const Value& b) const { return run(Primitive::Subtract, a, b); }
    Value mul(const Value& a, const Value& b) const { return run(Primitive::ElementMultiply, a, b); }
    Value scale(const Value& a, double s) const;
    Value tanh(const Value& a) const { return run(Primitive::Tanh, a); }
    Value sigmoid(const Value& a) const { return run(Primitive::Sigmoid, a); }
    Value sum(const Value& a) const { return run(Primitive::Sum, a); }
    Value sum_of_squares(const Value& a) const { return run(Primitive::SumOfSquares, a); }
    Value concat_rows(std::span<const Value> parts) const;
    Value slice_rows(const Value& a, std::size_t begin, std::size_t count) const;
    Value column_map(const Value& x, const ColumnFunction& f) const;

private:
    static Value run(Primitive op, const Value& a);
    static Value run(Primitive op, const Value& a, const Value& b);
};

template <class E>
concept Engine = requires(E e, typename E::Value v, Matrix m) {
    { e.constant(m) } -> std::same_as<typename E::Value>;
    { e.value(v) } -> std::convertible_to<const Matrix&>;
    { e.matmul(v, v) } -> std::same_as<typename E::Value>;
    { e.sigmoid(v) } -> std::same_as<typename E::Value>;
};

}  // namespace mmfbsde::ad
