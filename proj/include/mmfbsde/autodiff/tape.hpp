#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records a straight-line program built from a closed set of
// primitives. Node ids are assigned in creation order, so the record is
// topologically sorted by construction; backward() walks it once in
// reverse and accumulates adjoints additively over fan-out.

#include "mmfbsde/autodiff/matrix.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace mmfbsde::ad {

enum class Primitive : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Subtract,
    ElementMultiply,
    ScalarMultiply,
    Tanh,
    Sigmoid,
    Sum,
    SumOfSquares,
    ConcatRows,
    SliceRows,
    // Column-wise vector map y_j = F(x_j) with a caller-supplied Jacobian per
    // column. Carries the non-polynomial system drifts (sin, cos, tan).
    ColumnMap,
};

std::string_view name(Primitive p);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PrimitiveAttr {
    double scalar = 1.0;     // ScalarMultiply factor
    std::size_t begin = 0;   // SliceRows
    std::size_t count = 0;   // SliceRows
};

struct Var {
    std::uint32_t id = 0;
    Shape shape{};
};

// Result shape of a primitive, or ShapeError naming the primitive and the
// offending operand shapes.
Shape infer_shape(Primitive op, std::span<const Shape> inputs, const PrimitiveAttr& attr);

// Forward value of a primitive; shared by the tape and the tape-free engine
// so both produce bit-identical values.
Matrix forward(Primitive op, std::span<const Matrix* const> inputs, const PrimitiveAttr& attr);

class Gradients {
public:
    // Adjoint of `v`; a zero matrix when the output does not depend on it.
    const Matrix& operator[](Var v) const;
    bool has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }
    std::size_t visited() const { return visited_; }

private:
    friend class Tape;
    std::vector<std::optional<Matrix>> grads_;
    mutable std::vector<std::optional<Matrix>> zeros_;
    std::size_t visited_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    // Leaf that receives a gradient.
    Var variable(Matrix value);
    // Leaf that does not.
    Var constant(Matrix value);

    Var apply(Primitive op, std::span<const Var> inputs, const PrimitiveAttr& attr = {});

    Var matmul(Var a, Var b) { return apply2(Primitive::MatMul, a, b); }
    Var add(Var a, Var b) { return apply2(Primitive::Add, a, b); }
    Var sub(Var a, Var b) { return apply2(Primitive::Subtract, a, b); }
    Var mul(Var a, Var b) { return apply2(Primitive::ElementMultiply, a, b); }
    Var scale(Var a, double s);
    Var tanh(Var a) { return apply1(Primitive::Tanh, a); }
    Var sigmoid(Var a) { return apply1(Primitive::Sigmoid, a); }
    Var sum(Var a) { return apply1(Primitive::Sum, a); }
    Var sum_of_squares(Var a) { return apply1(Primitive::SumOfSquares, a); }
    Var concat_rows(std::span<const Var> parts) { return apply(Primitive::ConcatRows, parts); }
    Var slice_rows(Var a, std::size_t begin, std::size_t count);

    // `jacobians` holds one row-major (value.rows × x.rows) block per column.
    Var column_map(Var x, Matrix value, std::vector<double> jacobians);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Adjoints of every node reachable from `output`, which must be 1×1.
    Gradients backward(Var output) const;

private:
    struct Node {
        Primitive op = Primitive::Leaf;
        std::vector<std::uint32_t> inputs;
        PrimitiveAttr attr;
        Matrix value;
        bool needs_grad = false;
        std::vector<double> jacobians;
    };

    Var apply1(Primitive op, Var a) { return apply(op, std::span<const Var>(&a, 1)); }
    Var apply2(Primitive op, Var a, Var b) {
        const Var in[2] = {a, b};
        return apply(op, in);
    }
    Var push(Node node);
    void check_owned(Var v) const;

    std::vector<Node> nodes_;
};

struct FdReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
};

enum class Stencil {
    Central,        // (f(x+h) − f(x−h)) / 2h
    CentralFourth,  // (−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h
};

// Compares `analytic` against central differences of `f` at `point`:
// max_i |analytic_i − fd_i| / max(1, |fd_i|). Throws std::domain_error naming
// the coordinate when `f` is non-finite near the point.
FdReport finite_difference_check(const std::function<double(std::span<const double>)>& f,
                                 std::span<const double> analytic,
                                 std::span<const double> point, double step,
                                 Stencil stencil = Stencil::Central);

}  // namespace mmfbsde::ad
