#include "mmfbsde/autodiff/tape.hpp"

#include "mmfbsde/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmfbsde::ad {

std::string_view name(Primitive p) {
    switch (p) {
        case Primitive::Leaf: return "leaf";
        case Primitive::MatMul: return "matrix-multiply";
        case Primitive::Add: return "add";
        case Primitive::Subtract: return "subtract";
        case Primitive::ElementMultiply: return "element-multiply";
        case Primitive::ScalarMultiply: return "scalar-multiply";
        case Primitive::Tanh: return "tanh";
        case Primitive::Sigmoid: return "sigmoid";
        case Primitive::Sum: return "sum";
        case Primitive::SumOfSquares: return "sum-of-squares";
        case Primitive::ConcatRows: return "concat-rows";
        case Primitive::SliceRows: return "slice-rows";
        case Primitive::ColumnMap: return "column-map";
    }
    return "unknown";
}

namespace {

[[noreturn]] void shape_error(Primitive op, std::span<const Shape> in, std::string_view what) {
    std::string msg = std::string(name(op)) + ": " + std::string(what) + " (operands:";
    for (const auto& s : in) msg += " " + to_string(s);
    msg += ")";
    throw ShapeError(msg);
}

void expect_arity(Primitive op, std::span<const Shape> in, std::size_t n) {
    if (in.size() != n) {
        shape_error(op, in, "expected " + std::to_string(n) + " operand(s), got " +
                                std::to_string(in.size()));
    }
}

double sigmoid(double x) {
    // Split by sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Shape infer_shape(Primitive op, std::span<const Shape> in, const PrimitiveAttr& attr) {
    switch (op) {
        case Primitive::Leaf:
            shape_error(op, in, "leaves are created with variable()/constant()");
        case Primitive::MatMul:
            expect_arity(op, in, 2);
            if (in[0].cols != in[1].rows) shape_error(op, in, "inner dimensions differ");
            return {in[0].rows, in[1].cols};
        case Primitive::Add:
        case Primitive::Subtract:
        case Primitive::ElementMultiply:
            expect_arity(op, in, 2);
            if (in[0] != in[1]) shape_error(op, in, "shapes differ");
            return in[0];
        case Primitive::ScalarMultiply:
        case Primitive::Tanh:
        case Primitive::Sigmoid:
            expect_arity(op, in, 1);
            return in[0];
        case Primitive::Sum:
        case Primitive::SumOfSquares:
            expect_arity(op, in, 1);
            return {1, 1};
        case Primitive::ConcatRows: {
            if (in.empty()) shape_error(op, in, "needs at least one operand");
            Shape out{0, in[0].cols};
            for (const auto& s : in) {
                if (s.cols != out.cols) shape_error(op, in, "column counts differ");
                out.rows += s.rows;
            }
            return out;
        }
        case Primitive::SliceRows:
            expect_arity(op, in, 1);
            if (attr.count == 0 || attr.begin + attr.count > in[0].rows) {
                shape_error(op, in, "row range [" + std::to_string(attr.begin) + ", " +
                                        std::to_string(attr.begin + attr.count) +
                                        ") out of bounds");
            }
            return {attr.count, in[0].cols};
        case Primitive::ColumnMap:
            shape_error(op, in, "column maps are created with column_map()");
    }
    shape_error(op, in, "unknown primitive");
}

Matrix forward(Primitive op, std::span<const Matrix* const> in, const PrimitiveAttr& attr) {
    std::vector<Shape> shapes;
    shapes.reserve(in.size());
    for (const Matrix* m : in) shapes.push_back(m->shape());
    const Shape out_shape = infer_shape(op, shapes, attr);
    const auto& k = kernels::active();

    Matrix out(out_shape);
    switch (op) {
        case Primitive::MatMul:
            k.gemm_nn(in[0]->rows(), in[0]->cols(), in[1]->cols(), in[0]->data(), in[1]->data(),
                      out.data());
            break;
        case Primitive::Add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] + (*in[1])[i];
            break;
        case Primitive::Subtract:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] - (*in[1])[i];
            break;
        case Primitive::ElementMultiply:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*in[0])[i] * (*in[1])[i];
            break;
        case Primitive::ScalarMultiply:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = attr.scalar * (*in[0])[i];
            break;
        case Primitive::Tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh((*in[0])[i]);
            break;
        case Primitive::Sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid((*in[0])[i]);
            break;
        case Primitive::Sum: {
            double s = 0.0;
            for (double v : in[0]->values()) s += v;
            out[0] = s;
            break;
        }
        case Primitive::SumOfSquares: {
            double s = 0.0;
            for (double v : in[0]->values()) s += v * v;
            out[0] = s;
            break;
        }
        case Primitive::ConcatRows: {
            double* dst = out.data();
            for (const Matrix* m : in) dst = std::copy(m->data(), m->data() + m->size(), dst);
            break;
        }
        case Primitive::SliceRows: {
            const std::size_t c = in[0]->cols();
            std::copy(in[0]->data() + attr.begin * c, in[0]->data() + (attr.begin + attr.count) * c,
                      out.data());
            break;
        }
        case Primitive::Leaf:
        case Primitive::ColumnMap:
            break;
    }
    return out;
}

const Matrix& Gradients::operator[](Var v) const {
    if (has(v)) return *grads_[v.id];
    if (zeros_.size() <= v.id) zeros_.resize(v.id + 1);
    if (!zeros_[v.id]) zeros_[v.id].emplace(v.shape);
    return *zeros_[v.id];
}

Var Tape::push(Node node) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    const Shape s = node.value.shape();
    nodes_.push_back(std::move(node));
    return {id, s};
}

void Tape::check_owned(Var v) const {
    if (v.id >= nodes_.size() || nodes_[v.id].value.shape() != v.shape) {
        throw std::invalid_argument("Var " + std::to_string(v.id) + " does not belong to this tape");
    }
}

Var Tape::variable(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = true;
    return push(std::move(n));
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::apply(Primitive op, std::span<const Var> inputs, const PrimitiveAttr& attr) {
    if (op == Primitive::ColumnMap || op == Primitive::Leaf) {
        std::vector<Shape> s;
        for (auto v : inputs) s.push_back(v.shape);
        infer_shape(op, s, attr);  // throws
    }
    std::vector<const Matrix*> values;
    values.reserve(inputs.size());
    Node n;
    n.op = op;
    n.attr = attr;
    n.inputs.reserve(inputs.size());
    for (Var v : inputs) {
        check_owned(v);
        values.push_back(&nodes_[v.id].value);
        n.inputs.push_back(v.id);
        n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
    }
    n.value = forward(op, values, attr);
    return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
    PrimitiveAttr attr;
    attr.scalar = s;
    return apply(Primitive::ScalarMultiply, std::span<const Var>(&a, 1), attr);
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count) {
    PrimitiveAttr attr;
    attr.begin = begin;
    attr.count = count;
    return apply(Primitive::SliceRows, std::span<const Var>(&a, 1), attr);
}

Var Tape::column_map(Var x, Matrix value, std::vector<double> jacobians) {
    check_owned(x);
    const Shape in = x.shape;
    const Shape out = value.shape();
    if (out.cols != in.cols || jacobians.size() != in.cols * out.rows * in.rows) {
        const Shape s[2] = {in, out};
        shape_error(Primitive::ColumnMap, s, "value/jacobian sizes do not match the input columns");
    }
    Node n;
    n.op = Primitive::ColumnMap;
    n.inputs = {x.id};
    n.value = std::move(value);
    n.jacobians = std::move(jacobians);
    n.needs_grad = nodes_[x.id].needs_grad;
    return push(std::move(n));
}

Gradients Tape::backward(Var output) const {
    check_owned(output);
    if (output.shape != Shape{1, 1}) {
        throw ShapeError("backward: output must be 1x1, got " + to_string(output.shape));
    }
    const auto& k = kernels::active();
    Gradients g;
    g.grads_.resize(output.id + 1);
    g.grads_[output.id].emplace(1, 1, 1.0);

    auto acc = [&](std::uint32_t id) -> Matrix* {
        if (!nodes_[id].needs_grad) return nullptr;
        auto& slot = g.grads_[id];
        if (!slot) slot.emplace(nodes_[id].value.shape());
        return &*slot;
    };

    for (std::uint32_t id = output.id + 1; id-- > 0;) {
        if (!g.grads_[id]) continue;
        const Node& node = nodes_[id];
        ++g.visited_;
        if (node.op == Primitive::Leaf) continue;
        const Matrix& dy = *g.grads_[id];
        const Matrix& y = node.value;

        switch (node.op) {
            case Primitive::MatMul: {
                const Matrix& a = nodes_[node.inputs[0]].value;
                const Matrix& b = nodes_[node.inputs[1]].value;
                if (Matrix* da = acc(node.inputs[0]))
                    k.gemm_nt(a.rows(), dy.cols(), a.cols(), dy.data(), b.data(), da->data());
                if (Matrix* db = acc(node.inputs[1]))
                    k.gemm_tn(b.rows(), a.rows(), dy.cols(), a.data(), dy.data(), db->data());
                break;
            }
            case Primitive::Add:
            case Primitive::Subtract: {
                if (Matrix* da = acc(node.inputs[0])) k.axpy(dy.size(), 1.0, dy.data(), da->data());
                const double sb = node.op == Primitive::Add ? 1.0 : -1.0;
                if (Matrix* db = acc(node.inputs[1])) k.axpy(dy.size(), sb, dy.data(), db->data());
                break;
            }
            case Primitive::ElementMultiply: {
                const Matrix& a = nodes_[node.inputs[0]].value;
                const Matrix& b = nodes_[node.inputs[1]].value;
                if (Matrix* da = acc(node.inputs[0])) k.mul_acc(dy.size(), dy.data(), b.data(), da->data());
                if (Matrix* db = acc(node.inputs[1])) k.mul_acc(dy.size(), dy.data(), a.data(), db->data());
                break;
            }
            case Primitive::ScalarMultiply:
                if (Matrix* da = acc(node.inputs[0]))
                    k.axpy(dy.size(), node.attr.scalar, dy.data(), da->data());
                break;
            case Primitive::Tanh:
                if (Matrix* da = acc(node.inputs[0])) {
                    for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * (1.0 - y[i] * y[i]);
                }
                break;
            case Primitive::Sigmoid:
                if (Matrix* da = acc(node.inputs[0])) {
                    for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * y[i] * (1.0 - y[i]);
                }
                break;
            case Primitive::Sum:
                if (Matrix* da = acc(node.inputs[0])) {
                    for (auto& v : da->values()) v += dy[0];
                }
                break;
            case Primitive::SumOfSquares:
                if (Matrix* da = acc(node.inputs[0])) {
                    const Matrix& a = nodes_[node.inputs[0]].value;
                    k.axpy(a.size(), 2.0 * dy[0], a.data(), da->data());
                }
                break;
            case Primitive::ConcatRows: {
                std::size_t offset = 0;
                for (std::uint32_t in : node.inputs) {
                    const std::size_t n = nodes_[in].value.size();
                    if (Matrix* da = acc(in)) k.axpy(n, 1.0, dy.data() + offset, da->data());
                    offset += n;
                }
                break;
            }
            case Primitive::SliceRows:
                if (Matrix* da = acc(node.inputs[0])) {
                    const std::size_t c = dy.cols();
                    k.axpy(dy.size(), 1.0, dy.data(), da->data() + node.attr.begin * c);
                }
                break;
            case Primitive::ColumnMap:
                if (Matrix* dx = acc(node.inputs[0])) {
                    const std::size_t rin = dx->rows();
                    const std::size_t rout = y.rows();
                    const std::size_t cols = y.cols();
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double* jac = node.jacobians.data() + c * rout * rin;
                        for (std::size_t r = 0; r < rout; ++r) {
                            const double d = dy(r, c);
                            if (d == 0.0) continue;
                            for (std::size_t q = 0; q < rin; ++q) (*dx)(q, c) += jac[r * rin + q] * d;
                        }
                    }
                }
                break;
            case Primitive::Leaf:
                break;
        }
    }
    return g;
}

FdReport finite_difference_check(const std::function<double(std::span<const double>)>& f,
                                 std::span<const double> analytic,
                                 std::span<const double> point, double step, Stencil stencil) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be > 0");
    if (analytic.size() != point.size()) {
        throw std::invalid_argument("finite_difference_check: gradient/point size mismatch");
    }
    std::vector<double> x(point.begin(), point.end());
    FdReport report;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        auto at = [&](double offset) {
            x[i] = x0 + offset;
            const double v = f(x);
            x[i] = x0;
            if (!std::isfinite(v)) {
                throw std::domain_error("finite_difference_check: non-finite function value at coordinate " +
                                        std::to_string(i));
            }
            return v;
        };
        double fd = 0.0;
        if (stencil == Stencil::Central) {
            fd = (at(step) - at(-step)) / (2.0 * step);
        } else {
            fd = (-at(2.0 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2.0 * step)) / (12.0 * step);
        }
        const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        if (err > report.max_relative_error) {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    return report;
}

}  // namespace mmfbsde::ad
