#include "mmfbsde/autodiff/engine.hpp"

#include <vector>

namespace mmfbsde::ad {

namespace {

Matrix map_values(const Matrix& x, const ColumnFunction& f, std::vector<double>* jac) {
    const std::size_t rin = x.rows();
    const std::size_t rout = f.out_dim();
    Matrix y(rout, x.cols());
    std::vector<double> xc(rin), yc(rout);
    if (jac) jac->assign(x.cols() * rout * rin, 0.0);
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t r = 0; r < rin; ++r) xc[r] = x(r, c);
        if (jac) {
            f.eval_with_jacobian(xc, yc, std::span<double>(jac->data() + c * rout * rin, rout * rin));
        } else {
            f.eval(xc, yc);
        }
        for (std::size_t r = 0; r < rout; ++r) y(r, c) = yc[r];
    }
    return y;
}

}  // namespace

TapeEngine::Value TapeEngine::column_map(const Value& x, const ColumnFunction& f) {
    std::vector<double> jac;
    Matrix y = map_values(tape_->value(x), f, &jac);
    return tape_->column_map(x, std::move(y), std::move(jac));
}

ValueEngine::Value ValueEngine::run(Primitive op, const Value& a) {
    const Matrix* in[1] = {&a};
    return forward(op, in, {});
}

ValueEngine::Value ValueEngine::run(Primitive op, const Value& a, const Value& b) {
    const Matrix* in[2] = {&a, &b};
    return forward(op, in, {});
}

ValueEngine::Value ValueEngine::scale(const Value& a, double s) const {
    PrimitiveAttr attr;
    attr.scalar = s;
    const Matrix* in[1] = {&a};
    return forward(Primitive::ScalarMultiply, in, attr);
}

ValueEngine::Value ValueEngine::concat_rows(std::span<const Value> parts) const {
    std::vector<const Matrix*> in;
    for (const auto& p : parts) in.push_back(&p);
    return forward(Primitive::ConcatRows, in, {});
}

ValueEngine::Value ValueEngine::slice_rows(const Value& a, std::size_t begin, std::size_t count) const {
    PrimitiveAttr attr;
    attr.begin = begin;
    attr.count = count;
    const Matrix* in[1] = {&a};
    return forward(Primitive::SliceRows, in, attr);
}

ValueEngine::Value ValueEngine::column_map(const Value& x, const ColumnFunction& f) const {
    return map_values(x, f, nullptr);
}

}  // namespace mmfbsde::ad
