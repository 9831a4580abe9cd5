#include "physr/compiled_expr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "physr/error.hpp"

namespace physr {

namespace {

// Scalar std:: math everywhere (not Eigen's vectorized transcendental
// kernels) so batch and single-row evaluation agree bit for bit.
void apply_unary(UnaryOp op, Eigen::ArrayXd& x) {
    switch (op) {
    case UnaryOp::Neg: x = -x; return;
    case UnaryOp::Abs: x = x.abs(); return;
    default: x = x.unaryExpr([op](double v) { return apply(op, v); }); return;
    }
}

void apply_binary(BinaryOp op, Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
    switch (op) {
    case BinaryOp::Add: a += b; return;
    case BinaryOp::Sub: a -= b; return;
    case BinaryOp::Mul: a *= b; return;
    case BinaryOp::Div:
    case BinaryOp::Pow: a = a.binaryExpr(b, [op](double x, double y) { return apply(op, x, y); }); return;
    }
}

} // namespace

CompiledExpr::CompiledExpr(const Expr& e, const std::vector<std::string>& columns) {
    emit(e, columns);
    int depth = 0;
    for (const auto& in : program_) {
        if (in.code == Code::Column || in.code == Code::Constant) ++depth;
        if (in.code == Code::Binary) --depth;
        max_stack_ = std::max(max_stack_, depth);
    }
}

void CompiledExpr::emit(const Expr& e, const std::vector<std::string>& columns) {
    switch (e.kind()) {
    case Expr::Kind::Variable: {
        auto it = std::find(columns.begin(), columns.end(), e.name());
        if (it == columns.end()) throw UnboundVariableError(e.name());
        program_.push_back({Code::Column, static_cast<int>(it - columns.begin())});
        return;
    }
    case Expr::Kind::Constant: program_.push_back({Code::Constant, 0, e.value()}); return;
    case Expr::Kind::Unary:
        emit(e.child(0), columns);
        program_.push_back({Code::Unary, 0, 0.0, e.unary_op()});
        return;
    case Expr::Kind::Binary:
        emit(e.child(0), columns);
        emit(e.child(1), columns);
        program_.push_back({Code::Binary, 0, 0.0, UnaryOp::Neg, e.binary_op()});
        return;
    case Expr::Kind::Hole: throw Error("cannot compile unsubstituted hole '" + e.name() + "'");
    }
}

Eigen::VectorXd CompiledExpr::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& data) const {
    const Eigen::Index n = data.rows();
    std::vector<Eigen::ArrayXd> stack(static_cast<std::size_t>(max_stack_));
    std::size_t top = 0;
    for (const auto& in : program_) {
        switch (in.code) {
        case Code::Column: stack[top++] = data.col(in.column).array(); break;
        case Code::Constant: stack[top++] = Eigen::ArrayXd::Constant(n, in.value); break;
        case Code::Unary: apply_unary(in.uop, stack[top - 1]); break;
        case Code::Binary:
            apply_binary(in.bop, stack[top - 2], stack[top - 1]);
            --top;
            break;
        }
    }
    return stack[0].matrix();
}

double CompiledExpr::evaluate_row(const double* row) const {
    double local[64] = {};
    std::vector<double> heap;
    double* stack = local;
    if (max_stack_ > 64) {
        heap.resize(static_cast<std::size_t>(max_stack_));
        stack = heap.data();
    }
    int top = 0;
    for (const auto& in : program_) {
        switch (in.code) {
        case Code::Column: stack[top++] = row[in.column]; break;
        case Code::Constant: stack[top++] = in.value; break;
        case Code::Unary: stack[top - 1] = apply(in.uop, stack[top - 1]); break;
        case Code::Binary:
            stack[top - 2] = apply(in.bop, stack[top - 2], stack[top - 1]);
            --top;
            break;
        }
    }
    return stack[0];
}

} // namespace physr
