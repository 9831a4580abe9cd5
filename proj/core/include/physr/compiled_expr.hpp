#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "physr/expr.hpp"

namespace physr {

/// Expression lowered to a postfix program over column indices, for
/// evaluating one expression on many rows at once.
class CompiledExpr {
public:
    /// `columns` names the columns of the matrices passed to evaluate().
    /// Throws UnboundVariableError if the expression uses an unknown name.
    CompiledExpr(const Expr& e, const std::vector<std::string>& columns);

    /// Evaluate on every row of `data` (rows x columns).
    Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::MatrixXd>& data) const;

    /// Evaluate on a single row.
    double evaluate_row(const double* row) const;

private:
    enum class Code : unsigned char { Column, Constant, Unary, Binary };
    struct Instr {
        Code code;
        int column = 0;
        double value = 0.0;
        UnaryOp uop = UnaryOp::Neg;
        BinaryOp bop = BinaryOp::Add;
    };
    void emit(const Expr& e, const std::vector<std::string>& columns);

    std::vector<Instr> program_;
    int max_stack_ = 0;
};

} // namespace physr
