#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace physr {

enum class UnaryOp { Neg, Sin, Cos, Exp, Log, Sqrt, Tan, Cot, Abs };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

std::string_view op_name(UnaryOp op) noexcept;
std::string_view op_name(BinaryOp op) noexcept;

/// Accepts "sin", "cos", ..., "neg".
std::optional<UnaryOp> unary_from_name(std::string_view name) noexcept;
/// Accepts "+", "-", "*", "/", "^", "pow" and the spelled-out aliases
/// "add", "sub", "mul", "div".
std::optional<BinaryOp> binary_from_name(std::string_view name) noexcept;

const std::vector<UnaryOp>& all_unary_ops();
const std::vector<BinaryOp>& all_binary_ops();

// Total evaluation rules: never throw, return NaN/inf for points outside
// the natural domain (log of non-positive, sqrt of negative, x/0, cot(0)).
double apply(UnaryOp op, double x) noexcept;
double apply(BinaryOp op, double a, double b) noexcept;

/// Immutable symbolic expression tree. Copies share structure, so values are
/// cheap to pass around and safe to read from several threads.
///
/// Hole nodes are named placeholders with argument sub-expressions; they only
/// appear in template expressions and must be substituted before evaluation.
class Expr {
public:
    enum class Kind { Variable, Constant, Unary, Binary, Hole };

    /// The constant 0.
    Expr();

    static Expr variable(std::string name);
    static Expr constant(double value);
    static Expr unary(UnaryOp op, Expr child);
    static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
    static Expr hole(std::string name, std::vector<Expr> args);

    Kind kind() const noexcept;
    bool is_leaf() const noexcept { return kind() == Kind::Variable || kind() == Kind::Constant; }

    /// Variable or hole name; empty for other kinds.
    const std::string& name() const noexcept;
    double value() const noexcept;
    UnaryOp unary_op() const noexcept;
    BinaryOp binary_op() const noexcept;
    std::span<const Expr> children() const noexcept;
    const Expr& child(std::size_t i) const { return children()[i]; }

    /// Node count; memoized at construction.
    int size() const noexcept;
    int depth() const noexcept;

    friend bool operator==(const Expr& a, const Expr& b);

private:
    struct Node;
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

struct ParseOptions {
    /// Identifiers applied like functions that are not known unary operators
    /// parse as holes instead of raising an unknown-identifier error.
    bool allow_holes = false;
};

/// Parse an infix expression. Grammar (see docs/expression_grammar.md):
/// `+ -` < `* /` < unary minus < `^`/`**` (right associative) < calls.
/// Throws ParseError (with offset) or UnknownIdentifierError.
Expr parse(std::string_view text, const std::set<std::string>& vars, const ParseOptions& options = {});

struct RenderOptions {
    int significant_digits = 6;
};

/// Infix text with minimal parentheses; `parse(render(e))` reproduces the tree
/// whenever every constant survives the requested precision.
std::string render(const Expr& e, const RenderOptions& options = {});

/// Node count: each variable, constant and operator counts 1.
int complexity(const Expr& e) noexcept;

/// Evaluate at a point. Throws UnboundVariableError for missing names and
/// Error for unsubstituted holes; numerical trouble yields NaN/inf.
double evaluate(const Expr& e, const std::map<std::string, double>& point);

std::set<std::string> variables(const Expr& e);

/// Replace every hole named in `bodies` by its body, binding the body's free
/// variables to the hole's argument expressions by position in `params`.
struct HoleBody {
    std::vector<std::string> params;
    Expr body;
};
Expr substitute_holes(const Expr& e, const std::map<std::string, HoleBody>& bodies);

/// Replace variables by expressions.
Expr substitute(const Expr& e, const std::map<std::string, Expr>& replacements);

/// Fold operator nodes whose operands are all constants (when the result is finite).
Expr fold_constants(const Expr& e);

// Pre-order subtree addressing; index 0 is the root.
const Expr& subtree_at(const Expr& e, int index);
Expr replace_subtree(const Expr& e, int index, const Expr& replacement);

nlohmann::json to_json(const Expr& e);
Expr expr_from_json(const nlohmann::json& j);

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

struct EquivalenceResult {
    bool equivalent = false;
    /// max_i |a_i - b_i| / max_j max(|a_j|, |b_j|) over finite samples.
    double max_relative_deviation = 0.0;
    int evaluated = 0;
    int skipped = 0;
};

/// Sample both expressions at `n_points` pseudo-random points (fixed seed) and
/// compare. Deviations are measured against the largest magnitude either side
/// reaches on the sample, so sign changes of the target do not blow up the
/// ratio. Non-finite points are skipped; more than half skipped is an error.
EquivalenceResult numeric_equivalent(const Expr& a, const Expr& b, const std::map<std::string, Interval>& domain,
                                     int n_points, double rel_tol, std::uint64_t seed = 0x5eedULL);

} // namespace physr
