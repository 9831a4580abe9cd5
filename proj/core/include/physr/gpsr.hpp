#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "physr/bundle.hpp"
#include "physr/expr.hpp"

namespace physr::gp {

struct Hole {
    std::string name;
    /// Argument variables in call order; the hole's tree is written over these.
    std::vector<std::string> params;
};

struct Template {
    Expr combine;
    std::vector<Hole> holes;
    std::vector<std::string> variable_names;

    /// Combined expression for one tree per hole (in `holes` order).
    Expr instantiate(const std::vector<Expr>& trees) const;
};

/// Parse a combine string such as "sin(f(x1)) * g(x2, x3)". Unknown bare
/// identifiers raise UnknownIdentifierError; a hole called with different
/// arities, or with an argument that is not a plain variable, raises
/// ArgumentError. When `hole_names` is nonempty it fixes the hole order and
/// every listed name must occur.
Template parse_template(std::string_view combine, const std::vector<std::string>& variable_names,
                        const std::vector<std::string>& hole_names = {});

/// Operand size caps; -1 means unlimited. Unary operators use `left` only.
struct OperandCaps {
    int left = -1;
    int right = -1;
};

struct GpConfig {
    std::vector<BinaryOp> binary_operators{BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div};
    std::vector<UnaryOp> unary_operators;
    int niterations = 40;
    int population_size = 33;
    int populations = 15;
    int tournament_size = 6;
    int max_size = 30;
    double parsimony = 0.0032;
    /// Keyed by operator name ("+", "*", "sin", ...).
    std::map<std::string, OperandCaps> constraints;
    /// outer operator -> inner operator -> max occurrences inside the outer subtree.
    std::map<std::string, std::map<std::string, int>> nested_constraints;
    /// Fitness uses a seeded subsample of at most this many rows (0 = all).
    int max_rows = 2000;
    std::uint64_t seed = 0;
};

/// Throws ArgumentError for unknown operator names, caps below -1, or a
/// population smaller than 4.
void validate(const GpConfig& cfg);

/// Operand-size caps and nesting limits for every operator node.
bool check_constraints(const Expr& e, const GpConfig& cfg);

struct Candidate {
    Expr expression;
    /// Hole bodies for templated runs (in Template::holes order).
    std::vector<Expr> holes;
    int complexity = 0;
    double loss = 0.0;
};

/// Best candidate per complexity; losses strictly decrease with complexity.
class ParetoFront {
public:
    /// Returns false (and leaves the front unchanged) when the candidate is
    /// dominated by an entry of lower-or-equal complexity.
    bool offer(const Candidate& c);
    const std::map<int, Candidate>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }
    /// Largest drop in log-loss per unit complexity against the next-simpler entry.
    const Candidate& select() const;

private:
    std::map<int, Candidate> entries_;
};

struct GpProgress {
    int generation = 0;
    /// Best loss of each island after this generation.
    std::vector<double> island_best_loss;
};

struct GpResult {
    ParetoFront front;
    Candidate selected;
    std::vector<std::string> variable_names;
    std::string target_name;
    std::vector<GpProgress> history;
};

/// Evolve expressions for y = f(X). X is n x variable_names.size().
GpResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& variable_names,
             const GpConfig& cfg, const std::optional<Template>& tmpl = std::nullopt);

/// Fit on a bundle with one target column, over its feature columns (or the
/// template's variables).
GpResult fit(const data::DatasetBundle& bundle, const GpConfig& cfg, const std::optional<Template>& tmpl = std::nullopt,
             std::optional<std::string> target = std::nullopt);

double mse(const Expr& e, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           const std::vector<std::string>& variable_names);

/// Percentage error of a candidate on a bundle's `target` column.
double mape(const Candidate& c, const data::DatasetBundle& bundle, const std::string& target);

/// Parse a constraints object: {"+": [5, 5], "sin": 3} and a nested-constraints
/// object {"sin": {"cos": 0}}.
std::map<std::string, OperandCaps> constraints_from_json(const nlohmann::json& j);
std::map<std::string, std::map<std::string, int>> nested_constraints_from_json(const nlohmann::json& j);

} // namespace physr::gp
