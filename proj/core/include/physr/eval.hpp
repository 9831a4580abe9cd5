#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "physr/bundle.hpp"
#include "physr/expr.hpp"
#include "physr/llm.hpp"
#include "physr/systems.hpp"

namespace physr::eval {

/// sum (y - yhat)^2 / sum (y - mean(y))^2. Throws DataError for length
/// mismatch, fewer than two samples, or constant y.
double nmse_pointwise(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& yhat);

struct ErrorCurve {
    std::vector<double> times;
    std::vector<double> nmse;
};

struct LongTermResult {
    ErrorCurve curve;
    double t_max = 0.0;
    /// +inf when the simulation failed before t_max.
    double nmse_at_tmax = 0.0;
    bool failed = false;
    std::optional<double> failure_time;
};

/// Simulate `rhs` from the initial state of the first trajectory in `test`
/// with the system's integrator and compare against the recorded states at
/// every recorded time. The error at time t is the mean squared deviation
/// over all states (and grid points) divided by the variance of the recorded
/// states pooled over the trajectory.
LongTermResult long_term_nmse(const std::vector<Expr>& rhs, const data::SystemSpec& spec,
                              const data::DatasetBundle& test);

/// Same, parsing each equation against the system's variables. A parse
/// failure is rethrown as a ParseError naming the equation index.
LongTermResult long_term_nmse(const std::vector<std::string>& rhs, const data::SystemSpec& spec,
                              const data::DatasetBundle& test);

/// Two-column CSV "t,nmse".
void write_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path);

enum class Verdict { Yes, No, Undetermined };
std::string_view to_string(Verdict v) noexcept;

struct Judgement {
    Verdict verdict = Verdict::Undetermined;
    std::string reasoning;
    /// Raw judge output of the last attempt.
    std::string raw;
};

/// The judge prompt with both expressions substituted.
std::string judge_prompt(std::string_view ground_truth, std::string_view hypothesis);

/// Ask an LLM whether the hypothesis matches the ground truth. The reply's
/// last JSON object must carry "answer" yes/no; a malformed reply is retried
/// once before giving up as Undetermined.
Judgement judge_symbolic(std::string_view ground_truth, std::string_view hypothesis, llm::Client& client);

struct NumericJudgeOptions {
    double rel_tol = 1e-2;
    Interval box{-1.0, 1.0};
    int points = 1000;
};

/// Deterministic stand-in for the LLM judge: sampled agreement of both
/// expressions on a box over the union of their variables.
bool judge_numeric(const Expr& ground_truth, const Expr& hypothesis, const NumericJudgeOptions& opts = {});

/// All equations pairwise equivalent (same count required).
bool judge_numeric(const std::vector<Expr>& ground_truth, const std::vector<Expr>& hypothesis,
                   const NumericJudgeOptions& opts = {});

struct EquationMetrics {
    std::string target;
    std::string equation;
    double nmse_pointwise = 0.0;
    double mape = 0.0;
    bool numeric_match = false;
};

struct MetricReport {
    std::string system;
    std::vector<EquationMetrics> equations;
    LongTermResult long_term;
    std::vector<Judgement> judgements;
};

/// Pointwise metrics on `test` for every target, the long-term rollout, and
/// the numeric judge against the system's reference equations.
MetricReport evaluate_system(const std::vector<std::string>& equations, const data::SystemSpec& spec,
                             const data::DatasetBundle& test, const NumericJudgeOptions& judge = {});

nlohmann::json to_json(const MetricReport& report);

/// Mean pointwise NMSE of right-hand sides against the bundle's targets, in
/// target order. Infinity when an equation is non-finite somewhere.
double mean_nmse(const std::vector<std::string>& equations, const data::DatasetBundle& bundle);

} // namespace physr::eval
