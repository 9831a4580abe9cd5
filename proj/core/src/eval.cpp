#include "physr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "physr/compiled_expr.hpp"
#include "physr/resources.hpp"
#include "physr/simulate.hpp"
#include "physr/sindy.hpp"

namespace physr::eval {

double nmse_pointwise(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& yhat) {
    if (y.size() != yhat.size())
        throw DataError(fmt::format("nmse: {} targets but {} predictions", y.size(), yhat.size()));
    if (y.size() < 2) throw DataError("nmse needs at least two samples");
    const double denom = (y.array() - y.mean()).square().sum();
    if (!(denom > 0.0)) throw DataError("nmse is undefined for a constant target");
    return (y - yhat).squaredNorm() / denom;
}

namespace {

struct Reference {
    std::vector<double> times;
    /// records x (q * points), field-major like the integrator state.
    Eigen::MatrixXd states;
};

// Recorded states of the first trajectory, one row per time.
Reference first_trajectory(const data::SystemSpec& spec, const data::DatasetBundle& test) {
    if (test.empty()) throw DataError("test bundle is empty");
    const auto ids = test.trajectory_ids();
    const Eigen::VectorXd traj = test.column("traj_id");
    const Eigen::VectorXd t = test.column("t");
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < test.rows(); ++r) {
        if (traj(r) == ids.front()) rows.push_back(r);
    }
    std::set<double> time_set;
    for (auto r : rows) time_set.insert(t(r));
    Reference ref;
    ref.times.assign(time_set.begin(), time_set.end());
    if (ref.times.size() < 2) throw DataError("test trajectory needs at least two recorded times");
    std::map<double, Eigen::Index> time_index;
    for (std::size_t k = 0; k < ref.times.size(); ++k) time_index[ref.times[k]] = static_cast<Eigen::Index>(k);

    const auto q = static_cast<Eigen::Index>(spec.states.size());
    std::vector<int> state_cols;
    for (const auto& s : spec.states) state_cols.push_back(test.index_of(s));
    const auto& v = test.values();

    if (spec.kind == data::SystemKind::Ode) {
        ref.states.resize(static_cast<Eigen::Index>(ref.times.size()), q);
        for (auto r : rows) {
            for (Eigen::Index s = 0; s < q; ++s) ref.states(time_index[t(r)], s) = v(r, state_cols[s]);
        }
        return ref;
    }
    if (!spec.pde) throw ArgumentError(fmt::format("system '{}' has no grid", spec.name));
    const data::Grid& grid = spec.pde->grid;
    const Eigen::Index n = grid.points();
    ref.states.setConstant(static_cast<Eigen::Index>(ref.times.size()), q * n,
                           std::numeric_limits<double>::quiet_NaN());
    const Eigen::VectorXd xs = test.column("x");
    const Eigen::VectorXd ys = test.column("y");
    for (auto r : rows) {
        const auto i = static_cast<Eigen::Index>(std::lround((xs(r) - grid.lo) / grid.dx()));
        const auto j = static_cast<Eigen::Index>(std::lround((ys(r) - grid.lo) / grid.dy()));
        if (i < 0 || i >= grid.nx || j < 0 || j >= grid.ny) throw DataError("test row lies outside the grid");
        for (Eigen::Index s = 0; s < q; ++s) ref.states(time_index[t(r)], s * n + j * grid.nx + i) = v(r, state_cols[s]);
    }
    if (!ref.states.allFinite()) throw DataError("test trajectory does not cover the full grid at every time");
    return ref;
}

} // namespace

LongTermResult long_term_nmse(const std::vector<Expr>& rhs, const data::SystemSpec& spec,
                              const data::DatasetBundle& test) {
    if (rhs.size() != spec.states.size())
        throw ArgumentError(fmt::format("{} equations for {} states", rhs.size(), spec.states.size()));
    const Reference ref = first_trajectory(spec, test);
    const double dt = ref.times[1] - ref.times[0];
    for (std::size_t k = 2; k < ref.times.size(); ++k) {
        if (std::abs(ref.times[k] - ref.times[k - 1] - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw DataError("test trajectory times are not evenly spaced");
    }

    data::VectorField field;
    std::optional<data::OdeRhs> ode;
    std::optional<data::PdeRhs> pde;
    if (spec.kind == data::SystemKind::Ode) {
        ode.emplace(spec.states, rhs);
        field = ode->field();
    } else {
        pde.emplace(spec.states, rhs, spec.pde->grid, spec.pde->derivative_order);
        field = pde->field();
    }

    const Eigen::VectorXd x0 = ref.states.row(0).transpose();
    const auto records = static_cast<int>(ref.times.size());
    const data::Trajectory path = data::integrate(field, x0, dt, spec.substeps, records);

    const double mean = ref.states.mean();
    const double pooled = (ref.states.array() - mean).square().mean();
    if (!(pooled > 0.0)) throw DataError("recorded states have zero variance");

    LongTermResult out;
    out.t_max = ref.times.back();
    for (int k = 0; k < path.completed; ++k) {
        out.curve.times.push_back(ref.times[static_cast<std::size_t>(k)]);
        out.curve.nmse.push_back((path.states.row(k) - ref.states.row(k)).squaredNorm() /
                                 static_cast<double>(ref.states.cols()) / pooled);
    }
    if (path.failed) {
        out.failed = true;
        out.failure_time = ref.times.front() + path.failure_time;
        out.nmse_at_tmax = std::numeric_limits<double>::infinity();
    } else {
        out.nmse_at_tmax = out.curve.nmse.back();
    }
    return out;
}

LongTermResult long_term_nmse(const std::vector<std::string>& rhs, const data::SystemSpec& spec,
                              const data::DatasetBundle& test) {
    const auto names = spec.rhs_variables();
    const std::set<std::string> vars(names.begin(), names.end());
    std::vector<Expr> exprs;
    for (std::size_t i = 0; i < rhs.size(); ++i) {
        try {
            exprs.push_back(parse(rhs[i], vars));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("equation {} ('{}'): {}", i + 1, rhs[i], e.what()), e.offset());
        }
    }
    return long_term_nmse(exprs, spec, test);
}

void write_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    out << "t,nmse\n";
    for (std::size_t k = 0; k < curve.times.size(); ++k) out << fmt::format("{:.17g},{:.17g}\n", curve.times[k], curve.nmse[k]);
}

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::Undetermined: return "undetermined";
    }
    return "undetermined";
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

std::optional<Judgement> read_verdict(const std::string& text) {
    const auto j = llm::last_json_object(text);
    if (!j || !j->is_object() || !j->contains("answer") || !(*j)["answer"].is_string()) return std::nullopt;
    std::string answer = (*j)["answer"].get<std::string>();
    for (auto& c : answer) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    Judgement out;
    if (answer == "yes" || answer == "true") out.verdict = Verdict::Yes;
    else if (answer == "no" || answer == "false") out.verdict = Verdict::No;
    else return std::nullopt;
    if (j->contains("reasoning") && (*j)["reasoning"].is_string()) out.reasoning = (*j)["reasoning"].get<std::string>();
    out.raw = text;
    return out;
}

} // namespace

std::string judge_prompt(std::string_view ground_truth, std::string_view hypothesis) {
    std::string prompt(resources::judge_prompt());
    // Substitute first so braces inside the expressions are left alone by the unescaping below.
    const std::string gt_slot = "\x01gt\x01";
    const std::string hyp_slot = "\x01hyp\x01";
    replace_all(prompt, "{ground_truth}", gt_slot);
    replace_all(prompt, "{hypothesis}", hyp_slot);
    replace_all(prompt, "{{", "{");
    replace_all(prompt, "}}", "}");
    replace_all(prompt, gt_slot, ground_truth);
    replace_all(prompt, hyp_slot, hypothesis);
    return prompt;
}

Judgement judge_symbolic(std::string_view ground_truth, std::string_view hypothesis, llm::Client& client) {
    llm::Request request;
    request.messages.push_back({"user", judge_prompt(ground_truth, hypothesis), {}});
    std::string last;
    for (int attempt = 0; attempt < 2; ++attempt) {
        last = client.complete(request).text;
        if (auto v = read_verdict(last)) return *v;
    }
    Judgement out;
    out.reasoning = "judge output did not contain a yes/no answer";
    out.raw = last;
    return out;
}

bool judge_numeric(const Expr& ground_truth, const Expr& hypothesis, const NumericJudgeOptions& opts) {
    std::map<std::string, Interval> domain;
    for (const auto& v : variables(ground_truth)) domain[v] = opts.box;
    for (const auto& v : variables(hypothesis)) domain[v] = opts.box;
    try {
        return numeric_equivalent(ground_truth, hypothesis, domain, opts.points, opts.rel_tol).equivalent;
    } catch (const NumericError&) {
        return false;
    }
}

bool judge_numeric(const std::vector<Expr>& ground_truth, const std::vector<Expr>& hypothesis,
                   const NumericJudgeOptions& opts) {
    if (ground_truth.size() != hypothesis.size()) return false;
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
        if (!judge_numeric(ground_truth[i], hypothesis[i], opts)) return false;
    }
    return true;
}

MetricReport evaluate_system(const std::vector<std::string>& equations, const data::SystemSpec& spec,
                             const data::DatasetBundle& test, const NumericJudgeOptions& judge) {
    if (equations.size() != spec.states.size())
        throw ArgumentError(fmt::format("system '{}' has {} equations, got {}", spec.name, spec.states.size(),
                                        equations.size()));
    const auto names = spec.rhs_variables();
    const std::set<std::string> vars(names.begin(), names.end());
    std::vector<Expr> exprs;
    for (std::size_t i = 0; i < equations.size(); ++i) {
        try {
            exprs.push_back(parse(equations[i], vars));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("equation {} ('{}'): {}", i + 1, equations[i], e.what()), e.offset());
        }
    }

    MetricReport report;
    report.system = spec.name;
    const auto columns = test.all_names();
    for (std::size_t i = 0; i < exprs.size(); ++i) {
        EquationMetrics m;
        m.target = spec.states[i] + "_t";
        m.equation = equations[i];
        const Eigen::VectorXd y = test.column(m.target);
        const Eigen::VectorXd yhat = CompiledExpr(exprs[i], columns).evaluate(test.values());
        m.nmse_pointwise = yhat.allFinite() ? nmse_pointwise(y, yhat) : std::numeric_limits<double>::infinity();
        m.mape = sindy::mape(y, yhat);
        m.numeric_match = judge_numeric(spec.rhs[i], exprs[i], judge);
        report.equations.push_back(std::move(m));
    }
    report.long_term = long_term_nmse(exprs, spec, test);
    return report;
}

double mean_nmse(const std::vector<std::string>& equations, const data::DatasetBundle& bundle) {
    const auto targets = bundle.target_names();
    if (equations.size() != targets.size())
        throw ArgumentError(fmt::format("{} targets, got {} equations", targets.size(), equations.size()));
    const auto columns = bundle.all_names();
    const std::set<std::string> vars(columns.begin(), columns.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < equations.size(); ++i) {
        const Eigen::VectorXd yhat = CompiledExpr(parse(equations[i], vars), columns).evaluate(bundle.values());
        if (!yhat.allFinite()) return std::numeric_limits<double>::infinity();
        sum += nmse_pointwise(bundle.column(targets[i]), yhat);
    }
    return sum / static_cast<double>(equations.size());
}

nlohmann::json to_json(const MetricReport& report) {
    auto finite_or_null = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::json eqs = nlohmann::json::array();
    for (const auto& m : report.equations) {
        eqs.push_back({{"target", m.target},
                       {"equation", m.equation},
                       {"nmse_pointwise", finite_or_null(m.nmse_pointwise)},
                       {"mape", finite_or_null(m.mape)},
                       {"numeric_match", m.numeric_match}});
    }
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t k = 0; k < report.long_term.curve.times.size(); ++k)
        curve.push_back({report.long_term.curve.times[k], report.long_term.curve.nmse[k]});
    nlohmann::json lt{{"t_max", report.long_term.t_max},
                      {"nmse_at_tmax", finite_or_null(report.long_term.nmse_at_tmax)},
                      {"simulation_status", report.long_term.failed ? "failed" : "ok"},
                      {"error_curve", curve}};
    if (report.long_term.failure_time) lt["failure_time"] = *report.long_term.failure_time;
    nlohmann::json judgements = nlohmann::json::array();
    for (const auto& j : report.judgements)
        judgements.push_back({{"verdict", to_string(j.verdict)}, {"reasoning", j.reasoning}});
    return {{"system", report.system}, {"equations", eqs}, {"long_term", lt}, {"judgements", judgements}};
}

} // namespace physr::eval
