#include <chrono>
#include <fstream>

#include <fmt/format.h>

#include "physr/agent.hpp"
#include "physr/compiled_expr.hpp"
#include "physr/gpsr.hpp"
#include "physr/process.hpp"
#include "physr/resources.hpp"
#include "physr/sindy.hpp"
#include "physr/symmetry.hpp"

namespace physr::agent {

namespace {

Eigen::MatrixXd matrix_from(const ojson& j) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    return m;
}

ojson matrix_json(const Eigen::MatrixXd& m) {
    ojson out = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ojson row = ojson::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        out.push_back(row);
    }
    return out;
}

template <class T>
T arg_or(const ojson& args, const char* name, T fallback) {
    if (!args.contains(name) || args[name].is_null()) return fallback;
    if constexpr (std::is_same_v<T, int>) return static_cast<int>(args[name].get<double>());
    else return args[name].get<T>();
}

std::uint64_t seed_arg(const ojson& args, const ToolContext& ctx) {
    if (!args.contains("seed") || args["seed"].is_null()) return ctx.config.seed;
    return static_cast<std::uint64_t>(args["seed"].get<double>());
}

class SchemaTool : public Tool {
public:
    explicit SchemaTool(ToolSchema schema) : schema_(std::move(schema)) {}
    const ToolSchema& schema() const override { return schema_; }

private:
    ToolSchema schema_;
};

// ---------------------------------------------------------------------------

class SindyTool : public SchemaTool {
public:
    SindyTool()
        : SchemaTool({"sindy",
                      {},
                      "Sparse regression of each time-derivative target onto a library of polynomial terms in the "
                      "states (and, for PDE data, spatial-derivative terms and their products with the states). "
                      "Returns the right-hand sides and the training MAPE. With use_symmetry, coefficients are "
                      "restricted to models equivariant under the linear vector field generated by lie_generator "
                      "(a q x q matrix over the q state variables, e.g. the output of symmetry_discovery).",
                      {{"data_file", ParamType::String, true, nullptr, "dataset in the workspace"},
                       {"polynomial_degree", ParamType::Integer, false, 3, "highest total degree of state monomials"},
                       {"threshold", ParamType::Number, false, 0.05,
                        "coefficients below this magnitude are pruned in each round"},
                       {"derivative_order", ParamType::Integer, false, 2,
                        "highest spatial-derivative order in the library (PDE data only)"},
                       {"include_constant", ParamType::Boolean, false, true, "include the constant term"},
                       {"normalize_columns", ParamType::Boolean, false, false,
                        "scale library columns to unit norm before thresholding"},
                       {"use_symmetry", ParamType::Boolean, false, false,
                        "fit inside the equivariant subspace of lie_generator"},
                       {"lie_generator", ParamType::Matrix, false, nullptr,
                        "q x q generator, required when use_symmetry is true"}}}) {}

    ToolOutcome run(const ojson& args, ToolContext& ctx) const override {
        const auto& bundle = ctx.bundle(args["data_file"].get<std::string>());
        sindy::LibrarySpec spec;
        spec.polynomial_degree = arg_or(args, "polynomial_degree", spec.polynomial_degree);
        spec.threshold = arg_or(args, "threshold", spec.threshold);
        spec.derivative_order = arg_or(args, "derivative_order", spec.derivative_order);
        spec.include_constant = arg_or(args, "include_constant", spec.include_constant);
        spec.normalize_columns = arg_or(args, "normalize_columns", spec.normalize_columns);
        const bool use_symmetry = arg_or(args, "use_symmetry", false);
        std::optional<Eigen::MatrixXd> generator;
        if (use_symmetry) {
            if (!args.contains("lie_generator") || args["lie_generator"].is_null())
                throw ArgumentError("sindy: use_symmetry needs lie_generator");
            generator = matrix_from(args["lie_generator"]);
        }
        const auto model = sindy::fit_sindy(bundle, spec, use_symmetry, generator);

        ToolOutcome out;
        out.result["result_type"] = "equation";
        out.result["equations"] = model.equation_strings(3);
        out.result["mape"] = model.diagnostics.mape;
        out.details["targets"] = model.target_names;
        out.details["mape_per_target"] = model.diagnostics.mape_per_target;
        out.details["library_size"] = model.library.size();
        if (model.diagnostics.nullspace_dim) out.details["equivariant_dimension"] = *model.diagnostics.nullspace_dim;
        if (model.diagnostics.all_pruned) out.details["warning"] = "every coefficient was pruned";
        return out;
    }
};

// ---------------------------------------------------------------------------

class SymmetryTool : public SchemaTool {
public:
    SymmetryTool()
        : SchemaTool({"symmetry_discovery",
                      {},
                      "Fits a small neural network that predicts the time derivatives from the states and their "
                      "spatial derivatives, then searches for a unit-norm q x q matrix A such that the fitted "
                      "dynamics are equivariant under the linear vector field (A x) . grad. Returns A "
                      "(lie_generator), the predictor's held-out loss and the equivariance loss of A.",
                      {{"data_file", ParamType::String, true, nullptr, "ODE or PDE dataset in the workspace"},
                       {"hidden", ParamType::Integer, false, 64, "hidden width of the predictor"},
                       {"epochs", ParamType::Integer, false, 2000, "predictor training epochs"},
                       {"restarts", ParamType::Integer, false, 8, "random restarts of the generator search"},
                       {"steps", ParamType::Integer, false, 1500, "optimizer steps per restart"},
                       {"seed", ParamType::Integer, false, nullptr, "random seed"}}}) {}

    ToolOutcome run(const ojson& args, ToolContext& ctx) const override {
        const auto& bundle = ctx.bundle(args["data_file"].get<std::string>());
        symmetry::SurrogateConfig scfg;
        symmetry::DiscoveryConfig dcfg;
        scfg.hidden = arg_or(args, "hidden", scfg.hidden);
        scfg.epochs = arg_or(args, "epochs", scfg.epochs);
        dcfg.restarts = arg_or(args, "restarts", dcfg.restarts);
        dcfg.steps = arg_or(args, "steps", dcfg.steps);
        scfg.seed = dcfg.seed = seed_arg(args, ctx);
        const auto g = symmetry::discover_symmetry(bundle, scfg, dcfg);

        ToolOutcome out;
        out.result["result_type"] = "symmetry";
        out.result["lie_generator"] = matrix_json(g.A);
        out.result["predictor_loss"] = g.predictor_loss;
        out.result["symmetry_loss"] = g.symmetry_loss;
        out.details["states"] = bundle.state_names();
        out.details["restart"] = g.restart;
        return out;
    }
};

// ---------------------------------------------------------------------------

class PysrTool : public SchemaTool {
public:
    PysrTool()
        : SchemaTool(
              {"pysr",
               {"gpsr"},
               "Genetic-programming symbolic regression: evolves expression trees for each target and returns, "
               "per target, the expression with the best accuracy-complexity trade-off on its Pareto front, plus "
               "the aggregate MAPE. A template in expression_spec fixes the outer structure: \"combine\" is an "
               "expression over the variables and named sub-functions, e.g. \"sin(f(x1)) + g(x2, x3)\", and only "
               "the sub-functions are evolved. Think about the template first; it narrows the search the most.",
               {{"input_file", ParamType::String, true, nullptr, "dataset in the workspace"},
                {"target", ParamType::String, false, nullptr, "fit only this target column (default: all targets)"},
                {"binary_operators", ParamType::StringList, false, ojson::array({"+", "-", "*", "/"}),
                 "from +, -, *, /, ^"},
                {"unary_operators", ParamType::StringList, false, ojson::array(),
                 "from neg, sin, cos, tan, cot, exp, log, sqrt, abs"},
                {"niterations", ParamType::Integer, false, 40, "generations"},
                {"populations", ParamType::Integer, false, 15, "number of islands"},
                {"population_size", ParamType::Integer, false, 33, "expressions per island"},
                {"maxsize", ParamType::Integer, false, 30, "largest expression size in nodes"},
                {"parsimony", ParamType::Number, false, 0.0032, "complexity penalty per node"},
                {"constraints", ParamType::Object, false, nullptr,
                 "operand size caps, e.g. {\"/\": [-1, 5], \"sin\": 5}; -1 is unlimited"},
                {"nested_constraints", ParamType::Object, false, nullptr,
                 "nesting limits, e.g. {\"sin\": {\"sin\": 0, \"cos\": 0}}"},
                {"expression_spec", ParamType::Object, false, nullptr,
                 "template: {\"combine\": \"...\", \"expressions\": [\"f\", \"g\"], \"variable_names\": [...]}; "
                 "expressions and variable_names are optional"},
                {"seed", ParamType::Integer, false, nullptr, "random seed"}}}) {}

    ToolOutcome run(const ojson& args, ToolContext& ctx) const override {
        const auto& bundle = ctx.bundle(args["input_file"].get<std::string>());
        gp::GpConfig cfg;
        if (args.contains("binary_operators") && !args["binary_operators"].is_null()) {
            cfg.binary_operators.clear();
            for (const auto& name : args["binary_operators"]) {
                const auto op = binary_from_name(name.get<std::string>());
                if (!op) throw ArgumentError(fmt::format("pysr: unknown binary operator '{}'", name.get<std::string>()));
                cfg.binary_operators.push_back(*op);
            }
        }
        if (args.contains("unary_operators") && !args["unary_operators"].is_null()) {
            for (const auto& name : args["unary_operators"]) {
                const auto op = unary_from_name(name.get<std::string>());
                if (!op) throw ArgumentError(fmt::format("pysr: unknown unary operator '{}'", name.get<std::string>()));
                cfg.unary_operators.push_back(*op);
            }
        }
        cfg.niterations = arg_or(args, "niterations", cfg.niterations);
        cfg.populations = arg_or(args, "populations", cfg.populations);
        cfg.population_size = arg_or(args, "population_size", cfg.population_size);
        cfg.max_size = arg_or(args, "maxsize", cfg.max_size);
        cfg.parsimony = arg_or(args, "parsimony", cfg.parsimony);
        if (args.contains("constraints") && !args["constraints"].is_null())
            cfg.constraints = gp::constraints_from_json(nlohmann::json::parse(args["constraints"].dump()));
        if (args.contains("nested_constraints") && !args["nested_constraints"].is_null())
            cfg.nested_constraints =
                gp::nested_constraints_from_json(nlohmann::json::parse(args["nested_constraints"].dump()));
        cfg.seed = seed_arg(args, ctx);
        gp::validate(cfg);

        std::optional<gp::Template> tmpl;
        if (args.contains("expression_spec") && !args["expression_spec"].is_null()) {
            const auto& es = args["expression_spec"];
            if (!es.contains("combine") || !es["combine"].is_string())
                throw ArgumentError("pysr: expression_spec needs a \"combine\" string");
            std::vector<std::string> vars = bundle.feature_names();
            if (es.contains("variable_names")) vars = es["variable_names"].get<std::vector<std::string>>();
            std::vector<std::string> holes;
            if (es.contains("expressions")) holes = es["expressions"].get<std::vector<std::string>>();
            tmpl = gp::parse_template(es["combine"].get<std::string>(), vars, holes);
        }

        std::vector<std::string> targets = bundle.target_names();
        if (args.contains("target") && !args["target"].is_null()) {
            const auto t = args["target"].get<std::string>();
            if (std::find(targets.begin(), targets.end(), t) == targets.end())
                throw ArgumentError(fmt::format("pysr: '{}' is not a target column", t));
            targets = {t};
        }
        if (targets.empty()) throw DataError("pysr: the dataset has no target column");

        ToolOutcome out;
        std::vector<std::string> equations;
        const Eigen::MatrixXd y = bundle.matrix(targets);
        Eigen::MatrixXd yhat(y.rows(), y.cols());
        ojson per_target = ojson::array();
        const auto names = bundle.all_names();
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const auto res = gp::fit(bundle, cfg, tmpl, targets[i]);
            equations.push_back(render(res.selected.expression));
            yhat.col(static_cast<Eigen::Index>(i)) = CompiledExpr(res.selected.expression, names).evaluate(bundle.values());
            ojson front = ojson::array();
            for (const auto& [c, cand] : res.front.entries())
                front.push_back({{"complexity", c}, {"loss", cand.loss}, {"equation", render(cand.expression)}});
            per_target.push_back({{"target", targets[i]},
                                  {"complexity", res.selected.complexity},
                                  {"loss", res.selected.loss},
                                  {"pareto_front", front}});
        }
        out.result["result_type"] = "equation";
        out.result["equations"] = equations;
        out.result["mape"] = sindy::mape(y, yhat);
        out.details["targets"] = per_target;
        return out;
    }
};

// ---------------------------------------------------------------------------

constexpr const char* kPrelude = R"(import json as _physr_json

def register_file(path, description=""):
    with open(_PHYSR_REGISTRY, "a") as _f:
        _f.write(_physr_json.dumps({"path": str(path), "description": str(description)}) + "\n")

)";

class PythonTool : public SchemaTool {
public:
    PythonTool()
        : SchemaTool({"python_interpreter",
                      {"python_intepreter"},
                      "Runs Python code with the workspace as working directory and returns what it prints. Use it "
                      "for exploratory analysis only (loading data files, summary statistics, plots), not for the "
                      "regression itself. Report findings with print(). Every file the code saves must also be "
                      "passed to the predefined register_file(path, description) so that it shows up in the "
                      "workspace list. Data bundles are directories holding meta.json and data.csv. When the code "
                      "argument is omitted, the python code blocks of your reply are used in order.",
                      {{"code", ParamType::String, true, nullptr, "Python source"}}}) {}

    ToolOutcome run(const ojson& args, ToolContext& ctx) const override {
        const auto root = ctx.workspace.root();
        std::string tag = ctx.step;
        std::replace(tag.begin(), tag.end(), '.', '_');
        const auto script = root / fmt::format("_code_{}.py", tag);
        const auto registry = root / "_registry.jsonl";
        std::filesystem::remove(registry);
        {
            std::ofstream out(script);
            if (!out) throw Error(fmt::format("cannot write '{}'", script.string()));
            out << "_PHYSR_REGISTRY = " << nlohmann::json(std::filesystem::absolute(registry).string()).dump() << "\n"
                << kPrelude << args["code"].get<std::string>() << "\n";
        }
        const auto res = run_process({ctx.config.python, script.filename().string()}, root,
                                     std::chrono::seconds(ctx.config.interpreter_timeout_s), 1 << 20);

        ojson registered = ojson::array();
        if (std::ifstream in(registry); in) {
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                try {
                    const auto j = nlohmann::json::parse(line);
                    std::filesystem::path p(j.at("path").get<std::string>());
                    if (p.is_absolute()) p = p.lexically_relative(std::filesystem::absolute(root));
                    const std::string rel = p.lexically_normal().generic_string();
                    ctx.workspace.resolve(rel);
                    ctx.workspace.add(rel, j.value("description", ""));
                    registered.push_back(rel);
                } catch (const std::exception&) {
                    // Paths outside the workspace and malformed lines are ignored.
                }
            }
        }
        std::filesystem::remove(registry);

        std::string output = res.out;
        const bool cut = output.size() > ctx.config.stdout_limit || res.out_truncated;
        if (output.size() > ctx.config.stdout_limit) output.resize(ctx.config.stdout_limit);
        if (cut) output += "\n[output truncated]";

        ToolOutcome out;
        out.details["registered_files"] = registered;
        out.details["exit_code"] = res.exit_code;
        if (res.timed_out || res.exit_code != 0) {
            out.success = false;
            out.result["error"] = res.timed_out ? fmt::format("timed out after {} s", ctx.config.interpreter_timeout_s)
                                                : fmt::format("exit code {}", res.exit_code);
            std::string err = res.err;
            if (err.size() > 2000) err = "..." + err.substr(err.size() - 2000);
            if (!err.empty()) out.result["stderr"] = err;
            if (!output.empty()) out.result["output"] = output;
            return out;
        }
        out.result["result_type"] = "analysis";
        out.result["output"] = output;
        if (!registered.empty()) out.result["registered_files"] = registered;
        return out;
    }
};

// ---------------------------------------------------------------------------

class VisualTool : public SchemaTool {
public:
    VisualTool()
        : SchemaTool({"visual_subagent",
                      {},
                      "Sends an image from the workspace to a vision model that describes trends, periodicity, "
                      "plausible functional forms, noise and suggested operators or templates for symbolic "
                      "regression. Returns its JSON analysis.",
                      {{"image_path", ParamType::String, true, nullptr, "image file in the workspace"},
                       {"context", ParamType::String, false, nullptr, "what the plot shows or how the data arose"},
                       {"focus_areas", ParamType::StringList, false, nullptr,
                        "aspects to concentrate on, e.g. [\"periodicity\", \"noise level\"]"}}}) {}

    ToolOutcome run(const ojson& args, ToolContext& ctx) const override {
        if (!ctx.client) throw Error("visual_subagent: no model client configured");
        const auto image_path = args["image_path"].get<std::string>();
        const auto path = ctx.workspace.resolve(image_path);
        if (!std::filesystem::is_regular_file(path))
            throw DataError(fmt::format("visual_subagent: image '{}' not found in the workspace", image_path));

        std::string text = fmt::format("Image: {}", image_path);
        if (args.contains("context") && args["context"].is_string())
            text += "\n\nContext: " + args["context"].get<std::string>();
        if (args.contains("focus_areas") && args["focus_areas"].is_array() && !args["focus_areas"].empty()) {
            text += "\n\nFocus areas:";
            for (const auto& f : args["focus_areas"]) text += "\n- " + f.get<std::string>();
        }
        llm::Request request;
        request.messages.push_back({"system", std::string(resources::visual_subagent_prompt()), {}});
        request.messages.push_back({"user", text, {llm::load_image(path)}});
        request.temperature = ctx.config.temperature;
        request.max_tokens = ctx.config.max_tokens;
        const auto response = ctx.client->complete(request);
        if (ctx.tokens) ctx.tokens->add(request, response);

        ToolOutcome out;
        out.result["result_type"] = "analysis";
        if (auto j = llm::last_json_object(response.text)) out.result["analysis"] = *j;
        else out.result["analysis"] = response.text;
        out.details["raw"] = response.text;
        return out;
    }
};

} // namespace

std::unique_ptr<Tool> make_sindy_tool() { return std::make_unique<SindyTool>(); }
std::unique_ptr<Tool> make_symmetry_tool() { return std::make_unique<SymmetryTool>(); }
std::unique_ptr<Tool> make_pysr_tool() { return std::make_unique<PysrTool>(); }
std::unique_ptr<Tool> make_python_tool() { return std::make_unique<PythonTool>(); }
std::unique_ptr<Tool> make_visual_tool() { return std::make_unique<VisualTool>(); }

} // namespace physr::agent
