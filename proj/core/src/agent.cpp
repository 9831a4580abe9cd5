#include "physr/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "physr/compiled_expr.hpp"
#include "physr/expr.hpp"
#include "physr/resources.hpp"
#include "physr/sindy.hpp"

namespace physr::agent {

// ---------------------------------------------------------------------------
// Workspace

void Workspace::add(const std::string& path, const std::string& description) {
    for (auto& [p, d] : files_) {
        if (p == path) {
            d = description;
            return;
        }
    }
    files_.emplace_back(path, description);
}

bool Workspace::contains(const std::string& path) const {
    return std::any_of(files_.begin(), files_.end(), [&](const auto& f) { return f.first == path; });
}

std::filesystem::path Workspace::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    if (path.empty() || p.is_absolute()) throw ArgumentError(fmt::format("'{}' is not a workspace path", path));
    const auto norm = p.lexically_normal();
    if (norm.empty() || *norm.begin() == "..") throw ArgumentError(fmt::format("'{}' leaves the workspace", path));
    return root_ / norm;
}

// ---------------------------------------------------------------------------
// Records and rendering

std::optional<double> ToolRecord::mape() const {
    if (!success || !result.contains("mape") || !result["mape"].is_number()) return std::nullopt;
    return result["mape"].get<double>();
}

std::vector<std::string> ToolRecord::equations() const {
    std::vector<std::string> out;
    if (!result.contains("equations") || !result["equations"].is_array()) return out;
    for (const auto& e : result["equations"]) out.push_back(e.get<std::string>());
    return out;
}

namespace {

std::string python_string(const std::string& s) {
    const bool has_single = s.find('\'') != std::string::npos;
    const bool has_double = s.find('"') != std::string::npos;
    const char quote = has_single && !has_double ? '"' : '\'';
    std::string out(1, quote);
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default:
            if (c == quote) out += '\\';
            out += c;
        }
    }
    out += quote;
    return out;
}

std::string python_float(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::string s = fmt::format("{}", v);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

std::string indent_block(const std::string& text) {
    std::string out = "|";
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        const auto line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
        out += "\n    " + line;
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

std::string render_value(const ojson& v) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        return s.find('\n') == std::string::npos ? s : indent_block(s);
    }
    return python_repr(v);
}

std::string render_result_field(const std::string& key, const ojson& v) {
    if (key == "equations" && v.is_array()) {
        std::string out = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            out += "\n    " + python_repr(v[i]);
            if (i + 1 < v.size()) out += ",";
        }
        return out + "\n    ]";
    }
    if (key == "mape" && v.is_number()) return fmt::format("{:.3f}%", v.get<double>());
    if (key.size() > 5 && key.compare(key.size() - 5, 5, "_loss") == 0 && v.is_number())
        return fmt::format("{:.6f}", v.get<double>());
    return render_value(v);
}

} // namespace

std::string python_repr(const ojson& v) {
    switch (v.type()) {
    case ojson::value_t::null: return "None";
    case ojson::value_t::boolean: return v.get<bool>() ? "True" : "False";
    case ojson::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
    case ojson::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
    case ojson::value_t::number_float: return python_float(v.get<double>());
    case ojson::value_t::string: return python_string(v.get<std::string>());
    case ojson::value_t::array: {
        std::string out = "[";
        for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + python_repr(v[i]);
        return out + "]";
    }
    case ojson::value_t::object: {
        std::string out = "{";
        bool first = true;
        for (const auto& [k, x] : v.items()) {
            out += (first ? "" : ", ") + python_string(k) + ": " + python_repr(x);
            first = false;
        }
        return out + "}";
    }
    default: return v.dump();
    }
}

std::string render_record(const ToolRecord& r) {
    std::string out = fmt::format("### Step {}: {}\n**Arguments:**\n", r.step, r.tool);
    if (r.args.empty()) out += "  (none)\n";
    for (const auto& [k, v] : r.args.items()) out += fmt::format("  - {}: {}\n", k, render_value(v));
    out += "**Result:**\n";
    out += fmt::format("  - Status: {}\n", r.success ? "success" : "error");
    for (const auto& [k, v] : r.result.items()) out += fmt::format("  - {}: {}\n", k, render_result_field(k, v));
    if (r.duplicate_of)
        out += fmt::format("  - note: same tool and arguments as Step {}\n", *r.duplicate_of);
    return out;
}

std::string render_log(const std::vector<ToolRecord>& log) {
    std::string out = "## Experience Log\n";
    if (log.empty()) return out + "\nNo tool calls yet.\n";
    for (const auto& r : log) out += "\n" + render_record(r);
    return out;
}

ojson to_json(const ToolRecord& r) {
    ojson j{{"step", r.step}, {"tool", r.tool},       {"args", r.args},
            {"status", r.success ? "success" : "error"}, {"result", r.result}, {"details", r.details}};
    if (r.duplicate_of) j["duplicate_of"] = *r.duplicate_of;
    return j;
}

ToolRecord record_from_json(const ojson& j) {
    try {
        ToolRecord r;
        r.step = j.at("step").get<std::string>();
        r.tool = j.at("tool").get<std::string>();
        r.args = j.at("args");
        r.success = j.at("status").get<std::string>() == "success";
        r.result = j.at("result");
        if (j.contains("details")) r.details = j["details"];
        if (j.contains("duplicate_of")) r.duplicate_of = j["duplicate_of"].get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("malformed log record: {}", e.what()));
    }
}

// ---------------------------------------------------------------------------
// Decisions

namespace {

ToolCall read_call(const ojson& j, const std::string& where) {
    if (!j.is_object()) throw DecisionError(where + " must be an object");
    if (!j.contains("tool_name") || !j["tool_name"].is_string())
        throw DecisionError(where + " needs a string \"tool_name\"");
    ToolCall call;
    call.tool_name = j["tool_name"].get<std::string>();
    if (j.contains("args")) {
        if (!j["args"].is_object()) throw DecisionError(where + ": \"args\" must be an object");
        call.args = j["args"];
    }
    return call;
}

} // namespace

ToolDecision parse_decision(std::string_view text) {
    std::string error;
    const auto j = llm::last_json_object(text, &error);
    if (!j) throw DecisionError(error);
    const int shapes = static_cast<int>(j->contains("tool_call")) + static_cast<int>(j->contains("tool_calls")) +
                       static_cast<int>(j->contains("final_result"));
    if (shapes != 1)
        throw DecisionError("the JSON object must have exactly one of \"tool_call\", \"tool_calls\" or \"final_result\"");

    ToolDecision d;
    if (j->contains("tool_call")) {
        d.calls.push_back(read_call((*j)["tool_call"], "\"tool_call\""));
    } else if (j->contains("tool_calls")) {
        const auto& calls = (*j)["tool_calls"];
        if (!calls.is_array() || calls.empty() || calls.size() > 3)
            throw DecisionError("\"tool_calls\" must be a list of 1 to 3 calls");
        for (std::size_t i = 0; i < calls.size(); ++i)
            d.calls.push_back(read_call(calls[i], fmt::format("\"tool_calls\"[{}]", i)));
    } else {
        const auto& fr = (*j)["final_result"];
        std::vector<std::string> eqs;
        if (fr.is_string()) {
            eqs.push_back(fr.get<std::string>());
        } else if (fr.is_array() && !fr.empty()) {
            for (const auto& e : fr) {
                if (!e.is_string()) throw DecisionError("\"final_result\" entries must be strings");
                eqs.push_back(e.get<std::string>());
            }
        } else {
            throw DecisionError("\"final_result\" must be a string or a non-empty list of strings");
        }
        for (const auto& e : eqs) {
            if (e.find('=') != std::string::npos)
                throw DecisionError("\"final_result\" must hold right-hand sides only, without \"=\"");
        }
        d.final_result = std::move(eqs);
    }
    return d;
}

std::vector<std::string> python_blocks(std::string_view text) {
    static const std::regex block(R"(```(?:python|py)[ \t]*\r?\n([\s\S]*?)```)");
    std::vector<std::string> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), block); it != std::sregex_iterator(); ++it)
        out.push_back((*it)[1].str());
    return out;
}

// ---------------------------------------------------------------------------
// Tool schemas

namespace {

std::string_view type_name(ParamType t) {
    switch (t) {
    case ParamType::String: return "string";
    case ParamType::Integer: return "integer";
    case ParamType::Number: return "number";
    case ParamType::Boolean: return "boolean";
    case ParamType::StringList: return "list of strings";
    case ParamType::Matrix: return "list of lists of numbers";
    case ParamType::Object: return "object";
    }
    return "value";
}

bool type_matches(ParamType t, const ojson& v) {
    switch (t) {
    case ParamType::String: return v.is_string();
    case ParamType::Integer:
        return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    case ParamType::Number: return v.is_number();
    case ParamType::Boolean: return v.is_boolean();
    case ParamType::StringList:
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const ojson& x) { return x.is_string(); });
    case ParamType::Matrix: {
        if (!v.is_array() || v.empty()) return false;
        for (const auto& row : v) {
            if (!row.is_array() || row.size() != v[0].size() || row.empty()) return false;
            for (const auto& x : row)
                if (!x.is_number()) return false;
        }
        return true;
    }
    case ParamType::Object: return v.is_object();
    }
    return false;
}

} // namespace

void validate_args(const ToolSchema& schema, const ojson& args) {
    if (!args.is_object()) throw ArgumentError(fmt::format("{}: arguments must be an object", schema.name));
    for (const auto& [k, v] : args.items()) {
        const auto it = std::find_if(schema.params.begin(), schema.params.end(),
                                     [&](const ParamSpec& p) { return p.name == k; });
        if (it == schema.params.end()) {
            std::string names;
            for (const auto& p : schema.params) names += (names.empty() ? "" : ", ") + p.name;
            throw ArgumentError(fmt::format("{}: unknown argument '{}' (accepted: {})", schema.name, k, names));
        }
        if (v.is_null() && !it->required) continue;
        if (!type_matches(it->type, v))
            throw ArgumentError(fmt::format("{}: argument '{}' must be a {}", schema.name, k, type_name(it->type)));
    }
    for (const auto& p : schema.params) {
        if (p.required && (!args.contains(p.name) || args[p.name].is_null()))
            throw ArgumentError(fmt::format("{}: missing required argument '{}'", schema.name, p.name));
    }
}

std::string render_schema(const ToolSchema& schema) {
    std::string out = fmt::format("### {}\n{}\n**Arguments:**\n", schema.name, schema.description);
    for (const auto& p : schema.params) {
        std::string qual(type_name(p.type));
        if (p.required) qual += ", required";
        else if (!p.default_value.is_null()) qual += ", default " + python_repr(p.default_value);
        else qual += ", optional";
        out += fmt::format("  - {} ({}): {}\n", p.name, qual, p.description);
    }
    if (!schema.aliases.empty()) {
        std::string names;
        for (const auto& a : schema.aliases) names += (names.empty() ? "" : ", ") + a;
        out += fmt::format("Also accepted as: {}\n", names);
    }
    return out;
}

void ToolRegistry::add(std::unique_ptr<Tool> tool) {
    for (const auto& name : [&] {
             auto names = tool->schema().aliases;
             names.push_back(tool->schema().name);
             return names;
         }()) {
        if (find(name)) throw ArgumentError(fmt::format("tool name '{}' registered twice", name));
    }
    tools_.push_back(std::move(tool));
}

const Tool* ToolRegistry::find(std::string_view name) const {
    for (const auto& t : tools_) {
        const auto& s = t->schema();
        if (s.name == name) return t.get();
        if (std::find(s.aliases.begin(), s.aliases.end(), name) != s.aliases.end()) return t.get();
    }
    return nullptr;
}

std::string ToolRegistry::render() const {
    std::string out = "## Tool Specifications\n";
    for (const auto& t : tools_) out += "\n" + render_schema(t->schema());
    return out;
}

ToolRegistry default_tools() {
    ToolRegistry r;
    r.add(make_python_tool());
    r.add(make_visual_tool());
    r.add(make_symmetry_tool());
    r.add(make_sindy_tool());
    r.add(make_pysr_tool());
    return r;
}

// ---------------------------------------------------------------------------
// Execution

void TokenTotals::add(const llm::Request& request, const llm::Response& response) {
    if (response.usage) {
        prompt += response.usage->prompt_tokens;
        completion += response.usage->completion_tokens;
        return;
    }
    std::size_t chars = 0;
    for (const auto& m : request.messages) chars += m.content.size();
    prompt += static_cast<std::int64_t>((chars + 3) / 4);
    completion += static_cast<std::int64_t>((response.text.size() + 3) / 4);
    approximate = true;
}

const data::DatasetBundle& ToolContext::bundle(const std::string& name) {
    const auto given = workspace.resolve(name);
    std::vector<std::filesystem::path> candidates{given};
    if (given.has_extension()) candidates.push_back(std::filesystem::path(given).replace_extension());
    candidates.push_back(std::filesystem::path(given.string() + ".csv"));
    for (const auto& c : candidates) {
        if (!std::filesystem::exists(c)) continue;
        const std::string key = c.string();
        if (bundle_cache) {
            if (auto it = bundle_cache->find(key); it != bundle_cache->end()) return it->second;
            return bundle_cache->emplace(key, data::load(c)).first->second;
        }
        throw Error("tool context has no bundle cache");
    }
    throw DataError(fmt::format("data file '{}' not found in the workspace", name));
}

ToolRecord execute_tool(const ToolRegistry& tools, const ToolCall& call, ToolContext& ctx) {
    ToolRecord rec;
    rec.step = ctx.step;
    rec.tool = call.tool_name;
    rec.args = call.args;
    const Tool* tool = tools.find(call.tool_name);
    if (!tool) {
        std::string names;
        for (const auto& t : tools.tools()) names += (names.empty() ? "" : ", ") + t->schema().name;
        rec.result["error"] = fmt::format("unknown tool '{}' (available: {})", call.tool_name, names);
        return rec;
    }
    rec.tool = tool->schema().name;
    try {
        validate_args(tool->schema(), call.args);
        ToolOutcome out = tool->run(call.args, ctx);
        rec.success = out.success;
        rec.result = std::move(out.result);
        rec.details = std::move(out.details);
    } catch (const std::exception& e) {
        rec.success = false;
        rec.result = ojson::object();
        rec.result["error"] = e.what();
    }
    return rec;
}

namespace {

std::string describe_bundle(const data::DatasetBundle& b) {
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
        return s;
    };
    std::string d = fmt::format("{} dataset, {} rows", data::to_string(b.meta().kind), b.rows());
    if (b.meta().kind != data::SystemKind::Tabular) d += fmt::format(", {} time points", b.times().size());
    return d + fmt::format("; features: {}; targets: {}", join(b.feature_names()), join(b.target_names()));
}

} // namespace

AgentState initial_state(const std::filesystem::path& workspace, const std::string& data_file) {
    AgentState s;
    s.workspace = Workspace(workspace);
    s.data_file = data_file;
    std::map<std::string, data::DatasetBundle> cache;
    AgentConfig cfg;
    ToolContext ctx{s.workspace, cfg, nullptr, nullptr, "0", &cache};
    s.workspace.add(data_file, describe_bundle(ctx.bundle(data_file)));
    return s;
}

std::string default_query(const data::DatasetBundle& bundle, const std::string& data_file) {
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
        return s;
    };
    const auto targets = bundle.target_names();
    std::string q = fmt::format("The workspace file `{}` holds observations of a ", data_file);
    if (bundle.meta().kind == data::SystemKind::Ode) q += "system of ordinary differential equations";
    else if (bundle.meta().kind == data::SystemKind::Pde) q += "system of partial differential equations on a periodic 2D grid";
    else q += "static input-output relationship";
    q += fmt::format(". Find a symbolic expression for each target ({}) in terms of the features ({}).", join(targets),
                     join(bundle.feature_names()));
    if (targets.size() > 1) q += " Report the right-hand sides in the order the targets are listed.";
    return q;
}

std::vector<llm::Message> assemble_context(const AgentState& state, const ToolRegistry& tools,
                                           const std::string& query) {
    std::string system(resources::agent_system_prompt());
    while (!system.empty() && (system.back() == '\n' || system.back() == ' ')) system.pop_back();
    system += "\n\n" + tools.render();

    std::string user = "## User Query\n\n" + query + "\n\n## Workspace Files\n\n";
    for (const auto& [path, desc] : state.workspace.files()) user += fmt::format("- {}: {}\n", path, desc);
    user += "\n" + render_log(state.log);
    return {{"system", system, {}}, {"user", user, {}}};
}

bool dispatch(const ToolDecision& decision, std::string_view reply, AgentState& state, const ToolRegistry& tools,
              llm::Client* client, const AgentConfig& config) {
    const auto blocks = python_blocks(reply);
    std::size_t next_block = 0;
    std::map<std::string, data::DatasetBundle> cache;
    const bool batch = decision.calls.size() > 1;
    for (std::size_t i = 0; i < decision.calls.size(); ++i) {
        ToolCall call = decision.calls[i];
        const Tool* tool = tools.find(call.tool_name);
        if (tool && tool->schema().name == "python_interpreter" && !call.args.contains("code") &&
            next_block < blocks.size())
            call.args["code"] = blocks[next_block++];

        ToolContext ctx{state.workspace, config, client, &state.tokens,
                        batch ? fmt::format("{}.{}", state.steps_used, i + 1) : std::to_string(state.steps_used),
                        &cache};
        ToolRecord rec = execute_tool(tools, call, ctx);

        const nlohmann::json args_key = nlohmann::json::parse(rec.args.dump());
        for (const auto& prev : state.log) {
            if (prev.tool == rec.tool && nlohmann::json::parse(prev.args.dump()) == args_key) {
                rec.duplicate_of = prev.step;
                break;
            }
        }
        state.log.push_back(rec);

        if (const auto m = rec.mape()) {
            if (!state.best || *m < state.best->mape) state.best = BestResult{rec.equations(), *m, rec.step};
            if (*m < config.mape_stop) return true;
        }
    }
    return false;
}

namespace {

std::string corrective_message(const std::string& error) {
    return fmt::format("Your previous response could not be used: {}. Reply again: give your reasoning, then end "
                       "with exactly one valid JSON object (no comments) using \"tool_call\", \"tool_calls\" or "
                       "\"final_result\".",
                       error);
}

} // namespace

RunReport run(AgentState& state, const ToolRegistry& tools, llm::Client& client, const std::string& query,
              const AgentConfig& config) {
    RunReport report;
    report.max_steps = config.max_steps;
    std::optional<std::vector<std::string>> final_eqs;

    try {
        while (state.steps_used < config.max_steps) {
            llm::Request request{assemble_context(state, tools, query), config.temperature, config.max_tokens};
            std::optional<ToolDecision> decision;
            std::string reply;
            std::string error;
            for (int attempt = 0; attempt <= config.decision_retries; ++attempt) {
                const llm::Response response = client.complete(request);
                ++state.llm_calls;
                state.tokens.add(request, response);
                reply = response.text;
                try {
                    decision = parse_decision(reply);
                    break;
                } catch (const DecisionError& e) {
                    error = e.what();
                    request.messages.push_back({"assistant", reply, {}});
                    request.messages.push_back({"user", corrective_message(error), {}});
                }
            }
            ++state.steps_used;
            if (!decision) {
                ToolRecord rec;
                rec.step = std::to_string(state.steps_used);
                rec.tool = "decision";
                rec.result["error"] = fmt::format("no usable decision after {} attempts: {}",
                                                  config.decision_retries + 1, error);
                state.log.push_back(std::move(rec));
                continue;
            }
            if (decision->terminal()) {
                final_eqs = decision->final_result;
                report.stop_reason = "final_result";
                break;
            }
            if (dispatch(*decision, reply, state, tools, &client, config)) {
                report.stop_reason = "mape_threshold";
                break;
            }
        }
        if (report.stop_reason.empty()) report.stop_reason = "max_steps";
    } catch (const llm::TransportError& e) {
        report.stop_reason = "client_error";
        report.error = e.what();
    } catch (const llm::ReplayMismatchError& e) {
        report.stop_reason = "client_error";
        report.error = e.what();
    }

    if (final_eqs) {
        // Score the stated result on the dataset when its equations parse.
        try {
            std::map<std::string, data::DatasetBundle> cache;
            ToolContext ctx{state.workspace, config, nullptr, nullptr, "final", &cache};
            const auto& bundle = ctx.bundle(state.data_file);
            const auto names = bundle.all_names();
            const std::set<std::string> vars(names.begin(), names.end());
            std::vector<Expr> exprs;
            for (const auto& e : *final_eqs) exprs.push_back(parse(e, vars));
            report.equations = *final_eqs;
            report.source = "final_result";
            const auto targets = bundle.target_names();
            if (exprs.size() == targets.size()) {
                const Eigen::MatrixXd y = bundle.matrix(targets);
                Eigen::MatrixXd yhat(y.rows(), y.cols());
                for (std::size_t i = 0; i < exprs.size(); ++i)
                    yhat.col(static_cast<Eigen::Index>(i)) = CompiledExpr(exprs[i], names).evaluate(bundle.values());
                report.mape = sindy::mape(y, yhat);
            } else {
                report.notes.push_back(fmt::format("final result has {} equations for {} targets; MAPE not computed",
                                                   exprs.size(), targets.size()));
            }
        } catch (const Error& e) {
            report.notes.push_back(
                fmt::format("final result could not be evaluated ({}); returning the best logged result", e.what()));
            report.equations.clear();
            final_eqs.reset();
        }
    }
    if (!final_eqs && state.best) {
        report.equations = state.best->equations;
        report.mape = state.best->mape;
        report.source = "step " + state.best->step;
    }
    report.steps_used = state.steps_used;
    report.llm_calls = state.llm_calls;
    report.tokens = state.tokens;
    return report;
}

ojson to_json(const RunReport& r) {
    ojson j{{"run_format", 1},
            {"stop_reason", r.stop_reason},
            {"equations", r.equations},
            {"mape", r.mape ? ojson(*r.mape) : ojson(nullptr)},
            {"source", r.source},
            {"steps_used", r.steps_used},
            {"max_steps", r.max_steps},
            {"llm_calls", r.llm_calls},
            {"tokens",
             {{"prompt", r.tokens.prompt},
              {"completion", r.tokens.completion},
              {"total", r.tokens.total()},
              {"approximate", r.tokens.approximate}}},
            {"notes", r.notes}};
    if (r.test_nmse) j["test_nmse"] = std::isfinite(*r.test_nmse) ? ojson(*r.test_nmse) : ojson(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

void save_run(const AgentState& state, const RunReport& report, const std::filesystem::path& run_dir,
              const llm::Transcript* transcript) {
    std::filesystem::create_directories(run_dir);
    ojson log = ojson::array();
    for (const auto& r : state.log) log.push_back(to_json(r));
    ojson files = ojson::array();
    for (const auto& [p, d] : state.workspace.files()) files.push_back({{"path", p}, {"description", d}});
    {
        std::ofstream out(run_dir / "log.json");
        out << ojson{{"data_file", state.data_file}, {"workspace", files}, {"records", log}}.dump(2) << '\n';
    }
    ojson rep = to_json(report);
    if (transcript) {
        llm::save_transcript(*transcript, run_dir / "transcript.json");
        rep["transcript"] = "transcript.json";
    }
    std::ofstream out(run_dir / "report.json");
    out << rep.dump(2) << '\n';
}

std::vector<ToolRecord> load_log(const std::filesystem::path& log_json) {
    std::ifstream in(log_json);
    if (!in) throw DataError(fmt::format("cannot read '{}'", log_json.string()));
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(fmt::format("'{}' is not valid JSON: {}", log_json.string(), e.what()));
    }
    std::vector<ToolRecord> out;
    for (const auto& r : j.at("records")) out.push_back(record_from_json(r));
    return out;
}

} // namespace physr::agent
