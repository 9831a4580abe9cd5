#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "json_config.hpp"
#include "physr/agent.hpp"
#include "physr/eval.hpp"
#include "physr/simulate.hpp"
#include "physr/systems.hpp"

namespace fs = std::filesystem;
using physr::agent::ojson;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

// Options shared by every command that may talk to a chat-completions endpoint.
struct EndpointOptions {
    std::string endpoint = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_s = 120;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--endpoint", endpoint, "Chat-completions base URL")->envname("PHYSR_ENDPOINT")->capture_default_str();
        cmd.add_option("--model", model, "Model name")->envname("PHYSR_MODEL")->capture_default_str();
        cmd.add_option("--api-key-env", api_key_env, "Environment variable holding the API key")->capture_default_str();
        cmd.add_option("--request-timeout", timeout_s, "Seconds per request")->capture_default_str();
    }

    physr::llm::HttpConfig http() const {
        physr::llm::HttpConfig c;
        c.base_url = endpoint;
        c.model = model;
        c.api_key_env = api_key_env;
        c.timeout_seconds = timeout_s;
        return c;
    }

    ojson to_json() const {
        return {{"endpoint", endpoint}, {"model", model}, {"api_key_env", api_key_env}, {"request_timeout", timeout_s}};
    }
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw physr::Error(fmt::format("cannot read {}", p.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& p, const ojson& j) {
    std::ofstream out(p);
    if (!out) throw physr::Error(fmt::format("cannot write {}", p.string()));
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
    std::string system;
    std::optional<double> noise;
    std::uint64_t seed = 0;
    std::string out = "data";
};

int cmd_generate(const GenerateOptions& o) {
    std::vector<std::string> names;
    if (o.system == "all") names = physr::data::builtin_system_names();
    else names.push_back(std::string(physr::data::builtin_system(o.system).name));

    for (const auto& name : names) {
        const auto& spec = physr::data::builtin_system(name);
        const double noise = o.noise.value_or(spec.noise_level);
        const auto s = physr::data::generate_splits(spec, noise, o.seed);
        const fs::path base = fs::path(o.out) / name;
        const std::pair<const char*, const physr::data::DatasetBundle*> parts[] = {
            {"clean/train", &s.clean_train}, {"clean/test", &s.clean_test},
            {"noisy/train", &s.noisy_train}, {"noisy/test", &s.noisy_test}};
        for (const auto& [sub, bundle] : parts) {
            physr::data::save(*bundle, base / sub);
            fmt::print("{}: {} rows\n", (base / sub).string(), bundle->rows());
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// tool

struct ToolOptions {
    std::string name;
    std::string args = "{}";
    std::string workspace = ".";
    std::uint64_t seed = 0;
    std::string python = "python3";
    int interpreter_timeout_s = 120;
    EndpointOptions endpoint;
};

int cmd_tool(const ToolOptions& o) {
    using namespace physr::agent;
    const auto tools = default_tools();
    const Tool* tool = tools.find(o.name);
    if (!tool) {
        std::vector<std::string> names;
        for (const auto& t : tools.tools()) names.push_back(t->schema().name);
        throw physr::ArgumentError(fmt::format("unknown tool '{}'; available: {}", o.name, fmt::join(names, ", ")));
    }
    ojson args;
    try {
        args = ojson::parse(o.args);
    } catch (const ojson::exception& e) {
        throw physr::ArgumentError(fmt::format("arguments are not valid JSON: {}", e.what()));
    }
    if (!args.is_object()) throw physr::ArgumentError("arguments must be a JSON object");
    validate_args(tool->schema(), args);

    AgentConfig cfg;
    cfg.seed = o.seed;
    cfg.python = o.python;
    cfg.interpreter_timeout_s = o.interpreter_timeout_s;
    Workspace ws(fs::absolute(o.workspace));
    std::unique_ptr<physr::llm::Client> client;
    if (tool->schema().name == "visual_subagent")
        client = std::make_unique<physr::llm::HttpClient>(o.endpoint.http());
    TokenTotals tokens;
    std::map<std::string, physr::data::DatasetBundle> cache;
    ToolContext ctx{ws, cfg, client.get(), &tokens, "1", &cache};
    const auto record = execute_tool(tools, {o.name, args}, ctx);
    fmt::print("{}\n", to_json(record).dump(2));
    return record.success ? 0 : kExitRuntime;
}

// ---------------------------------------------------------------------------
// agent

struct AgentOptions {
    std::string data;
    std::string data_name;
    std::string out;
    std::string query;
    std::string test;
    std::string replay;
    bool replay_loose = false;
    std::string script;
    int k = 1;
    int max_steps = 10;
    double mape_stop = 0.1;
    std::uint64_t seed = 0;
    std::string python = "python3";
    int interpreter_timeout_s = 120;
    EndpointOptions endpoint;
};

// Copy a bundle directory, or a CSV with its manifest, into the workspace.
void stage_data(const fs::path& src, const fs::path& workspace, const std::string& name) {
    const fs::path dst = workspace / name;
    fs::remove_all(dst);
    if (fs::is_directory(src)) {
        fs::copy(src, dst, fs::copy_options::recursive);
        return;
    }
    fs::copy_file(src, dst);
    const fs::path sidecar = src.parent_path() / (src.stem().string() + ".meta.json");
    if (fs::exists(sidecar)) {
        fs::copy_file(sidecar, workspace / (fs::path(name).stem().string() + ".meta.json"),
                      fs::copy_options::overwrite_existing);
    } else if (fs::exists(src.parent_path() / "meta.json")) {
        fs::copy_file(src.parent_path() / "meta.json", workspace / "meta.json", fs::copy_options::overwrite_existing);
    }
}

std::string client_mode(const AgentOptions& o) {
    if (!o.replay.empty()) return "replay";
    if (!o.script.empty()) return "script";
    return "live";
}

ojson resolved_config(const AgentOptions& o, int attempt) {
    ojson j{{"data", fs::absolute(o.data).string()},
            {"data_name", o.data_name},
            {"query", o.query},
            {"client", client_mode(o)},
            {"k", o.k},
            {"attempt", attempt},
            {"max_steps", o.max_steps},
            {"mape_stop", o.mape_stop},
            {"seed", o.seed + static_cast<std::uint64_t>(attempt)},
            {"python", o.python},
            {"interpreter_timeout", o.interpreter_timeout_s}};
    if (!o.test.empty()) j["test"] = fs::absolute(o.test).string();
    if (!o.replay.empty()) {
        j["replay"] = fs::absolute(o.replay).string();
        j["replay_loose"] = o.replay_loose;
    }
    if (!o.script.empty()) j["script"] = fs::absolute(o.script).string();
    if (client_mode(o) == "live") j["endpoint"] = o.endpoint.to_json();
    return j;
}

// One agent run in `run_dir`. Returns the process exit code.
int single_run(const AgentOptions& o, int attempt, const fs::path& run_dir) {
    using namespace physr::agent;
    const fs::path workspace = run_dir / "workspace";
    fs::create_directories(workspace);
    stage_data(o.data, workspace, o.data_name);
    write_json(run_dir / "config.json", resolved_config(o, attempt));

    auto state = initial_state(workspace, o.data_name);
    const auto& bundle = physr::data::load(workspace / o.data_name);
    const std::string query = o.query.empty() ? default_query(bundle, o.data_name) : o.query;

    AgentConfig cfg;
    cfg.max_steps = o.max_steps;
    cfg.mape_stop = o.mape_stop;
    cfg.seed = o.seed + static_cast<std::uint64_t>(attempt);
    cfg.python = o.python;
    cfg.interpreter_timeout_s = o.interpreter_timeout_s;
    const auto tools = default_tools();

    RunReport report;
    std::optional<physr::llm::Transcript> transcript;
    if (!o.replay.empty()) {
        physr::llm::ReplayClient client(physr::llm::load_transcript(o.replay), o.replay_loose);
        report = run(state, tools, client, query, cfg);
    } else {
        std::unique_ptr<physr::llm::Client> inner;
        if (!o.script.empty()) {
            const auto replies = nlohmann::json::parse(read_text(o.script)).get<std::vector<std::string>>();
            inner = std::make_unique<physr::llm::ScriptedClient>(replies);
        } else {
            inner = std::make_unique<physr::llm::HttpClient>(o.endpoint.http());
        }
        physr::llm::RecordingClient client(*inner);
        report = run(state, tools, client, query, cfg);
        transcript = client.transcript();
    }

    if (!o.test.empty() && !report.equations.empty()) {
        try {
            report.test_nmse = physr::eval::mean_nmse(report.equations, physr::data::load(o.test));
        } catch (const physr::Error& e) {
            report.notes.push_back(fmt::format("test NMSE unavailable: {}", e.what()));
        }
    }
    save_run(state, report, run_dir, transcript ? &*transcript : nullptr);
    fmt::print("{}: {} after {} steps, {}\n", run_dir.string(), report.stop_reason, report.steps_used,
               report.equations.empty() ? std::string("no equations") : fmt::format("{}", fmt::join(report.equations, "; ")));
    if (!report.error.empty()) fmt::print(stderr, "error: {}\n", report.error);
    return report.stop_reason == "client_error" ? kExitRuntime : 0;
}

int cmd_agent(AgentOptions o) {
    if (o.k < 1) throw physr::ArgumentError("--k must be at least 1");
    if (o.k > 1 && !o.replay.empty()) throw physr::ArgumentError("--replay needs --k 1: one transcript per run");
    if (o.data_name.empty()) o.data_name = fs::path(o.data).filename().string();
    if (o.out.empty()) o.out = (fs::path("runs") / fs::path(o.data_name).stem()).string();
    // Fail on unreadable data before any client is created.
    physr::data::load(o.data);
    if (!o.test.empty()) physr::data::load(o.test);

    const fs::path out(o.out);
    fs::create_directories(out);
    std::vector<int> codes(o.k, 0);
    if (o.k == 1) {
        codes[0] = single_run(o, 0, out / "run_0");
    } else {
        std::fflush(stdout);
        std::vector<pid_t> pids;
        for (int i = 0; i < o.k; ++i) {
            const pid_t pid = fork();
            if (pid < 0) throw physr::Error("fork failed");
            if (pid == 0) {
                int code = kExitRuntime;
                try {
                    code = single_run(o, i, out / fmt::format("run_{}", i));
                } catch (const std::exception& e) {
                    fmt::print(stderr, "run {}: {}\n", i, e.what());
                }
                std::fflush(stdout);
                _exit(code);
            }
            pids.push_back(pid);
        }
        for (int i = 0; i < o.k; ++i) {
            int status = 0;
            waitpid(pids[i], &status, 0);
            codes[i] = WIFEXITED(status) ? WEXITSTATUS(status) : kExitRuntime;
        }
    }

    // Best attempt: lowest test NMSE when a test bundle is given, else lowest train MAPE.
    const std::string metric = o.test.empty() ? "mape" : "test_nmse";
    ojson runs = ojson::array();
    int selected = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < o.k; ++i) {
        const fs::path dir = out / fmt::format("run_{}", i);
        ojson entry{{"run_dir", dir.filename().string()}, {"seed", o.seed + static_cast<std::uint64_t>(i)},
                    {"exit_code", codes[i]}};
        if (fs::exists(dir / "report.json")) {
            const auto rep = ojson::parse(read_text(dir / "report.json"));
            for (const char* key : {"stop_reason", "equations", "mape", "test_nmse"})
                if (rep.contains(key)) entry[key] = rep[key];
            if (rep.contains(metric) && rep[metric].is_number() && rep[metric].get<double>() < best) {
                best = rep[metric].get<double>();
                selected = i;
            }
        }
        runs.push_back(std::move(entry));
    }
    ojson summary{{"run_format", 1}, {"selection_metric", metric}, {"selected", nullptr}, {"runs", runs}};
    if (selected >= 0) {
        summary["selected"] = selected;
        summary["equations"] = runs[selected]["equations"];
        summary["runs"][selected]["selected"] = true;
    }
    write_json(out / "summary.json", summary);
    if (selected >= 0) fmt::print("selected run_{} ({} = {})\n", selected, metric, best);
    for (int c : codes)
        if (c != 0) return kExitRuntime;
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string equations;
    std::string system;
    std::string test;
    std::string out;
    double rel_tol = 1e-2;
    std::vector<double> box{-1.0, 1.0};
};

// Right-hand sides, one per non-blank line; '#' starts a comment and an
// optional "lhs =" prefix is dropped.
std::vector<std::string> read_equations(const fs::path& path, const physr::data::SystemSpec& spec) {
    const auto names = spec.rhs_variables();
    const std::set<std::string> vars(names.begin(), names.end());
    std::ifstream in(path);
    if (!in) throw physr::Error(fmt::format("cannot read {}", path.string()));
    std::vector<std::string> eqs;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (const auto eq = line.find('='); eq != std::string::npos) line.erase(0, eq + 1);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
        try {
            physr::parse(line, vars);
        } catch (const physr::ParseError& e) {
            throw physr::Error(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
        eqs.push_back(line);
    }
    return eqs;
}

int cmd_eval(EvalOptions o) {
    const auto& spec = physr::data::builtin_system(o.system);
    const auto eqs = read_equations(o.equations, spec);
    const auto test = physr::data::load(o.test);
    if (o.out.empty()) o.out = "eval_" + spec.name;
    physr::eval::NumericJudgeOptions judge;
    judge.rel_tol = o.rel_tol;
    judge.box = {o.box[0], o.box[1]};
    const auto report = physr::eval::evaluate_system(eqs, spec, test, judge);

    const fs::path out(o.out);
    fs::create_directories(out);
    std::ofstream(out / "report.json") << physr::eval::to_json(report).dump(2) << '\n';
    physr::eval::write_curve_csv(report.long_term.curve, out / (spec.name + "_error_curve.csv"));
    for (const auto& m : report.equations)
        fmt::print("{}: nmse {:.3e}, mape {:.3f}%, {}\n", m.target, m.nmse_pointwise, m.mape,
                   m.numeric_match ? "matches reference" : "differs from reference");
    if (report.long_term.failed)
        fmt::print("simulation failed at t = {}\n", report.long_term.failure_time.value_or(0.0));
    else
        fmt::print("nmse at t_max = {}: {:.3e}\n", report.long_term.t_max, report.long_term.nmse_at_tmax);
    return 0;
}

// ---------------------------------------------------------------------------
// judge

struct JudgeOptions {
    std::string truth;
    std::string hypothesis;
    std::string mode = "numeric";
    std::vector<std::string> vars;
    double rel_tol = 1e-2;
    std::vector<double> box{-1.0, 1.0};
    int points = 1000;
    std::string replay;
    EndpointOptions endpoint;
};

std::set<std::string> identifiers(const std::string& a, const std::string& b) {
    static const std::regex ident("[A-Za-z_][A-Za-z0-9_]*");
    std::set<std::string> out;
    for (const auto* s : {&a, &b})
        for (std::sregex_iterator it(s->begin(), s->end(), ident), end; it != end; ++it)
            if (!physr::unary_from_name(it->str())) out.insert(it->str());
    return out;
}

int cmd_judge(const JudgeOptions& o) {
    if (o.mode == "numeric") {
        const std::set<std::string> vars =
            o.vars.empty() ? identifiers(o.truth, o.hypothesis) : std::set<std::string>(o.vars.begin(), o.vars.end());
        physr::eval::NumericJudgeOptions opts;
        opts.rel_tol = o.rel_tol;
        opts.box = {o.box[0], o.box[1]};
        opts.points = o.points;
        const bool same = physr::eval::judge_numeric(physr::parse(o.truth, vars), physr::parse(o.hypothesis, vars), opts);
        fmt::print("{}\n", nlohmann::json{{"mode", "numeric"}, {"answer", same ? "yes" : "no"}}.dump(2));
        return 0;
    }
    std::unique_ptr<physr::llm::Client> inner;
    if (!o.replay.empty())
        inner = std::make_unique<physr::llm::ReplayClient>(physr::llm::load_transcript(o.replay));
    else
        inner = std::make_unique<physr::llm::HttpClient>(o.endpoint.http());
    const auto j = physr::eval::judge_symbolic(o.truth, o.hypothesis, *inner);
    fmt::print("{}\n", nlohmann::json{{"mode", "llm"},
                                      {"answer", physr::eval::to_string(j.verdict)},
                                      {"reasoning", j.reasoning}}
                           .dump(2));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equation discovery from trajectory data: datasets, tools, agent runs and metrics."};
    app.name("physr");
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<physr::cli::JsonConfig>());
    app.set_config("--config", "", "JSON config file; flags override it, it overrides the environment");

    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate", "Simulate a built-in system and write train/test bundles");
    generate->add_option("--system", gen.system, "System name, or 'all'")->required();
    generate->add_option("--noise", gen.noise, "Relative noise level for the noisy variant (default: per system)");
    generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    generate->add_option("--out", gen.out, "Output directory")->capture_default_str();

    ToolOptions tool;
    auto* tool_cmd = app.add_subcommand("tool", "Run one agent tool and print its record as JSON");
    tool_cmd->add_option("name", tool.name, "Tool name")->required();
    tool_cmd->add_option("args", tool.args, "Arguments as a JSON object")->capture_default_str();
    tool_cmd->add_option("--workspace", tool.workspace, "Directory the tool works in")->capture_default_str();
    tool_cmd->add_option("--seed", tool.seed, "Default seed for stochastic tools")->capture_default_str();
    tool_cmd->add_option("--python", tool.python, "Python interpreter")->capture_default_str();
    tool_cmd->add_option("--interpreter-timeout", tool.interpreter_timeout_s, "Seconds per python call")->capture_default_str();
    tool.endpoint.add_to(*tool_cmd);

    AgentOptions ag;
    auto* agent = app.add_subcommand("agent", "Run the tool-using agent on a dataset");
    agent->add_option("--data", ag.data, "Dataset bundle directory or CSV")->required()->check(CLI::ExistingPath);
    agent->add_option("--data-name", ag.data_name, "Name of the dataset inside the workspace (default: its file name)");
    agent->add_option("--out", ag.out, "Output directory (default: runs/<data name>)");
    agent->add_option("--query", ag.query, "Task text (default: derived from the dataset)");
    agent->add_option("--test", ag.test, "Held-out bundle used to pick the best of k runs")->check(CLI::ExistingPath);
    auto* replay_opt = agent->add_option("--replay", ag.replay, "Replay a recorded transcript instead of calling a model")
        ->check(CLI::ExistingFile);
    agent->add_flag("--replay-loose", ag.replay_loose, "Do not check request digests while replaying");
    agent->add_option("--script", ag.script, "JSON list of canned model replies")
        ->check(CLI::ExistingFile)
        ->excludes(replay_opt);
    agent->add_option("--k", ag.k, "Independent runs; the best is selected")->capture_default_str();
    agent->add_option("--max-steps", ag.max_steps, "Step budget per run")->capture_default_str();
    agent->add_option("--mape-stop", ag.mape_stop, "Stop when an SR result has MAPE (percent) below this")
        ->capture_default_str();
    agent->add_option("--seed", ag.seed, "Base seed; run i uses seed + i")->capture_default_str();
    agent->add_option("--python", ag.python, "Python interpreter")->capture_default_str();
    agent->add_option("--interpreter-timeout", ag.interpreter_timeout_s, "Seconds per python call")->capture_default_str();
    ag.endpoint.add_to(*agent);

    EvalOptions ev;
    auto* eval = app.add_subcommand("eval", "Score discovered equations against a built-in system");
    eval->add_option("--equations", ev.equations, "Text file, one right-hand side per line")->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--system", ev.system, "Built-in system name")->required();
    eval->add_option("--test", ev.test, "Test bundle")->required()->check(CLI::ExistingPath);
    eval->add_option("--out", ev.out, "Output directory (default: eval_<system>)");
    eval->add_option("--rel-tol", ev.rel_tol, "Numeric judge tolerance")->capture_default_str();
    eval->add_option("--box", ev.box, "Numeric judge sampling interval")->expected(2)->capture_default_str();

    JudgeOptions jd;
    auto* judge = app.add_subcommand("judge", "Decide whether two expressions are equivalent");
    judge->add_option("--truth", jd.truth, "Reference expression")->required();
    judge->add_option("--hypothesis", jd.hypothesis, "Candidate expression")->required();
    judge->add_option("--mode", jd.mode, "numeric or llm")->check(CLI::IsMember({"numeric", "llm"}))->capture_default_str();
    judge->add_option("--vars", jd.vars, "Variable names (default: identifiers found in the expressions)")->delimiter(',');
    judge->add_option("--rel-tol", jd.rel_tol, "Numeric tolerance")->capture_default_str();
    judge->add_option("--box", jd.box, "Sampling interval")->expected(2)->capture_default_str();
    judge->add_option("--points", jd.points, "Sample points")->capture_default_str();
    judge->add_option("--replay", jd.replay, "Replay a recorded judge transcript")->check(CLI::ExistingFile);
    jd.endpoint.add_to(*judge);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*generate) return cmd_generate(gen);
        if (*tool_cmd) return cmd_tool(tool);
        if (*agent) return cmd_agent(ag);
        if (*eval) return cmd_eval(ev);
        if (*judge) return cmd_judge(jd);
    } catch (const physr::ArgumentError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
