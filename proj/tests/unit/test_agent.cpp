#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <fmt/format.h>

#include "physr/agent.hpp"
#include "physr/simulate.hpp"
#include "physr/systems.hpp"

using namespace physr;
using namespace physr::agent;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("physr_agent_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Clean damped-oscillator training bundle saved as <dir>/do_train.
fs::path oscillator_workspace(const std::string& name) {
    const auto dir = fresh_dir(name);
    const auto& spec = data::builtin_system("damped_oscillator");
    const auto train = data::split(data::simulate(spec, 3), {data::SplitPolicy::Kind::ByTrajectory, 0.8}).first;
    data::save(train, dir / "do_train");
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Returns a fixed MAPE and equation list; for exercising the loop without real fits.
class FakeSr : public Tool {
public:
    FakeSr()
        : schema_{"fake_sr",
                  {},
                  "test tool",
                  {{"mape", ParamType::Number, true, nullptr, "reported error"},
                   {"tag", ParamType::String, false, nullptr, "label"}}} {}
    const ToolSchema& schema() const override { return schema_; }
    ToolOutcome run(const ojson& args, ToolContext&) const override {
        ToolOutcome out;
        out.result["result_type"] = "equation";
        out.result["equations"] = {"x*" + args.value("tag", std::string("1"))};
        out.result["mape"] = args["mape"].get<double>();
        return out;
    }

private:
    ToolSchema schema_;
};

ToolRegistry fake_registry() {
    ToolRegistry r;
    r.add(std::make_unique<FakeSr>());
    r.add(make_python_tool());
    return r;
}

std::string call(const std::string& tool, const std::string& args) {
    return "Reasoning first.\n{\"tool_call\": {\"tool_name\": \"" + tool + "\", \"args\": " + args + "}}";
}

} // namespace

TEST_CASE("python_repr") {
    CHECK(python_repr(ojson(true)) == "True");
    CHECK(python_repr(ojson(nullptr)) == "None");
    CHECK(python_repr(ojson::parse("[[0, -1], [1, 0]]")) == "[[0, -1], [1, 0]]");
    CHECK(python_repr(ojson::parse("[[0.0, -0.678013801574707], [0.680248498916626, 0.0]]")) ==
          "[[0.0, -0.678013801574707], [0.680248498916626, 0.0]]");
    CHECK(python_repr(ojson("it's")) == "\"it's\"");
    CHECK(python_repr(ojson::parse(R"({"b": "x", "a": [1.5, false]})")) == "{'b': 'x', 'a': [1.5, False]}");
}

TEST_CASE("records render in the experience-log layout") {
    ToolRecord step1;
    step1.step = "1";
    step1.tool = "sindy";
    step1.args = ojson::parse(R"({"data_file": "rd_train.h5"})");
    step1.success = true;
    step1.result = ojson::parse(R"({"result_type": "equation", "equations": [
        "0.041*u + 0.035*u*u*u + 1.169*v*v*v + 0.007*u*v*v + 0.277*u*u*v + 0.071*u_yy + 0.065*u_xx",
        "0.041*v - 1.169*u*u*u + 0.035*v*v*v - 0.277*u*v*v + 0.007*u*u*v + 0.065*v_yy + 0.071*v_xx"],
        "mape": 70.0331})");
    CHECK(render_record(step1) ==
          "### Step 1: sindy\n"
          "**Arguments:**\n"
          "  - data_file: rd_train.h5\n"
          "**Result:**\n"
          "  - Status: success\n"
          "  - result_type: equation\n"
          "  - equations: [\n"
          "    '0.041*u + 0.035*u*u*u + 1.169*v*v*v + 0.007*u*v*v + 0.277*u*u*v + 0.071*u_yy + 0.065*u_xx',\n"
          "    '0.041*v - 1.169*u*u*u + 0.035*v*v*v - 0.277*u*v*v + 0.007*u*u*v + 0.065*v_yy + 0.071*v_xx'\n"
          "    ]\n"
          "  - mape: 70.033%\n");

    ToolRecord step2;
    step2.step = "2";
    step2.tool = "symmetry_discovery";
    step2.args = ojson::parse(R"({"data_file": "rd_train.h5"})");
    step2.success = true;
    step2.result = ojson::parse(R"({"result_type": "symmetry",
        "lie_generator": [[0.0, -0.678013801574707], [0.680248498916626, 0.0]],
        "predictor_loss": 0.0099648, "symmetry_loss": 0.0020012})");
    CHECK(render_record(step2) ==
          "### Step 2: symmetry_discovery\n"
          "**Arguments:**\n"
          "  - data_file: rd_train.h5\n"
          "**Result:**\n"
          "  - Status: success\n"
          "  - result_type: symmetry\n"
          "  - lie_generator: [[0.0, -0.678013801574707], [0.680248498916626, 0.0]]\n"
          "  - predictor_loss: 0.009965\n"
          "  - symmetry_loss: 0.002001\n");

    ToolRecord step3 = step1;
    step3.step = "3";
    step3.args = ojson::parse(R"({"data_file": "rd_train.h5", "use_symmetry": true, "lie_generator": [[0, -1], [1, 0]]})");
    const auto text = render_record(step3);
    CHECK(text.find("  - data_file: rd_train.h5\n  - use_symmetry: True\n  - lie_generator: [[0, -1], [1, 0]]\n") !=
          std::string::npos);

    ToolRecord failed;
    failed.step = "4.2";
    failed.tool = "python_interpreter";
    failed.args["code"] = "print(1)\nprint(2)";
    failed.result["error"] = "exit code 1";
    failed.duplicate_of = "3.1";
    CHECK(render_record(failed) == "### Step 4.2: python_interpreter\n"
                                   "**Arguments:**\n"
                                   "  - code: |\n"
                                   "    print(1)\n"
                                   "    print(2)\n"
                                   "**Result:**\n"
                                   "  - Status: error\n"
                                   "  - error: exit code 1\n"
                                   "  - note: same tool and arguments as Step 3.1\n");

    const auto log = render_log({step1, step2});
    CHECK(log.rfind("## Experience Log\n\n### Step 1: sindy", 0) == 0);
    CHECK(log.find("### Step 2") > log.find("### Step 1"));
    CHECK(render_log({}) == "## Experience Log\n\nNo tool calls yet.\n");
}

TEST_CASE("log round trip through log.json") {
    const auto dir = fresh_dir("roundtrip");
    AgentState state;
    state.workspace = Workspace(dir);
    ToolRecord a;
    a.step = "1";
    a.tool = "sindy";
    a.args = ojson::parse(R"({"data_file": "d", "threshold": 0.1, "use_symmetry": false})");
    a.success = true;
    a.result = ojson::parse(R"({"result_type": "equation", "equations": ["0.1*x"], "mape": 12.3456789012345})");
    a.details["mape_per_target"] = {1.0 / 3.0};
    ToolRecord b = a;
    b.step = "2.1";
    b.duplicate_of = "1";
    state.log = {a, b};
    save_run(state, RunReport{}, dir);
    const auto back = load_log(dir / "log.json");
    REQUIRE(back.size() == 2);
    CHECK(render_log(back) == render_log(state.log));
    CHECK(to_json(back[0]) == to_json(a));
    CHECK(back[1].duplicate_of == std::optional<std::string>("1"));
    const auto report = ojson::parse(read_file(dir / "report.json"));
    CHECK(report["run_format"] == 1);
}

TEST_CASE("parse_decision") {
    SUBCASE("single call after prose") {
        const auto d = parse_decision(
            "The data is a PDE.\n{\"tool_call\":{\"tool_name\":\"sindy\",\"args\":{\"data_file\":\"rd_train.h5\"}}}");
        REQUIRE(d.calls.size() == 1);
        CHECK(d.calls[0].tool_name == "sindy");
        CHECK(d.calls[0].args["data_file"] == "rd_train.h5");
        CHECK_FALSE(d.terminal());
    }
    SUBCASE("final result list") {
        const auto d = parse_decision("{\"final_result\": [\"eq1\", \"eq2\"]}");
        REQUIRE(d.terminal());
        CHECK(*d.final_result == std::vector<std::string>{"eq1", "eq2"});
    }
    SUBCASE("final result string") {
        CHECK(*parse_decision("```json\n{\"final_result\": \"x*y\"}\n```").final_result ==
              std::vector<std::string>{"x*y"});
    }
    SUBCASE("batch without args") {
        const auto d = parse_decision(R"({"tool_calls": [{"tool_name": "python_interpreter"}, {"tool_name": "pysr", "args": {"input_file": "a"}}]})");
        REQUIRE(d.calls.size() == 2);
        CHECK(d.calls[0].args.empty());
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(parse_decision("I will call sindy next."), DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"tool_calls": [{"tool_name": "a"}, {"tool_name": "b"}, {"tool_name": "c"}, {"tool_name": "d"}]})"),
                        DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"tool_calls": []})"), DecisionError);
        CHECK_THROWS_AS(parse_decision("{\"tool_call\": {\"tool_name\": \"sindy\" // best\n}}"), DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"tool_call": {"args": {}}})"), DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"tool_call": {"tool_name": "a"}, "final_result": "x"})"), DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"final_result": ["x_t = x"]})"), DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"final_result": []})"), DecisionError);
        CHECK_THROWS_AS(parse_decision(R"({"something": 1})"), DecisionError);
    }
}

TEST_CASE("python blocks") {
    const auto b = python_blocks("a\n```python\nprint(1)\n```\nb\n```py\nx = {1: 2}\n```\n```json\n{}\n```");
    REQUIRE(b.size() == 2);
    CHECK(b[0] == "print(1)\n");
    CHECK(b[1] == "x = {1: 2}\n");
}

TEST_CASE("argument validation against the schema") {
    const auto tools = default_tools();
    const auto& sindy = tools.find("sindy")->schema();
    CHECK_NOTHROW(validate_args(sindy, ojson::parse(R"({"data_file": "a", "polynomial_degree": 4.0})")));
    CHECK_THROWS_WITH_AS(validate_args(sindy, ojson::parse(R"({"data_file": "a", "degree": 4})")),
                         doctest::Contains("unknown argument 'degree'"), ArgumentError);
    CHECK_THROWS_WITH_AS(validate_args(sindy, ojson::parse(R"({"data_file": "a", "polynomial_degree": 2.5})")),
                         doctest::Contains("integer"), ArgumentError);
    CHECK_THROWS_WITH_AS(validate_args(sindy, ojson::parse(R"({"threshold": 0.1})")),
                         doctest::Contains("missing required argument 'data_file'"), ArgumentError);
    CHECK_THROWS_AS(validate_args(sindy, ojson::parse(R"({"data_file": "a", "lie_generator": [[0, 1], [1]]})")),
                    ArgumentError);
    CHECK(tools.find("gpsr") == tools.find("pysr"));
    CHECK(tools.find("python_intepreter") == tools.find("python_interpreter"));
    CHECK(tools.find("nope") == nullptr);

    // Every parameter of every tool appears in the rendered specification.
    const auto spec = tools.render();
    for (const auto& t : tools.tools())
        for (const auto& p : t->schema().params) CHECK(spec.find("  - " + p.name + " (") != std::string::npos);
}

TEST_CASE("context assembly") {
    const auto dir = oscillator_workspace("context");
    auto state = initial_state(dir, "do_train");
    const auto tools = default_tools();
    const std::string query = "Find the equations.";

    const auto msgs = assemble_context(state, tools, query);
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].role == "system");
    const auto& sys = msgs[0].content;
    const auto& user = msgs[1].content;
    CHECK(sys.rfind("# Symbolic Regression Data Analyzer", 0) == 0);
    CHECK(sys.find("## Tool Specifications") != std::string::npos);
    CHECK(user.rfind("## User Query\n\nFind the equations.\n\n## Workspace Files\n\n", 0) == 0);
    CHECK(user.find("## Workspace Files") < user.find("## Experience Log"));
    CHECK(msgs[1].content.find("No tool calls yet.") != std::string::npos);
    CHECK(state.workspace.files().size() == 1);
    CHECK(msgs[1].content.find("- do_train: ode dataset") != std::string::npos);

    // Pure function of the state.
    CHECK(assemble_context(state, tools, query)[1].content == msgs[1].content);

    // Golden file for the fresh context.
    const std::string golden_path = std::string(PHYSR_FIXTURES) + "/context_fresh.golden.md";
    const std::string rendered = msgs[0].content + "\n\n" + msgs[1].content;
    if (std::getenv("PHYSR_UPDATE_GOLDEN")) std::ofstream(golden_path) << rendered;
    CHECK(rendered == read_file(golden_path));

    state.workspace.add("phase_plot.png", "phase portrait of trajectory 0");
    ToolRecord r;
    r.step = "1";
    r.tool = "sindy";
    r.success = true;
    state.log.push_back(r);
    r.step = "2";
    r.tool = "pysr";
    state.log.push_back(r);
    const auto later = assemble_context(state, tools, query)[1].content;
    CHECK(later.find("- phase_plot.png: phase portrait of trajectory 0") != std::string::npos);
    CHECK(later.find("### Step 1: sindy") < later.find("### Step 2: pysr"));
    CHECK(later.find("No tool calls yet.") == std::string::npos);
}

TEST_CASE("dispatch: sub-steps, best tracking, duplicates, unknown tools") {
    const auto dir = oscillator_workspace("dispatch");
    auto state = initial_state(dir, "do_train");
    const auto tools = fake_registry();
    AgentConfig cfg;

    state.steps_used = 1;
    CHECK_FALSE(dispatch(parse_decision(call("fake_sr", R"({"mape": 70.033})")), "", state, tools, nullptr, cfg));
    REQUIRE(state.best);
    CHECK(state.best->mape == 70.033);

    state.steps_used = 2;
    const std::string reply = "```python\nprint('hi')\n```\n"
                              R"({"tool_calls": [{"tool_name": "python_interpreter"}, {"tool_name": "fake_sr", "args": {"mape": 15.584, "tag": "b"}}, {"tool_name": "bogus"}]})";
    CHECK_FALSE(dispatch(parse_decision(reply), reply, state, tools, nullptr, cfg));
    REQUIRE(state.log.size() == 4);
    CHECK(state.log[1].step == "2.1");
    CHECK(state.log[1].success);
    CHECK(state.log[1].result["output"] == "hi\n");
    CHECK(state.log[2].step == "2.2");
    CHECK(state.log[3].step == "2.3");
    CHECK_FALSE(state.log[3].success);
    CHECK(state.log[3].result["error"].get<std::string>().find("unknown tool 'bogus'") != std::string::npos);
    CHECK(state.best->mape == 15.584);
    CHECK(state.best->step == "2.2");
    CHECK(state.best->equations == std::vector<std::string>{"x*b"});

    // An equal MAPE does not replace the best; an exact repeat is flagged.
    state.steps_used = 3;
    dispatch(parse_decision(call("fake_sr", R"({"mape": 15.584, "tag": "b"})")), "", state, tools, nullptr, cfg);
    CHECK(state.log.back().duplicate_of == std::optional<std::string>("2.2"));
    CHECK(state.best->step == "2.2");

    // A failing batch entry does not stop the rest; the threshold does.
    state.steps_used = 4;
    const std::string stop = R"({"tool_calls": [{"tool_name": "fake_sr", "args": {"mape": "bad"}}, {"tool_name": "fake_sr", "args": {"mape": 0.05}}, {"tool_name": "fake_sr", "args": {"mape": 0.01}}]})";
    CHECK(dispatch(parse_decision(stop), stop, state, tools, nullptr, cfg));
    CHECK(state.log.back().step == "4.2");
    CHECK_FALSE(state.log[state.log.size() - 2].success);
    CHECK(state.best->mape == 0.05);
}

TEST_CASE("run: forced stop, budget, retries, final result") {
    const auto dir = oscillator_workspace("run");
    const auto tools = fake_registry();
    AgentConfig cfg;

    SUBCASE("MAPE below the threshold at step 1 ends the run") {
        auto state = initial_state(dir, "do_train");
        llm::ScriptedClient client(std::vector<std::string>{call("fake_sr", R"({"mape": 0.05})"), "unused"});
        const auto rep = run(state, tools, client, "q", cfg);
        CHECK(rep.stop_reason == "mape_threshold");
        CHECK(rep.steps_used == 1);
        CHECK(client.calls() == 1);
        CHECK(rep.mape == 0.05);
        CHECK(rep.source == "step 1");
    }
    SUBCASE("budget exhaustion returns the best so far") {
        auto state = initial_state(dir, "do_train");
        int n = 0;
        llm::ScriptedClient client([&](const llm::Request&, int) {
            ++n;
            const double m = n == 3 ? 5.0 : 50.0 + n;
            return llm::Response{call("fake_sr", fmt::format(R"({{"mape": {}, "tag": "s{}"}})", m, n)), std::nullopt};
        });
        cfg.max_steps = 6;
        const auto rep = run(state, tools, client, "q", cfg);
        CHECK(rep.stop_reason == "max_steps");
        CHECK(rep.steps_used == 6);
        CHECK(state.log.size() == 6);
        CHECK(rep.equations == std::vector<std::string>{"x*s3"});
        CHECK(rep.mape == 5.0);
        CHECK(rep.tokens.approximate);
        CHECK(rep.tokens.prompt > 0);
    }
    SUBCASE("malformed replies get corrective re-prompts") {
        auto state = initial_state(dir, "do_train");
        std::vector<llm::Request> seen;
        llm::ScriptedClient client([&](const llm::Request& r, int i) {
            seen.push_back(r);
            if (i == 0) return llm::Response{"no json here", llm::Usage{100, 10}};
            return llm::Response{"{\"final_result\": [\"-0.1*x + y\", \"-x - 0.1*y\"]}", llm::Usage{120, 12}};
        });
        const auto rep = run(state, tools, client, "q", cfg);
        CHECK(rep.stop_reason == "final_result");
        CHECK(rep.steps_used == 1);
        CHECK(rep.llm_calls == 2);
        REQUIRE(seen.size() == 2);
        REQUIRE(seen[1].messages.size() == 4);
        CHECK(seen[1].messages[2].content == "no json here");
        CHECK(seen[1].messages[3].content.find("no JSON object found") != std::string::npos);
        CHECK(rep.tokens.prompt == 220);
        CHECK_FALSE(rep.tokens.approximate);
        CHECK(rep.source == "final_result");
        REQUIRE(rep.mape);
        CHECK(*rep.mape > 1.0);
    }
    SUBCASE("three bad replies use up the step") {
        auto state = initial_state(dir, "do_train");
        llm::ScriptedClient client([](const llm::Request&, int i) {
            if (i < 3) return llm::Response{"{\"tool_call\": 1}", std::nullopt};
            return llm::Response{"{\"final_result\": \"x\"}", std::nullopt};
        });
        cfg.max_steps = 1;
        const auto rep = run(state, tools, client, "q", cfg);
        CHECK(rep.stop_reason == "max_steps");
        CHECK(client.calls() == 3);
        REQUIRE(state.log.size() == 1);
        CHECK(state.log[0].tool == "decision");
        CHECK_FALSE(state.log[0].success);
    }
    SUBCASE("unparsable final result falls back to the best logged result") {
        auto state = initial_state(dir, "do_train");
        llm::ScriptedClient client(std::vector<std::string>{call("fake_sr", R"({"mape": 9.0})"),
                                                            "{\"final_result\": [\"x +* y\", \"y\"]}"});
        const auto rep = run(state, tools, client, "q", cfg);
        CHECK(rep.stop_reason == "final_result");
        CHECK(rep.equations == std::vector<std::string>{"x*1"});
        CHECK(rep.source == "step 1");
        REQUIRE(rep.notes.size() == 1);
    }
    SUBCASE("true equations as final result score near zero") {
        auto state = initial_state(dir, "do_train");
        llm::ScriptedClient client(std::vector<std::string>{"{\"final_result\": [\"-0.1*x - y\", \"x - 0.1*y\"]}"});
        const auto rep = run(state, tools, client, "q", cfg);
        REQUIRE(rep.mape);
        CHECK(*rep.mape < 1e-8);
    }
    SUBCASE("transport failure ends the run with a client error") {
        auto state = initial_state(dir, "do_train");
        llm::ScriptedClient client(std::vector<std::string>{call("fake_sr", R"({"mape": 9.0})")});
        const auto rep = run(state, tools, client, "q", cfg);
        CHECK(rep.stop_reason == "client_error");
        CHECK(rep.steps_used == 1);
        CHECK(rep.mape == 9.0);
    }
}

TEST_CASE("replay reproduces a recorded run exactly") {
    const auto dir = oscillator_workspace("replay");
    const auto tools = default_tools();
    AgentConfig cfg;
    cfg.max_steps = 3;
    cfg.mape_stop = -1.0;
    const std::vector<std::string> script{
        call("sindy", R"({"data_file": "do_train.h5"})"),
        call("sindy", R"({"data_file": "do_train.h5", "polynomial_degree": 2, "threshold": 0.02})"),
        "{\"final_result\": [\"-0.1*x - y\", \"x - 0.1*y\"]}"};

    auto state_a = initial_state(dir, "do_train");
    llm::ScriptedClient scripted(script);
    llm::RecordingClient rec(scripted);
    const auto rep_a = run(state_a, tools, rec, "q", cfg);
    REQUIRE(rec.transcript().size() == 3);
    CHECK(rep_a.stop_reason == "final_result");
    REQUIRE(state_a.log.size() == 2);
    CHECK(state_a.log[0].success);
    CHECK(*state_a.log[0].mape() < 1e-3);

    auto state_b = initial_state(dir, "do_train");
    llm::ReplayClient replay(rec.transcript());
    const auto rep_b = run(state_b, tools, replay, "q", cfg);
    CHECK(to_json(rep_b).dump() == to_json(rep_a).dump());
    CHECK(render_log(state_b.log) == render_log(state_a.log));

    // A different query changes the first request, so strict replay refuses it.
    auto state_c = initial_state(dir, "do_train");
    llm::ReplayClient strict(rec.transcript());
    const auto rep_c = run(state_c, tools, strict, "another query", cfg);
    CHECK(rep_c.stop_reason == "client_error");
    CHECK(rep_c.error.find("digest") != std::string::npos);
}

TEST_CASE("sindy tool on clean oscillator data") {
    const auto dir = oscillator_workspace("sindy");
    Workspace ws(dir);
    AgentConfig cfg;
    std::map<std::string, data::DatasetBundle> cache;
    ToolContext ctx{ws, cfg, nullptr, nullptr, "1", &cache};
    const auto tools = default_tools();
    const auto rec = execute_tool(tools, {"sindy", ojson::parse(R"({"data_file": "do_train.h5"})")}, ctx);
    REQUIRE(rec.success);
    CHECK(rec.result["equations"] == ojson::parse(R"(["-0.100*x - 1.000*y", "1.000*x - 0.100*y"])"));
    CHECK(rec.mape().value() < 1e-6);

    const auto missing = execute_tool(tools, {"sindy", ojson::parse(R"({"data_file": "nothing.h5"})")}, ctx);
    CHECK_FALSE(missing.success);
    CHECK(missing.result["error"].get<std::string>().find("not found") != std::string::npos);
    const auto escape = execute_tool(tools, {"sindy", ojson::parse(R"({"data_file": "../etc"})")}, ctx);
    CHECK_FALSE(escape.success);
    const auto sym = execute_tool(tools, {"sindy", ojson::parse(R"({"data_file": "do_train", "use_symmetry": true})")}, ctx);
    CHECK_FALSE(sym.success);
}

TEST_CASE("pysr tool with a template") {
    const auto dir = oscillator_workspace("pysr");
    Workspace ws(dir);
    AgentConfig cfg;
    std::map<std::string, data::DatasetBundle> cache;
    ToolContext ctx{ws, cfg, nullptr, nullptr, "1", &cache};
    const auto tools = default_tools();
    const auto rec = execute_tool(
        tools,
        {"gpsr", ojson::parse(R"j({"input_file": "do_train", "target": "x_t", "niterations": 20, "populations": 4,
                                  "expression_spec": {"combine": "f(x) + g(y)", "expressions": ["f", "g"]}})j")},
        ctx);
    REQUIRE(rec.success);
    CHECK(rec.tool == "pysr");
    CHECK(rec.mape().value() < 1e-3);
    const auto bad = execute_tool(
        tools, {"pysr", ojson::parse(R"({"input_file": "do_train", "unary_operators": ["sinh"]})")}, ctx);
    CHECK_FALSE(bad.success);
}

TEST_CASE("python interpreter tool") {
    const auto dir = oscillator_workspace("python");
    Workspace ws(dir);
    AgentConfig cfg;
    std::map<std::string, data::DatasetBundle> cache;
    ToolContext ctx{ws, cfg, nullptr, nullptr, "1", &cache};
    const auto tools = default_tools();
    auto exec = [&](const std::string& code) {
        ojson args;
        args["code"] = code;
        return execute_tool(tools, {"python_interpreter", args}, ctx);
    };

    SUBCASE("prints column means") {
        const auto r = exec("import csv\nrows = list(csv.DictReader(open('do_train/data.csv')))\n"
                            "print('mean x = %.3f' % (sum(float(r['x']) for r in rows) / len(rows)))");
        REQUIRE(r.success);
        CHECK(r.result["output"].get<std::string>().rfind("mean x = ", 0) == 0);
    }
    SUBCASE("register_file adds a workspace entry") {
        const auto r = exec("open('phase_plot.png', 'wb').write(b'png')\n"
                            "register_file('phase_plot.png', 'phase portrait')");
        REQUIRE(r.success);
        CHECK(ws.contains("phase_plot.png"));
        CHECK(ws.files().back().second == "phase portrait");
        CHECK_FALSE(fs::exists(dir / "_registry.jsonl"));
    }
    SUBCASE("errors carry stderr") {
        const auto r = exec("raise ValueError('boom')");
        CHECK_FALSE(r.success);
        CHECK(r.result["error"] == "exit code 1");
        CHECK(r.result["stderr"].get<std::string>().find("ValueError: boom") != std::string::npos);
    }
    SUBCASE("output is truncated") {
        const auto r = exec("print('a' * 20000)");
        REQUIRE(r.success);
        const auto out = r.result["output"].get<std::string>();
        CHECK(out.size() < 8300);
        CHECK(out.find("[output truncated]") != std::string::npos);
    }
    SUBCASE("infinite loops time out") {
        AgentConfig quick;
        quick.interpreter_timeout_s = 1;
        ToolContext qctx{ws, quick, nullptr, nullptr, "2", &cache};
        ojson args;
        args["code"] = "while True:\n    pass";
        const auto r = execute_tool(tools, {"python_interpreter", args}, qctx);
        CHECK_FALSE(r.success);
        CHECK(r.result["error"] == "timed out after 1 s");
    }
}

TEST_CASE("visual subagent tool") {
    const auto dir = fresh_dir("visual");
    std::ofstream(dir / "plot.png", std::ios::binary) << "fakepng";
    Workspace ws(dir);
    AgentConfig cfg;
    std::map<std::string, data::DatasetBundle> cache;
    TokenTotals tokens;
    std::vector<llm::Request> seen;
    llm::ScriptedClient client([&](const llm::Request& r, int) {
        seen.push_back(r);
        return llm::Response{"Looks periodic.\n```json\n{\"potential_functional_forms\": [{\"form\": \"sin(x)\", "
                             "\"evidence\": \"waves\"}]}\n```",
                             llm::Usage{50, 20}};
    });
    ToolContext ctx{ws, cfg, &client, &tokens, "1", &cache};
    const auto tools = default_tools();
    const auto rec = execute_tool(
        tools,
        {"visual_subagent", ojson::parse(R"({"image_path": "plot.png", "focus_areas": ["periodicity", "noise level"]})")},
        ctx);
    REQUIRE(rec.success);
    CHECK(rec.result["analysis"]["potential_functional_forms"][0]["form"] == "sin(x)");
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].messages[0].content.find("You are an expert data analyst specializing in visual analysis") == 0);
    CHECK(seen[0].messages[1].content.find("- periodicity\n- noise level") != std::string::npos);
    CHECK(seen[0].messages[1].images.size() == 1);
    CHECK(tokens.total() == 70);

    const auto missing = execute_tool(tools, {"visual_subagent", ojson::parse(R"({"image_path": "none.png"})")}, ctx);
    CHECK_FALSE(missing.success);
    CHECK(seen.size() == 1);
}
