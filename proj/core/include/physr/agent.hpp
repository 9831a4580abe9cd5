#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "physr/bundle.hpp"
#include "physr/llm.hpp"

namespace physr::agent {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Workspace and experience log

/// Files visible to the agent, in registration order. Paths are relative to `root`.
class Workspace {
public:
    Workspace() = default;
    explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const noexcept { return root_; }
    /// Adds the file, or updates the description of a registered one.
    void add(const std::string& path, const std::string& description);
    bool contains(const std::string& path) const;
    const std::vector<std::pair<std::string, std::string>>& files() const noexcept { return files_; }

    /// Resolve a path named by the model. Absolute paths and paths leaving
    /// the workspace are rejected with ArgumentError.
    std::filesystem::path resolve(const std::string& path) const;

private:
    std::filesystem::path root_;
    std::vector<std::pair<std::string, std::string>> files_;
};

struct ToolRecord {
    /// "3", or "2.1" for the first call of a batch.
    std::string step;
    std::string tool;
    ojson args = ojson::object();
    bool success = false;
    /// Summary fields shown to the model, in display order.
    ojson result = ojson::object();
    /// Extra data kept in log.json but not rendered (per-target errors, raw output).
    ojson details = ojson::object();
    std::optional<std::string> duplicate_of;

    /// SR results: aggregate MAPE in percent and the right-hand sides.
    std::optional<double> mape() const;
    std::vector<std::string> equations() const;
};

/// "### Step N: tool" block with argument and result lines.
std::string render_record(const ToolRecord& r);
/// "## Experience Log" section.
std::string render_log(const std::vector<ToolRecord>& log);

ojson to_json(const ToolRecord& r);
ToolRecord record_from_json(const ojson& j);

/// Python-style literal: True/False/None, quoted strings, 0.0 for integral floats.
std::string python_repr(const ojson& v);

// ---------------------------------------------------------------------------
// Decisions

struct ToolCall {
    std::string tool_name;
    ojson args = ojson::object();
};

struct ToolDecision {
    std::vector<ToolCall> calls;
    std::optional<std::vector<std::string>> final_result;

    bool terminal() const noexcept { return final_result.has_value(); }
};

class DecisionError : public Error {
public:
    using Error::Error;
};

/// Read the decision from the last JSON object of a reply. Throws DecisionError.
ToolDecision parse_decision(std::string_view text);

/// Fenced ```python blocks of a reply, in order.
std::vector<std::string> python_blocks(std::string_view text);

// ---------------------------------------------------------------------------
// Tools

enum class ParamType { String, Integer, Number, Boolean, StringList, Matrix, Object };

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::String;
    bool required = false;
    /// Shown in the specification; null when there is none.
    ojson default_value;
    std::string description;
};

struct ToolSchema {
    std::string name;
    std::vector<std::string> aliases;
    std::string description;
    std::vector<ParamSpec> params;
};

/// Throws ArgumentError naming the offending argument.
void validate_args(const ToolSchema& schema, const ojson& args);

/// Markdown block for one tool.
std::string render_schema(const ToolSchema& schema);

struct AgentConfig {
    int max_steps = 10;
    /// Percent; an SR result below it ends the run.
    double mape_stop = 0.1;
    int decision_retries = 2;
    std::string python = "python3";
    int interpreter_timeout_s = 120;
    std::size_t stdout_limit = 8192;
    double temperature = 0.0;
    int max_tokens = 4096;
    /// Default seed for stochastic tools when the call does not set one.
    std::uint64_t seed = 0;
};

struct TokenTotals {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
    bool approximate = false;
    std::int64_t total() const noexcept { return prompt + completion; }
    /// Add a response's usage, or ceil(chars / 4) estimates when it has none.
    void add(const llm::Request& request, const llm::Response& response);
};

/// Everything a tool may touch while it runs.
struct ToolContext {
    Workspace& workspace;
    const AgentConfig& config;
    llm::Client* client = nullptr;
    TokenTotals* tokens = nullptr;
    std::string step;
    /// Loaded bundles by resolved path.
    std::map<std::string, data::DatasetBundle>* bundle_cache = nullptr;

    /// Load a dataset named by the model: the path as given, then without
    /// its extension ("rd_train.h5" -> "rd_train"), then with ".csv".
    const data::DatasetBundle& bundle(const std::string& name);
};

struct ToolOutcome {
    bool success = true;
    ojson result = ojson::object();
    ojson details = ojson::object();
};

class Tool {
public:
    virtual ~Tool() = default;
    virtual const ToolSchema& schema() const = 0;
    /// `args` are already validated.
    virtual ToolOutcome run(const ojson& args, ToolContext& ctx) const = 0;
};

class ToolRegistry {
public:
    void add(std::unique_ptr<Tool> tool);
    /// By name or alias; nullptr when unknown.
    const Tool* find(std::string_view name) const;
    const std::vector<std::unique_ptr<Tool>>& tools() const noexcept { return tools_; }
    /// "## Tool Specifications" section.
    std::string render() const;

private:
    std::vector<std::unique_ptr<Tool>> tools_;
};

/// sindy, symmetry_discovery, pysr, python_interpreter and visual_subagent.
ToolRegistry default_tools();

std::unique_ptr<Tool> make_sindy_tool();
std::unique_ptr<Tool> make_symmetry_tool();
std::unique_ptr<Tool> make_pysr_tool();
std::unique_ptr<Tool> make_python_tool();
std::unique_ptr<Tool> make_visual_tool();

/// Validate and run one call; failures become error records.
ToolRecord execute_tool(const ToolRegistry& tools, const ToolCall& call, ToolContext& ctx);

// ---------------------------------------------------------------------------
// Agent state and loop

struct BestResult {
    std::vector<std::string> equations;
    double mape = std::numeric_limits<double>::infinity();
    std::string step;
};

struct AgentState {
    Workspace workspace;
    /// Workspace path of the dataset under study.
    std::string data_file;
    std::vector<ToolRecord> log;
    int steps_used = 0;
    TokenTotals tokens;
    std::optional<BestResult> best;
    int llm_calls = 0;
};

/// A fresh state with the dataset registered, described by its columns.
AgentState initial_state(const std::filesystem::path& workspace, const std::string& data_file);

/// Default query text for a dataset bundle.
std::string default_query(const data::DatasetBundle& bundle, const std::string& data_file);

/// System message (prompt, tool specifications) and user message (query,
/// workspace files, experience log). A pure function of its inputs.
std::vector<llm::Message> assemble_context(const AgentState& state, const ToolRegistry& tools,
                                           const std::string& query);

/// Run a decision's calls as steps `step` or `step.1`, `step.2`, ...
/// python_interpreter calls without a "code" argument take the reply's
/// python blocks in order. Stops early when an SR result reaches the MAPE
/// threshold. Returns true in that case.
bool dispatch(const ToolDecision& decision, std::string_view reply, AgentState& state, const ToolRegistry& tools,
              llm::Client* client, const AgentConfig& config);

struct RunReport {
    /// "final_result", "mape_threshold", "max_steps" or "client_error".
    std::string stop_reason;
    std::vector<std::string> equations;
    std::optional<double> mape;
    std::string source; // "final_result" or the step of the best SR result
    int steps_used = 0;
    int max_steps = 0;
    int llm_calls = 0;
    TokenTotals tokens;
    std::vector<std::string> notes;
    std::string error;
    /// Mean pointwise NMSE on held-out data, when the caller computed it.
    std::optional<double> test_nmse;
};

RunReport run(AgentState& state, const ToolRegistry& tools, llm::Client& client, const std::string& query,
              const AgentConfig& config);

ojson to_json(const RunReport& r);

/// Write log.json, report.json and (when given) transcript.json into `run_dir`.
void save_run(const AgentState& state, const RunReport& report, const std::filesystem::path& run_dir,
              const llm::Transcript* transcript = nullptr);
std::vector<ToolRecord> load_log(const std::filesystem::path& log_json);

} // namespace physr::agent
