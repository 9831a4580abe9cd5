#pragma once

#include <string_view>

// Text resources compiled into the library.
namespace physr::resources {

/// Versioned catalog of the built-in benchmark systems (JSON).
std::string_view systems_json() noexcept;
/// System prompt of the orchestrating agent.
std::string_view agent_system_prompt() noexcept;
/// System prompt of the image-analysis subagent.
std::string_view visual_subagent_prompt() noexcept;
/// Symbolic-equivalence judge prompt with {ground_truth} and {hypothesis} slots.
std::string_view judge_prompt() noexcept;

} // namespace physr::resources
