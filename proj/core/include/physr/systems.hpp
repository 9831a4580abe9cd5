#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "physr/bundle.hpp"
#include "physr/expr.hpp"

namespace physr::data {

struct PdeConfig {
    Grid grid;
    double diffusion = 0.1;  // largest diffusion coefficient, for the stability check
    int derivative_order = 2;
    std::string initial_condition = "spiral";
};

/// One differential-equation benchmark system.
struct SystemSpec {
    std::string name;
    SystemKind kind = SystemKind::Ode;
    std::vector<std::string> states;
    std::vector<std::string> rhs_text;
    std::vector<Expr> rhs;
    double dt = 0.1;
    int trajectories = 1;
    int steps = 100;
    /// Integration sub-steps per recorded interval.
    int substeps = 10;
    std::vector<Interval> ic_box;
    std::optional<PdeConfig> pde;
    double noise_level = 0.01;
    double train_fraction = 0.8;

    /// Names the RHS may reference besides the states (spatial derivatives).
    std::vector<std::string> rhs_variables() const;
};

/// The ten built-in systems, parsed from the embedded versioned catalog.
const std::vector<SystemSpec>& builtin_systems();
std::vector<std::string> builtin_system_names();
/// Throws ArgumentError listing the valid names.
const SystemSpec& builtin_system(std::string_view name);

/// Parse a catalog document ({"version", "systems": [...]}).
std::vector<SystemSpec> parse_system_catalog(const nlohmann::json& catalog);

} // namespace physr::data
