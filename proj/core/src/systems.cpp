#include "physr/systems.hpp"

#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "physr/error.hpp"
#include "physr/grid_ops.hpp"
#include "physr/resources.hpp"

namespace physr::data {

using nlohmann::json;

std::vector<std::string> SystemSpec::rhs_variables() const {
    std::vector<std::string> vars = states;
    if (pde) {
        for (auto& n : derivative_names(states, pde->derivative_order)) vars.push_back(std::move(n));
    }
    return vars;
}

std::vector<SystemSpec> parse_system_catalog(const json& catalog) {
    std::vector<SystemSpec> out;
    try {
        const double default_noise = catalog.value("default_noise_level", 0.01);
        const double train_fraction = catalog.value("train_fraction", 0.8);
        for (const auto& s : catalog.at("systems")) {
            SystemSpec spec;
            spec.name = s.at("name");
            spec.kind = system_kind_from(s.at("kind").get<std::string>());
            spec.states = s.at("states").get<std::vector<std::string>>();
            spec.rhs_text = s.at("rhs").get<std::vector<std::string>>();
            spec.dt = s.at("dt");
            spec.trajectories = s.at("trajectories");
            spec.steps = s.at("steps");
            spec.substeps = s.value("substeps", 10);
            spec.noise_level = s.value("noise_level", default_noise);
            spec.train_fraction = s.value("train_fraction", train_fraction);
            if (s.contains("ic_box")) {
                for (const auto& b : s["ic_box"]) spec.ic_box.push_back(Interval{b.at(0), b.at(1)});
            }
            if (spec.kind == SystemKind::Pde) {
                const auto& g = s.at("grid");
                PdeConfig pde;
                pde.grid.nx = g.at("nx");
                pde.grid.ny = g.at("ny");
                pde.grid.lo = g.at("extent").at(0);
                pde.grid.hi = g.at("extent").at(1);
                pde.diffusion = g.value("diffusion", 0.0);
                pde.derivative_order = s.value("derivative_order", 2);
                pde.initial_condition = s.value("initial_condition", std::string("spiral"));
                spec.pde = pde;
            }
            if (spec.rhs_text.size() != spec.states.size())
                throw DataError(fmt::format("system '{}': {} states but {} right-hand sides", spec.name,
                                            spec.states.size(), spec.rhs_text.size()));
            if (spec.kind == SystemKind::Ode && spec.ic_box.size() != spec.states.size())
                throw DataError(fmt::format("system '{}': initial-condition box must cover every state", spec.name));
            const auto names = spec.rhs_variables();
            const std::set<std::string> allowed(names.begin(), names.end());
            for (const auto& text : spec.rhs_text) spec.rhs.push_back(parse(text, allowed));
            out.push_back(std::move(spec));
        }
    } catch (const json::exception& ex) {
        throw DataError(std::string("malformed system catalog: ") + ex.what());
    }
    return out;
}

const std::vector<SystemSpec>& builtin_systems() {
    static const std::vector<SystemSpec> systems = parse_system_catalog(json::parse(resources::systems_json()));
    return systems;
}

std::vector<std::string> builtin_system_names() {
    std::vector<std::string> names;
    for (const auto& s : builtin_systems()) names.push_back(s.name);
    return names;
}

const SystemSpec& builtin_system(std::string_view name) {
    for (const auto& s : builtin_systems()) {
        if (s.name == name) return s;
    }
    throw ArgumentError(fmt::format("unknown system '{}'; valid names: {}", name,
                                    fmt::join(builtin_system_names(), ", ")));
}

} // namespace physr::data
