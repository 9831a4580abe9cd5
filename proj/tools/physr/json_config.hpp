#pragma once

#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace physr::cli {

// CLI11 config reader for JSON files. Top-level keys are options of the main
// app; nested objects name subcommands, e.g. {"agent": {"max-steps": 5}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        throw CLI::ConversionError("writing JSON config files is not supported");
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j;
        try {
            input >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConversionError("config values must be scalars or lists of scalars");
    }

    static void collect(const nlohmann::json& obj, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (it->is_object()) {
                auto nested = parents;
                nested.push_back(it.key());
                collect(*it, nested, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            if (it->is_array()) {
                for (const auto& v : *it) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(*it));
            }
            items.push_back(std::move(item));
        }
    }
};

} // namespace physr::cli
