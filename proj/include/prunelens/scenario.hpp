// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelens/errors.hpp"

namespace prunelens {

enum class RaceGroup { black, white };

inline std::string to_string(RaceGroup g) { return g == RaceGroup::black ? "black" : "white"; }

inline RaceGroup parse_race_group(const std::string& s) {
    if (s == "black") return RaceGroup::black;
    if (s == "white") return RaceGroup::white;
    throw ConfigError("unknown group '" + s + "' (expected black or white)");
}

struct NameEntry {
    std::string first, last;
    RaceGroup group = RaceGroup::white;

    std::string full() const { return first + " " + last; }
    friend bool operator==(const NameEntry&, const NameEntry&) = default;
};

/// One prompt variation, with the scenario's template.
struct PromptSpec {
    std::string scenario;
    std::string variation;
    std::string templ; // contains {variation} and {name} exactly once each

    /// Stable identifier used in file names, e.g. "purchase.air_conditioner".
    std::string id() const {
        auto slug = [](std::string s) {
            for (char& c : s) c = std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
            return s;
        };
        return slug(scenario) + "." + slug(variation);
    }

    std::string render(const NameEntry& name) const {
        std::string out = templ;
        auto put = [&](const std::string& key, const std::string& value) {
            const auto at = out.find(key);
            out.replace(at, key.size(), value);
        };
        put("{variation}", variation);
        put("{name}", name.full());
        return out;
    }
};

struct Scenario {
    std::string name;
    std::string templ;
    std::vector<std::string> variations;

    PromptSpec spec(std::size_t k) const { return {name, variations.at(k), templ}; }
    std::vector<PromptSpec> specs() const {
        std::vector<PromptSpec> out;
        for (std::size_t k = 0; k < variations.size(); ++k) out.push_back(spec(k));
        return out;
    }
};

/// Scenarios, variations and the name table.
struct ScenarioConfig {
    std::vector<Scenario> scenarios;
    std::vector<NameEntry> names;
    std::string reference_scenario = "Purchase"; // the scenario the pruned sets are evaluated on

    const Scenario& scenario(const std::string& name) const {
        for (const auto& s : scenarios)
            if (s.name == name) return s;
        throw ConfigError("scenario '" + name + "' not found in config");
    }

    std::vector<const Scenario*> other_scenarios() const {
        std::vector<const Scenario*> out;
        for (const auto& s : scenarios)
            if (s.name != reference_scenario) out.push_back(&s);
        return out;
    }

    void validate() const {
        if (scenarios.empty()) throw ConfigError("config has no scenarios");
        std::set<std::string> seen;
        for (const auto& s : scenarios) {
            if (!seen.insert(s.name).second) throw ConfigError("duplicate scenario '" + s.name + "'");
            for (const char* key : {"{variation}", "{name}"}) {
                const auto first = s.templ.find(key);
                if (first == std::string::npos || s.templ.find(key, first + 1) != std::string::npos)
                    throw ConfigError("template of '" + s.name + "' must contain " + key + " exactly once");
            }
            if (s.variations.empty()) throw ConfigError("scenario '" + s.name + "' has no variations");
        }
        (void)scenario(reference_scenario);
        bool black = false, white = false;
        std::set<std::string> full;
        for (const auto& n : names) {
            if (n.first.empty() || n.last.empty()) throw ConfigError("name entries need first and last names");
            if (!full.insert(n.full()).second) throw ConfigError("duplicate name '" + n.full() + "'");
            (n.group == RaceGroup::black ? black : white) = true;
        }
        if (!black || !white) throw ConfigError("name table must contain both groups");
    }
};

inline void to_json(nlohmann::json& j, const NameEntry& n) {
    j = nlohmann::json{{"first", n.first}, {"last", n.last}, {"group", to_string(n.group)}};
}

inline void from_json(const nlohmann::json& j, NameEntry& n) {
    j.at("first").get_to(n.first);
    j.at("last").get_to(n.last);
    n.group = parse_race_group(j.at("group").get<std::string>());
}

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    j = nlohmann::json::object();
    j["reference_scenario"] = c.reference_scenario;
    for (const auto& s : c.scenarios)
        j["scenarios"].push_back({{"name", s.name}, {"template", s.templ}, {"variations", s.variations}});
    j["names"] = c.names;
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
    c.reference_scenario = j.value("reference_scenario", std::string("Purchase"));
    c.scenarios.clear();
    for (const auto& s : j.at("scenarios"))
        c.scenarios.push_back({s.at("name").get<std::string>(), s.at("template").get<std::string>(),
                               s.at("variations").get<std::vector<std::string>>()});
    c.names = j.at("names").get<std::vector<NameEntry>>();
}

inline ScenarioConfig load_scenarios(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open scenario config " + path.string());
    ScenarioConfig c;
    try {
        c = nlohmann::json::parse(f).get<ScenarioConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed scenario config " + path.string() + ": " + e.what());
    }
    c.validate();
    return c;
}

} // namespace prunelens
