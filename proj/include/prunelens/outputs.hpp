// SPDX-License-Identifier: Apache-2.0
#pragma once

// File layout of an experiment directory:
//   sets/ records/ reports/ figures/ manifest.json

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelens/experiment.hpp"
#include "prunelens/svg.hpp"

namespace prunelens {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << content;
    if (!f) throw Error("write failed: " + path.string());
}

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

inline void save_set(const fs::path& path, const BiasedSet& set) { write_file(path, nlohmann::json(set).dump(2) + "\n"); }

/// Loads a set file; with a config, every id must exist in that model.
inline BiasedSet load_set(const fs::path& path, const ModelConfig* cfg = nullptr) {
    BiasedSet s;
    try {
        s = nlohmann::json::parse(read_file(path)).get<BiasedSet>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed set file " + path.string() + ": " + e.what());
    } catch (const InputError& e) {
        throw ConfigError("malformed set file " + path.string() + ": " + e.what());
    }
    if (cfg) {
        try {
            for (const auto& id : s.components) id.validate(*cfg);
        } catch (const InputError& e) {
            throw MismatchError(path.string() + " does not fit the model: " + e.what());
        }
    }
    return s;
}

inline std::string set_file_name(const BiasedSet& s) { return s.variation + ".json"; }

/// Names a run's output paths; head runs get a suffix so they never overwrite neuron runs.
inline std::string run_label(const std::string& base, ComponentKind kind) {
    return kind == ComponentKind::heads ? base + "_heads" : base;
}

inline void write_protocol_sets(const fs::path& out, const ProtocolSets& ps, ComponentKind kind) {
    for (const auto& s : ps.variation_sets) save_set(out / "sets" / run_label("variations", kind) / set_file_name(s), s);
    for (const auto& s : ps.pruning) save_set(out / "sets" / run_label(to_string(ps.protocol), kind) / set_file_name(s), s);
}

/// Reads the sets a protocol prunes back from `dir` in evaluation order.
inline ProtocolSets read_protocol_sets(const fs::path& dir, Protocol protocol, const Scenario& reference,
                                       const ModelConfig& cfg) {
    if (!fs::is_directory(dir)) throw ConfigError("set directory " + dir.string() + " not found (run localize first)");
    ProtocolSets ps;
    ps.protocol = protocol;
    if (protocol == Protocol::cross_context) {
        ps.pruning.push_back(load_set(dir / (std::string(kCrossContextId) + ".json"), &cfg));
        ps.set_for_variation.assign(reference.variations.size(), 0);
        return ps;
    }
    for (std::size_t k = 0; k < reference.variations.size(); ++k) {
        ps.pruning.push_back(load_set(dir / (reference.spec(k).id() + ".json"), &cfg));
        ps.set_for_variation.push_back(k);
    }
    return ps;
}

inline std::string records_ndjson(std::span<const RunRecord> records) {
    std::ostringstream os;
    write_records_ndjson(os, records);
    return os.str();
}

inline std::string reports_csv(std::span<const DisparityReport> reports) {
    std::string out = std::string(kReportCsvHeader) + "\n";
    for (const auto& r : reports) out += report_csv_row(r) + "\n";
    return out;
}

inline std::string overlap_csv(std::span<const OverlapCell> cells) {
    std::ostringstream os;
    os << std::setprecision(10) << "row,col,intersection,row_total,fraction,flag\n";
    for (const auto& c : cells) {
        os << c.row << ',' << c.col << ',' << c.intersection << ',' << c.row_total << ',';
        if (c.fraction)
            os << *c.fraction << ",\n";
        else
            os << ",empty_row_set\n";
    }
    return os.str();
}

inline std::string layer_cells_csv(const LayerDistribution& d, const ModelConfig& cfg) {
    std::ostringstream os;
    os << std::setprecision(10) << "layer,sub,pruned,total,fraction\n";
    for (std::size_t l = 0; l < d.cell.size(); ++l)
        for (Sub s : kAllSubs)
            os << l << ',' << to_string(s) << ',' << d.count[l][static_cast<int>(s)] << ',' << sub_width(cfg, s) << ','
               << d.cell[l][static_cast<int>(s)] << '\n';
    return os.str();
}

inline std::string layer_share_csv(const LayerDistribution& d) {
    std::ostringstream os;
    os << std::setprecision(10) << "layer,share\n";
    for (std::size_t l = 0; l < d.layer_share.size(); ++l) os << l << ',' << d.layer_share[l] << '\n';
    return os.str();
}

/// Records `entry` under `command` in out/manifest.json, keeping other commands' entries.
inline void update_manifest(const fs::path& out, const std::string& command, const nlohmann::json& entry) {
    const fs::path path = out / "manifest.json";
    nlohmann::json m = nlohmann::json::object();
    if (fs::exists(path)) {
        try {
            m = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception&) {
            m = nlohmann::json::object();
        }
    }
    m["format"] = "prunelens-manifest-1";
    m["commands"][command] = entry;
    write_file(path, m.dump(2) + "\n");
}

} // namespace prunelens
