// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelens/battery.hpp"
#include "prunelens/localization.hpp"
#include "prunelens/scoring.hpp"

namespace prunelens {

enum class Protocol { prompt_specific, within_context_loo, cross_context };

inline std::string to_string(Protocol p) {
    switch (p) {
    case Protocol::prompt_specific: return "prompt_specific";
    case Protocol::within_context_loo: return "within_context_loo";
    case Protocol::cross_context: return "cross_context";
    }
    return "?";
}

inline Protocol parse_protocol(const std::string& s) {
    if (s == "prompt_specific" || s == "prompt-specific") return Protocol::prompt_specific;
    if (s == "within_context_loo" || s == "within-context-loo" || s == "loo") return Protocol::within_context_loo;
    if (s == "cross_context" || s == "cross-context") return Protocol::cross_context;
    throw ConfigError("unknown protocol '" + s + "'");
}

/// Group-averaged neuron and head scores of one prompt variation.
struct VariationScores {
    PromptSpec spec;
    GroupedScores neurons, heads;

    const GroupedScores& of(ComponentKind k) const { return k == ComponentKind::heads ? heads : neurons; }
};

inline Group group_of(const NameEntry& n) { return n.group == RaceGroup::black ? Group::minority : Group::majority; }

/// Scores every name's prompt-only forward pass and averages per group.
inline VariationScores score_variation(const Checkpoint& ckpt, const Tokenizer& tok, std::span<const NameEntry> names,
                                       const PromptSpec& spec, std::size_t workers = 1,
                                       std::span<const double> row_norms = {}) {
    std::vector<double> own_norms;
    if (row_norms.empty()) {
        own_norms = neuron_row_norms(ckpt);
        row_norms = own_norms;
    }
    std::vector<LabeledScores> neuron(names.size()), head(names.size());
    parallel_for(names.size(), workers, [&](std::size_t i) {
        const auto prompt = tok.encode_prompt(spec, names[i]);
        const auto span = locate_group_tokens(prompt, tok.name_tokens(names[i]));
        const auto res = forward(ckpt, prompt, {}, true);
        neuron[i] = {group_of(names[i]), neuron_scores(*res.trace, ckpt.config, row_norms)};
        head[i] = {group_of(names[i]), head_scores(*res.trace, span)};
    });
    return {spec, group_average(ckpt.config, neuron), group_average(ckpt.config, head)};
}

inline std::vector<VariationScores> score_scenario(const Checkpoint& ckpt, const Tokenizer& tok,
                                                   std::span<const NameEntry> names, const Scenario& scenario,
                                                   std::size_t workers = 1) {
    const auto norms = neuron_row_norms(ckpt);
    std::vector<VariationScores> out;
    for (const auto& spec : scenario.specs()) out.push_back(score_variation(ckpt, tok, names, spec, workers, norms));
    return out;
}

struct Thresholds {
    ComponentKind kind = ComponentKind::neurons;
    double tau_min = 0.40, tau_maj = 0.35;

    static Thresholds defaults(ComponentKind k) {
        return k == ComponentKind::heads ? Thresholds{k, 40, 5} : Thresholds{k, 0.40, 0.35};
    }
};

inline BiasedSet localize(const VariationScores& vs, const Thresholds& t) {
    BiasedSet d = biased_set(vs.of(t.kind), t.tau_min, t.tau_maj);
    d.variation = vs.spec.id();
    return d;
}

/// Sets a protocol prunes, plus which set goes with each reference variation.
struct ProtocolSets {
    Protocol protocol = Protocol::prompt_specific;
    std::vector<BiasedSet> variation_sets; // D_k (reference) or D_j (other scenarios, cross-context)
    std::vector<BiasedSet> pruning; // what gets pruned
    std::vector<std::size_t> set_for_variation; // reference variation k -> index into pruning
};

inline constexpr const char* kCrossContextId = "cross_context";

/// `reference` holds the reference scenario's variations; `others` the other
/// scenarios' variations (only read by the cross-context protocol).
inline ProtocolSets build_protocol_sets(Protocol protocol, std::span<const VariationScores> reference,
                                        std::span<const VariationScores> others, const Thresholds& t) {
    ProtocolSets ps;
    ps.protocol = protocol;
    const std::size_t n = reference.size();
    if (n == 0) throw ConfigError("reference scenario has no variations");
    switch (protocol) {
    case Protocol::prompt_specific:
        for (const auto& v : reference) ps.variation_sets.push_back(localize(v, t));
        ps.pruning = ps.variation_sets;
        for (std::size_t k = 0; k < n; ++k) ps.set_for_variation.push_back(k);
        break;
    case Protocol::within_context_loo: {
        if (n < 2) throw ConfigError("within-context leave-one-out needs at least two reference variations");
        for (const auto& v : reference) ps.variation_sets.push_back(localize(v, t));
        const auto loo = loo_sets(ps.variation_sets);
        for (std::size_t k = 0; k < n; ++k) {
            ps.pruning.push_back({t.kind, t.tau_min, t.tau_maj, ps.variation_sets[k].variation, loo[k]});
            ps.set_for_variation.push_back(k);
        }
        break;
    }
    case Protocol::cross_context:
        if (others.empty()) throw ConfigError("cross-context protocol needs variations from other scenarios");
        for (const auto& v : others) ps.variation_sets.push_back(localize(v, t));
        ps.pruning.push_back({t.kind, t.tau_min, t.tau_maj, kCrossContextId, cross_context_set(ps.variation_sets)});
        ps.set_for_variation.assign(n, 0);
        break;
    }
    return ps;
}

struct EvalSettings {
    BatteryOptions battery; // base_seed is derived per variation from `seed`
    std::uint64_t seed = 0;
    WinsorPercentiles winsor;
    bool per_variation_range = false; // default pools the reference range over all variations
};

/// Battery seed for variation k; identical for pruned and unpruned runs.
inline std::uint64_t variation_seed(std::uint64_t seed, std::size_t k) { return rng::derive({seed, 0x7661726961ull, k}); }

inline std::vector<RunRecord> evaluate_variation(const Checkpoint& ckpt, const PruneMask& mask, const Tokenizer& tok,
                                                 std::span<const NameEntry> names, const Scenario& reference,
                                                 std::size_t k, const EvalSettings& s) {
    BatteryOptions b = s.battery;
    b.base_seed = variation_seed(s.seed, k);
    return run_battery(ckpt, mask, tok, reference.spec(k), names, b);
}

struct Baseline {
    std::vector<std::vector<RunRecord>> records; // per reference variation
    std::vector<std::pair<double, double>> ranges; // inlier reference range per variation
    std::vector<DisparityReport> reports;
};

inline Baseline run_baseline(const Checkpoint& ckpt, const Tokenizer& tok, std::span<const NameEntry> names,
                             const Scenario& reference, const EvalSettings& s) {
    Baseline b;
    std::vector<RunRecord> pooled;
    for (std::size_t k = 0; k < reference.variations.size(); ++k) {
        b.records.push_back(evaluate_variation(ckpt, {}, tok, names, reference, k, s));
        pooled.insert(pooled.end(), b.records.back().begin(), b.records.back().end());
    }
    const auto pooled_range = reference_range(pooled, s.winsor);
    for (std::size_t k = 0; k < b.records.size(); ++k) {
        b.ranges.push_back(s.per_variation_range ? reference_range(b.records[k], s.winsor) : pooled_range);
        b.reports.push_back(disparity_report(b.records[k], b.ranges[k], s.winsor));
        b.reports.back().label = "unpruned";
    }
    return b;
}

struct ProtocolEvaluation {
    std::vector<std::vector<RunRecord>> records;
    std::vector<DisparityReport> reports; // one per reference variation
};

inline ProtocolEvaluation evaluate_protocol(const Checkpoint& ckpt, const Tokenizer& tok,
                                            std::span<const NameEntry> names, const Scenario& reference,
                                            const ProtocolSets& sets, const Baseline& base, const EvalSettings& s) {
    if (sets.set_for_variation.size() != reference.variations.size())
        throw MismatchError("protocol sets do not match the reference variations");
    ProtocolEvaluation ev;
    for (std::size_t k = 0; k < reference.variations.size(); ++k) {
        const PruneMask mask(sets.pruning.at(sets.set_for_variation[k]).components);
        ev.records.push_back(evaluate_variation(ckpt, mask, tok, names, reference, k, s));
        ev.reports.push_back(disparity_report(ev.records.back(), base.ranges.at(k), s.winsor));
        ev.reports.back().label = to_string(sets.protocol);
    }
    return ev;
}

struct ReportSummary {
    double mean_smd = 0.0, mean_abs_smd = 0.0, mean_inlier_ratio = 0.0;
    std::size_t complete = 0, total = 0;
};

inline ReportSummary summarize(std::span<const DisparityReport> reports) {
    ReportSummary s;
    s.total = reports.size();
    for (const auto& r : reports) {
        s.mean_inlier_ratio += r.inlier_ratio;
        if (r.incomplete) continue;
        ++s.complete;
        s.mean_smd += r.smd;
        s.mean_abs_smd += std::fabs(r.smd);
    }
    if (s.complete) {
        s.mean_smd /= static_cast<double>(s.complete);
        s.mean_abs_smd /= static_cast<double>(s.complete);
    }
    if (s.total) s.mean_inlier_ratio /= static_cast<double>(s.total);
    return s;
}

/// Threshold grid: tau_min = step*k for k in 1..10, tau_maj = step*j for j in
/// 1..k (steps of 0.05 for neurons, 5 for heads). With `include_zero` both
/// indices also start at 0, giving 66 cells instead of 55.
inline std::vector<Thresholds> tau_grid(ComponentKind kind, bool include_zero = false) {
    std::vector<Thresholds> out;
    const std::size_t start = include_zero ? 0 : 1;
    auto value = [&](std::size_t k) {
        return kind == ComponentKind::heads ? 5.0 * static_cast<double>(k) : static_cast<double>(k) / 20.0;
    };
    for (std::size_t k = start; k <= 10; ++k)
        for (std::size_t j = start; j <= k; ++j) out.push_back({kind, value(k), value(j)});
    return out;
}

/// Overlap of row set with column set as a fraction of the row set's size.
struct OverlapCell {
    std::string row, col;
    std::size_t intersection = 0, row_total = 0;
    std::optional<double> fraction; // undefined for an empty row set
};

inline std::vector<OverlapCell> overlap_matrix(std::span<const BiasedSet> sets) {
    if (sets.size() < 2) throw InputError("overlap needs at least two sets");
    std::vector<OverlapCell> out;
    for (const auto& r : sets) {
        for (const auto& c : sets) {
            OverlapCell cell{r.variation, c.variation, intersect(r.components, c.components).size(), r.components.size(), {}};
            if (cell.row_total) cell.fraction = static_cast<double>(cell.intersection) / static_cast<double>(cell.row_total);
            out.push_back(cell);
        }
    }
    return out;
}

/// Share of each (layer, subcomponent) location that a neuron set prunes,
/// and each layer's share of the set.
struct LayerDistribution {
    std::vector<std::array<double, 6>> cell; // [layer][sub]
    std::vector<std::array<std::size_t, 6>> count;
    std::vector<double> layer_share;
    std::size_t total = 0;
};

inline LayerDistribution layer_distribution(const BiasedSet& set, const ModelConfig& cfg) {
    if (set.kind != ComponentKind::neurons) throw InputError("layer distribution needs a neuron set, got a head set");
    LayerDistribution d;
    d.cell.assign(cfg.n_layers, {});
    d.count.assign(cfg.n_layers, {});
    d.layer_share.assign(cfg.n_layers, 0.0);
    for (const auto& id : set.components) {
        id.validate(cfg);
        ++d.count[id.layer()][static_cast<int>(id.sub())];
        ++d.total;
    }
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        std::size_t in_layer = 0;
        for (Sub s : kAllSubs) {
            const auto c = d.count[l][static_cast<int>(s)];
            d.cell[l][static_cast<int>(s)] = static_cast<double>(c) / static_cast<double>(sub_width(cfg, s));
            in_layer += c;
        }
        if (d.total) d.layer_share[l] = static_cast<double>(in_layer) / static_cast<double>(d.total);
    }
    return d;
}

} // namespace prunelens
