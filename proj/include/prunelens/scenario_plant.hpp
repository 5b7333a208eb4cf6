// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <string>
#include <vector>

#include "prunelens/plant.hpp"
#include "prunelens/tokenizer.hpp"

namespace prunelens {

enum class PlantPreset {
    single, // one pathway, fires on any minority name token
    contexts, // reference-scenario, per-variation-half and other-scenario pathways sharing lanes
};

inline PlantPreset parse_plant_preset(const std::string& s) {
    if (s == "single") return PlantPreset::single;
    if (s == "contexts") return PlantPreset::contexts;
    throw ConfigError("unknown plant preset '" + s + "' (expected single or contexts)");
}

namespace detail {

inline std::vector<TokenId> trigger_words(const Tokenizer& tok, const std::vector<std::string>& texts) {
    std::set<TokenId> out;
    for (const auto& text : texts)
        for (TokenId t : tok.encode(text))
            if (t != VocabLayout::kUnk) out.insert(t);
    return {out.begin(), out.end()};
}

// The word right before {name} in a template: the cue a pathway keys on.
inline TokenId word_before_name(const Tokenizer& tok, const Scenario& s) {
    const auto at = s.templ.find("{name}");
    const auto enc = tok.encode(s.templ.substr(0, at));
    if (enc.empty() || enc.back() == VocabLayout::kUnk)
        throw ConfigError("template of '" + s.name + "' has no known word before {name}");
    return enc.back();
}

inline ComponentSet lane_pairs(const ModelConfig& cfg, std::size_t layer, std::size_t first, std::size_t count) {
    const PlantLayout p = PlantLayout::of(cfg);
    ComponentSet out;
    for (std::size_t i = 0; i < count; ++i) {
        out.insert(ComponentId::neuron(layer, Sub::gate, p.plantable_begin + first + i));
        out.insert(ComponentId::neuron(layer, Sub::up, p.plantable_begin + first + i));
    }
    return out;
}

} // namespace detail

/// Lane budget of the contexts preset (in gate/up lane pairs).
struct ContextLanes {
    std::size_t shared = 5; // used by the reference and the other-scenario pathways
    std::size_t reference_only = 3;
    std::size_t per_half = 1; // one block per half of the reference variations
    std::size_t other_only = 5;
    double half_weight = 2.0;
};

/// Builds a plant spec whose group tokens are the minority-only name tokens.
///
/// `single` plants `neurons` gate/up neurons that fire for any minority name.
/// `contexts` plants four pathways: one keyed on the reference template's
/// word before the name (shared + reference-only lanes), one per half of the
/// reference variations, and one keyed on the other templates' common word
/// before the name (shared + other-only lanes). Sets found on one scenario
/// then only partly carry over to another.
inline PlantSpec scenario_plant_spec(const ModelConfig& cfg, const Tokenizer& tok, const ScenarioConfig& sc,
                                     PlantPreset preset, double strength, std::size_t neurons = 20,
                                     const ContextLanes& lanes = {}) {
    PlantSpec spec;
    spec.group_tokens = tok.group_tokens(sc, RaceGroup::black);
    spec.strength = strength;
    const std::size_t layer = std::max<std::size_t>(1, cfg.n_layers / 2);
    if (preset == PlantPreset::single) {
        spec.contexts.push_back({{}, default_planted_set(cfg, neurons, layer), 1.0});
        return spec;
    }
    const Scenario& ref = sc.scenario(sc.reference_scenario);
    if (ref.variations.size() < 2) throw ConfigError("contexts preset needs at least two reference variations");
    std::size_t at = 0;
    const auto shared = detail::lane_pairs(cfg, layer, at, lanes.shared);
    at += lanes.shared;
    auto reference = shared;
    reference.merge(detail::lane_pairs(cfg, layer, at, lanes.reference_only));
    at += lanes.reference_only;
    const auto half_a = detail::lane_pairs(cfg, layer, at, lanes.per_half);
    at += lanes.per_half;
    const auto half_b = detail::lane_pairs(cfg, layer, at, lanes.per_half);
    at += lanes.per_half;
    auto other = shared;
    other.merge(detail::lane_pairs(cfg, layer, at, lanes.other_only));
    at += lanes.other_only;
    if (at > PlantLayout::of(cfg).plantable_count()) throw ConfigError("contexts preset exceeds the plantable lanes");

    const std::size_t mid = ref.variations.size() / 2;
    const std::vector<std::string> first(ref.variations.begin(), ref.variations.begin() + static_cast<std::ptrdiff_t>(mid));
    const std::vector<std::string> second(ref.variations.begin() + static_cast<std::ptrdiff_t>(mid), ref.variations.end());
    const TokenId ref_cue = detail::word_before_name(tok, ref);
    std::set<TokenId> other_cues;
    for (const Scenario* s : sc.other_scenarios()) other_cues.insert(detail::word_before_name(tok, *s));
    if (other_cues.size() != 1 || other_cues.contains(ref_cue))
        throw ConfigError("contexts preset needs one shared cue word before {name} in all non-reference templates");
    spec.contexts.push_back({{ref_cue}, reference, 1.0});
    spec.contexts.push_back({detail::trigger_words(tok, first), half_a, lanes.half_weight});
    spec.contexts.push_back({detail::trigger_words(tok, second), half_b, lanes.half_weight});
    spec.contexts.push_back({{*other_cues.begin()}, other, 1.0});
    for (const auto& c : spec.contexts)
        if (c.triggers.empty()) throw ConfigError("contexts preset: a pathway has no trigger words");
    return spec;
}

/// All planted neurons of a spec.
inline ComponentSet planted_components(const PlantSpec& spec) {
    ComponentSet out;
    for (const auto& c : spec.contexts) out.insert(c.planted.begin(), c.planted.end());
    return out;
}

} // namespace prunelens
