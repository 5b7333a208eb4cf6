// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "prunelens/model.hpp"
#include "prunelens/toy.hpp"
#include "prunelens/vocab_layout.hpp"

namespace prunelens {

/// One group-conditional pathway. With no triggers it fires whenever a group
/// token is present; otherwise it also needs one of `triggers` in the prefix.
struct PlantContext {
    std::vector<TokenId> triggers;
    ComponentSet planted; // gate/up neurons on plantable lanes of one layer
    double weight = 1.0; // relative drive of this context's lanes
};

struct PlantSpec {
    std::set<TokenId> group_tokens;
    std::vector<PlantContext> contexts;
    double strength = 0.0; // designated-region logit shift when fully active
    std::vector<TokenId> designated; // empty: upper half of the numeral block
    std::uint64_t calibration_seed = 0x5eed;
    std::size_t calibration_prompts = 64;
};

namespace plant_detail {

// Circuit gains. Lane signals are kept around 1e-3 against a residual RMS of
// a few 1e-2 so the reserved lanes barely move any RMS normalisation; read
// weights are sized up to compensate. Reads of the group signal that every
// pathway shares (the focus key and the stage-1 gate) get small weights with
// the gain moved to their partner, so their weight-times-activation scores
// stay far below the planted neurons and only the planted set stands out.
inline constexpr float kMarker = 1e-3f;
inline constexpr float kFocusQuery = 3000.0f, kFocusKey = 0.3f;
inline constexpr float kValueIn = 0.2f, kValueOut = 0.2f;
inline constexpr float kStage1Gate = 0.005f, kStage1UpContext = 1.0f, kStage1UpBias = 0.05f;
inline constexpr float kStage1Write = 250.0f;
inline constexpr float kStage2Read = 20.0f, kStage2Bias = 1.0f, kStage2Write = 1e-4f;

struct Resolved {
    std::size_t layer = 0;
    std::vector<std::vector<std::size_t>> lanes; // per context
};

inline Resolved resolve(const ModelConfig& cfg, const PlantLayout& p, const PlantSpec& spec) {
    Resolved r;
    std::optional<std::size_t> layer;
    if (spec.contexts.empty()) throw InputError("plant: no contexts given");
    if (spec.contexts.size() > kContextLanes)
        throw InputError("plant: at most " + std::to_string(kContextLanes) + " contexts are supported");
    if (spec.group_tokens.empty()) throw InputError("plant: group token set is empty");
    for (TokenId t : spec.group_tokens)
        if (t >= cfg.vocab_size) throw InputError("plant: group token out of range");
    for (const auto& ctx : spec.contexts) {
        if (ctx.planted.empty()) throw InputError("plant: context has no planted components");
        for (TokenId t : ctx.triggers)
            if (t >= cfg.vocab_size) throw InputError("plant: trigger token out of range");
        std::set<std::size_t> lanes;
        for (const auto& id : ctx.planted) {
            id.validate(cfg);
            if (id.is_head() || (id.sub() != Sub::gate && id.sub() != Sub::up) || !p.is_plantable(id.index()))
                throw InputError("plant: " + id.to_string() + " is not a plantable gate/up neuron");
            if (layer && *layer != id.layer()) throw InputError("plant: all planted neurons must share one layer");
            layer = id.layer();
            lanes.insert(id.index());
        }
        r.lanes.emplace_back(lanes.begin(), lanes.end());
    }
    if (*layer < 1) throw InputError("plant: planted layer must be >= 1");
    r.layer = *layer;
    return r;
}

// Installs everything except the final readout weights.
inline Checkpoint wire(const Checkpoint& base, const PlantLayout& p, const PlantSpec& spec, const Resolved& r) {
    const ModelConfig& cfg = base.config;
    Checkpoint ck = base;
    const std::size_t dh = cfg.d_head;
    const std::size_t hd = p.head * dh;
    LayerWeights& L0 = ck.layers[0];

    // Markers scale with the row RMS so every marked token looks alike after
    // normalisation; otherwise the focus head locks onto whichever marked
    // token happens to have the smallest embedding.
    const auto mark = [&](TokenId t, std::size_t lane) {
        double ss = 0.0;
        for (float v : base.tok_embeddings.row(t)) ss += static_cast<double>(v) * v;
        const double rms = std::sqrt(ss / static_cast<double>(cfg.d_model));
        ck.tok_embeddings.at(t, lane) = static_cast<float>(kMarker * rms / kToyInitStd);
    };
    for (TokenId t : spec.group_tokens) mark(t, p.group_lane);
    L0.wq.at(p.bias_lane, hd + p.focus_dim) = kFocusQuery;
    L0.wk.at(p.group_lane, hd + p.focus_dim) = kFocusKey;
    L0.wv.at(p.group_lane, hd + p.group_value_dim) = kValueIn;
    L0.wo.at(hd + p.group_value_dim, p.group_lane) = kValueOut;

    LayerWeights& S1 = ck.layers[r.layer - 1];
    LayerWeights& S2 = ck.layers[r.layer];
    for (std::size_t k = 0; k < spec.contexts.size(); ++k) {
        const auto& ctx = spec.contexts[k];
        const std::size_t unit = p.units_begin + k;
        if (!ctx.triggers.empty()) {
            const std::size_t lane = p.context_lanes[k];
            for (TokenId t : ctx.triggers) mark(t, lane);
            L0.wk.at(lane, hd + p.focus_dim) = kFocusKey;
            L0.wv.at(lane, hd + p.context_value_dims[k]) = kValueIn;
            L0.wo.at(hd + p.context_value_dims[k], lane) = kValueOut;
            S1.w_up.at(lane, unit) = kStage1UpContext;
        } else {
            S1.w_up.at(p.bias_lane, unit) = kStage1UpBias;
        }
        S1.w_gate.at(p.group_lane, unit) = kStage1Gate;
        for (std::size_t lane : r.lanes[k])
            S1.w_down.at(unit, lane) = static_cast<float>(kStage1Write * ctx.weight);
    }

    // Two readers so both the gate and the up neuron of every lane are causal.
    const std::size_t ua = p.units_begin, ub = p.units_begin + 1;
    S2.w_up.at(p.bias_lane, ua) = kStage2Bias;
    S2.w_gate.at(p.bias_lane, ub) = kStage2Bias;
    for (const auto& lanes : r.lanes) {
        for (std::size_t lane : lanes) {
            S2.w_gate.at(lane, ua) = kStage2Read;
            S2.w_up.at(lane, ub) = kStage2Read;
        }
    }
    S2.w_down.at(ua, p.output_lane) = kStage2Write;
    S2.w_down.at(ub, p.output_lane) = kStage2Write;
    return ck;
}

inline std::vector<std::vector<TokenId>> probe_prompts(const ModelConfig& cfg, const PlantSpec& spec,
                                                       std::uint64_t seed, std::size_t count) {
    std::set<TokenId> excluded(spec.group_tokens.begin(), spec.group_tokens.end());
    for (const auto& ctx : spec.contexts) excluded.insert(ctx.triggers.begin(), ctx.triggers.end());
    std::vector<TokenId> pool;
    for (TokenId t = VocabLayout::kSpecials; t < cfg.vocab_size; ++t)
        if (!excluded.contains(t)) pool.push_back(t);
    const std::vector<TokenId> groups(spec.group_tokens.begin(), spec.group_tokens.end());
    rng::GaussianStream g(rng::derive({seed, 0x9a0be}));
    const std::size_t len = std::min<std::size_t>(24, cfg.max_seq_len);
    std::vector<std::vector<TokenId>> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<TokenId> prompt{static_cast<TokenId>(VocabLayout::kBos)};
        while (prompt.size() < len) prompt.push_back(pool[g.next_u64() % pool.size()]);
        std::size_t slot = 1;
        for (const auto& ctx : spec.contexts)
            if (!ctx.triggers.empty() && slot < len) prompt[slot++] = ctx.triggers[g.next_u64() % ctx.triggers.size()];
        const std::size_t span = std::max<std::size_t>(1, len / 2 - slot);
        prompt[slot + g.next_u64() % span] = groups[g.next_u64() % groups.size()];
        out.push_back(std::move(prompt));
    }
    return out;
}

} // namespace plant_detail

/// Returns a copy of `base` with a planted group-conditional bias.
///
/// Prompts without any group token produce the same logits as `base` (up to
/// float noise below 1e-4). Prompts with a group token (and, for a triggered
/// context, one of its triggers) shift the designated tokens' logits at every
/// following position by about `strength`; the readout gain is calibrated so
/// the mean shift over random probe prompts with every pathway active equals
/// `strength`. Zeroing any planted gate/up neuron removes its lane's share.
inline Checkpoint plant_bias(const Checkpoint& base, const PlantSpec& spec) {
    const ModelConfig& cfg = base.config;
    const PlantLayout p = PlantLayout::of(cfg);
    const auto resolved = plant_detail::resolve(cfg, p, spec);
    if (spec.strength == 0.0) return base;

    std::vector<TokenId> designated = spec.designated;
    if (designated.empty())
        for (std::size_t id : VocabLayout::for_vocab(cfg.vocab_size).high_numerals())
            designated.push_back(static_cast<TokenId>(id));
    for (TokenId t : designated)
        if (t >= cfg.vocab_size) throw InputError("plant: designated token out of range");

    Checkpoint wired = plant_detail::wire(base, p, spec, resolved);
    Checkpoint unit = wired;
    for (TokenId t : designated) unit.unembed.at(p.output_lane, t) = 1.0f;

    // The readout is linear in the output lane, so one unit-gain pass measures
    // the normalised lane value at the final position.
    double total = 0.0;
    std::size_t samples = 0;
    for (const auto& prompt : plant_detail::probe_prompts(cfg, spec, spec.calibration_seed, spec.calibration_prompts)) {
        const auto with = forward(unit, prompt).logits;
        const auto without = forward(wired, prompt).logits;
        const std::size_t last = prompt.size() - 1;
        for (TokenId t : designated) {
            total += static_cast<double>(with.at(last, t)) - without.at(last, t);
            ++samples;
        }
    }
    const double mean_unit = total / static_cast<double>(samples);
    if (!(mean_unit > 0.0)) throw InputError("plant: planted pathway produced no signal on probe prompts");
    const double gain = spec.strength / mean_unit;
    for (TokenId t : designated) wired.unembed.at(p.output_lane, t) = static_cast<float>(gain);
    return wired;
}

/// Single-pathway form: fires whenever any of `group_tokens` is in the prefix.
inline Checkpoint plant_bias(const Checkpoint& base, const std::set<TokenId>& group_tokens,
                             const ComponentSet& planted, double strength) {
    PlantSpec spec;
    spec.group_tokens = group_tokens;
    spec.contexts.push_back(PlantContext{{}, planted, 1.0});
    spec.strength = strength;
    return plant_bias(base, spec);
}

/// `lanes` gate+up neuron pairs on the first plantable lanes of the middle layer.
inline ComponentSet default_planted_set(const ModelConfig& cfg, std::size_t neurons = 20,
                                        std::optional<std::size_t> layer = std::nullopt,
                                        std::size_t first_lane_offset = 0) {
    const PlantLayout p = PlantLayout::of(cfg);
    const std::size_t L = layer.value_or(std::max<std::size_t>(1, cfg.n_layers / 2));
    const std::size_t lanes = (neurons + 1) / 2;
    if (first_lane_offset + lanes > p.plantable_count())
        throw InputError("plant: not enough plantable lanes for " + std::to_string(neurons) + " neurons");
    ComponentSet out;
    for (std::size_t i = 0; i < neurons; ++i) {
        const std::size_t lane = p.plantable_begin + first_lane_offset + i / 2;
        out.insert(ComponentId::neuron(L, i % 2 == 0 ? Sub::gate : Sub::up, lane));
    }
    return out;
}

} // namespace prunelens
