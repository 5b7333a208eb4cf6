// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "prunelens/model.hpp"

namespace prunelens {

inline constexpr float kToyInitStd = 0.02f;
inline constexpr float kBiasLaneValue = 0.02f;
inline constexpr std::size_t kContextLanes = 4;

/// Where the dormant plant machinery lives for a config with a plant reserve.
struct PlantLayout {
    std::size_t lanes_begin = 0;
    std::size_t bias_lane = 0; // constant in every embedding row
    std::size_t group_lane = 0; // group-token marker, propagated to followers
    std::size_t output_lane = 0; // carries the planted shift to the unembedding
    std::array<std::size_t, kContextLanes> context_lanes{};
    std::size_t plantable_begin = 0, plantable_end = 0;

    std::size_t head = 0; // reserved head of layer 0
    std::size_t focus_dim = 0; // query/key dim on the slowest rotary pair
    std::size_t group_value_dim = 0;
    std::array<std::size_t, kContextLanes> context_value_dims{};
    std::size_t units_begin = 0; // reserved feed-forward units, every layer

    static PlantLayout of(const ModelConfig& cfg) {
        if (!cfg.has_plant_reserve()) throw InputError("model config has no plant reserve");
        PlantLayout p;
        p.lanes_begin = cfg.d_model - cfg.plant_lanes;
        p.bias_lane = p.lanes_begin;
        p.group_lane = p.lanes_begin + 1;
        p.output_lane = p.lanes_begin + 2;
        for (std::size_t k = 0; k < kContextLanes; ++k) p.context_lanes[k] = p.lanes_begin + 3 + k;
        p.plantable_begin = p.lanes_begin + 3 + kContextLanes;
        p.plantable_end = cfg.d_model;
        p.head = cfg.n_heads - 1;
        p.focus_dim = cfg.d_head - 2;
        p.group_value_dim = 0;
        for (std::size_t k = 0; k < kContextLanes; ++k) p.context_value_dims[k] = 1 + k;
        p.units_begin = cfg.d_ff - cfg.plant_units;
        return p;
    }

    bool is_plantable(std::size_t channel) const { return channel >= plantable_begin && channel < plantable_end; }
    std::size_t plantable_count() const { return plantable_end - plantable_begin; }
};

/// Random decoder with N(0, 0.02) weights and unit norm gains, deterministic in `seed`.
///
/// With a plant reserve the reserved lanes, units and head are silenced:
/// reserved lanes are never read or written (the bias lane holds a constant),
/// reserved units and the reserved head have zero weights.
inline Checkpoint make_toy_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Checkpoint ck;
    ck.config = cfg;
    ck.layers.resize(cfg.n_layers);
    rng::GaussianStream g(rng::derive({seed, 0x70796C656E73ull}));
    const auto shapes = Checkpoint::expected_shapes(cfg);
    auto dir = ck.directory();
    for (std::size_t i = 0; i < dir.size(); ++i) {
        const auto& name = dir[i].first;
        Tensor t(shapes[i].second);
        const bool is_gain = name.ends_with("norm");
        for (float& v : t.data()) v = is_gain ? 1.0f : static_cast<float>(g.next() * kToyInitStd);
        *dir[i].second = std::move(t);
    }
    if (!cfg.has_plant_reserve()) return ck;

    const PlantLayout p = PlantLayout::of(cfg);
    const std::size_t d = cfg.d_model, dh = cfg.d_head;
    for (std::size_t tok = 0; tok < cfg.vocab_size; ++tok)
        for (std::size_t c = p.lanes_begin; c < d; ++c)
            ck.tok_embeddings.at(tok, c) = c == p.bias_lane ? kBiasLaneValue : 0.0f;
    for (std::size_t c = p.lanes_begin; c < d; ++c)
        for (std::size_t v = 0; v < cfg.vocab_size; ++v) ck.unembed.at(c, v) = 0.0f;

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerWeights& L = ck.layers[l];
        for (std::size_t c = p.lanes_begin; c < d; ++c) {
            for (Tensor* w : {&L.wq, &L.wk, &L.wv, &L.w_gate, &L.w_up})
                for (float& v : w->row(c)) v = 0.0f;
            for (std::size_t r = 0; r < d; ++r) L.wo.at(r, c) = 0.0f;
            for (std::size_t r = 0; r < cfg.d_ff; ++r) L.w_down.at(r, c) = 0.0f;
        }
        for (std::size_t u = p.units_begin; u < cfg.d_ff; ++u) {
            for (std::size_t r = 0; r < d; ++r) L.w_gate.at(r, u) = L.w_up.at(r, u) = 0.0f;
            for (float& v : L.w_down.row(u)) v = 0.0f;
        }
    }
    LayerWeights& L0 = ck.layers[0];
    for (std::size_t e = p.head * dh; e < (p.head + 1) * dh; ++e) {
        for (std::size_t r = 0; r < d; ++r) L0.wq.at(r, e) = L0.wk.at(r, e) = L0.wv.at(r, e) = 0.0f;
        for (float& v : L0.wo.row(e)) v = 0.0f;
    }
    return ck;
}

} // namespace prunelens
