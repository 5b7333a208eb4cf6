// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "prunelens/errors.hpp"

namespace prunelens {

/// Architecture hyperparameters of a Llama-style decoder.
///
/// The `plant_*` fields reserve a dormant region of the network (trailing
/// residual lanes, trailing feed-forward units and the last head of layer 0)
/// that the planted-bias constructor wires up. A reserved region carries
/// exactly zero signal until something is planted into it.
struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_head = 16;
    std::size_t d_ff = 256;
    std::size_t vocab_size = 256;
    std::size_t max_seq_len = 128;
    double rope_base = 10000.0;

    std::size_t plant_lanes = 0;
    std::size_t plant_units = 0;
    bool plant_head = false;

    /// 4 layers, 4 heads, d_model 64, d_ff 256, vocab 256, with a plant reserve.
    static ModelConfig desk() {
        ModelConfig c;
        c.plant_lanes = 24;
        c.plant_units = 4;
        c.plant_head = true;
        return c;
    }

    bool has_plant_reserve() const noexcept { return plant_lanes > 0; }

    void validate() const {
        auto need = [](bool ok, const std::string& msg) {
            if (!ok) throw InputError("invalid model config: " + msg);
        };
        need(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_head >= 1 && d_ff >= 1 && max_seq_len >= 1,
             "all counts must be >= 1");
        need(n_heads * d_head == d_model, "n_heads * d_head must equal d_model");
        need(d_head % 2 == 0, "d_head must be even for rotary embedding");
        need(vocab_size >= 16, "vocab_size must be >= 16");
        need(rope_base > 0.0, "rope_base must be positive");
        if (plant_lanes > 0 || plant_units > 0 || plant_head) {
            need(plant_lanes >= 8 && plant_lanes < d_model, "plant_lanes must be in [8, d_model)");
            need(plant_units >= 4 && plant_units < d_ff, "plant_units must be in [4, d_ff)");
            need(plant_head && n_heads >= 2, "a plant reserve needs the reserved head and n_heads >= 2");
            need(d_head >= 8, "a plant reserve needs d_head >= 8");
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_layers", c.n_layers},       {"n_heads", c.n_heads},
                       {"d_model", c.d_model},         {"d_head", c.d_head},
                       {"d_ff", c.d_ff},               {"vocab_size", c.vocab_size},
                       {"max_seq_len", c.max_seq_len}, {"rope_base", c.rope_base},
                       {"plant_lanes", c.plant_lanes}, {"plant_units", c.plant_units},
                       {"plant_head", c.plant_head}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("n_layers").get_to(c.n_layers);
    j.at("n_heads").get_to(c.n_heads);
    j.at("d_model").get_to(c.d_model);
    j.at("d_head").get_to(c.d_head);
    j.at("d_ff").get_to(c.d_ff);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_seq_len").get_to(c.max_seq_len);
    j.at("rope_base").get_to(c.rope_base);
    c.plant_lanes = j.value("plant_lanes", std::size_t{0});
    c.plant_units = j.value("plant_units", std::size_t{0});
    c.plant_head = j.value("plant_head", false);
}

} // namespace prunelens
