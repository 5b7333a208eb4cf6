// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <span>
#include <vector>

#include "prunelens/model.hpp"

namespace prunelens {

/// Name tokens [begin, end) inside a prompt and the positions after them.
struct GroupTokenSpan {
    std::size_t begin = 0, end = 0;
    std::size_t followers_begin = 0, followers_end = 0;

    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const GroupTokenSpan&, const GroupTokenSpan&) = default;
};

inline GroupTokenSpan locate_group_tokens(std::span<const TokenId> prompt, std::span<const TokenId> name) {
    if (name.empty()) throw LocalizationError("name token sequence is empty");
    std::size_t found = 0, at = 0;
    for (std::size_t i = 0; i + name.size() <= prompt.size(); ++i) {
        if (std::equal(name.begin(), name.end(), prompt.begin() + static_cast<std::ptrdiff_t>(i))) {
            if (found++ == 0) at = i;
        }
    }
    if (found == 0) throw LocalizationError("name tokens not found in prompt");
    if (found > 1) throw LocalizationError("name tokens occur " + std::to_string(found) + " times in prompt");
    const std::size_t end = at + name.size();
    if (end >= prompt.size()) throw LocalizationError("empty follower set: name is the final token");
    return {at, end, end, prompt.size()};
}

/// Dense position of a component inside `all_components(cfg, id.kind())`.
inline std::size_t canonical_index(const ModelConfig& cfg, ComponentId id) {
    if (id.is_head()) return id.layer() * cfg.n_heads + id.index();
    const std::size_t per_layer = 5 * cfg.d_model + cfg.d_ff;
    return id.layer() * per_layer + static_cast<std::size_t>(id.sub()) * cfg.d_model + id.index();
}

/// One prompt's scores for every component of a kind, in canonical order.
struct PromptScores {
    ComponentKind kind = ComponentKind::neurons;
    std::vector<double> values;

    double operator[](std::size_t i) const { return values[i]; }
    double at(const ModelConfig& cfg, ComponentId id) const { return values.at(canonical_index(cfg, id)); }
};

/// L2 norm of every input-channel row of the six projections, canonical order.
inline std::vector<double> neuron_row_norms(const Checkpoint& ckpt) {
    const ModelConfig& cfg = ckpt.config;
    std::vector<double> out;
    out.reserve(cfg.n_layers * (5 * cfg.d_model + cfg.d_ff));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        for (Sub s : kAllSubs) {
            const Tensor& w = ckpt.layers[l].projection(s);
            for (std::size_t c = 0; c < w.rows(); ++c) {
                double ss = 0.0;
                for (float v : w.row(c)) ss += static_cast<double>(v) * v;
                out.push_back(std::sqrt(ss));
            }
        }
    }
    return out;
}

/// S_n = sum over tokens of |Act[t][n]| * ||W row n||, with precomputed norms.
inline PromptScores neuron_scores(const Trace& trace, const ModelConfig& cfg, std::span<const double> row_norms) {
    const std::size_t total = cfg.n_layers * (5 * cfg.d_model + cfg.d_ff);
    if (trace.n_layers() != cfg.n_layers || row_norms.size() != total)
        throw InputError("neuron_scores: trace/checkpoint do not match");
    PromptScores out{ComponentKind::neurons, std::vector<double>(total, 0.0)};
    std::size_t base = 0;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        for (Sub s : kAllSubs) {
            const Tensor& act = trace.activation(l, s);
            const std::size_t width = sub_width(cfg, s);
            if (act.rank() != 2 || act.cols() != width)
                throw InputError("neuron_scores: activation shape mismatch at layer " + std::to_string(l));
            for (std::size_t t = 0; t < act.rows(); ++t) {
                auto row = act.row(t);
                for (std::size_t c = 0; c < width; ++c) out.values[base + c] += std::fabs(static_cast<double>(row[c]));
            }
            for (std::size_t c = 0; c < width; ++c) out.values[base + c] *= row_norms[base + c];
            base += width;
        }
    }
    return out;
}

inline PromptScores neuron_scores(const Trace& trace, const Checkpoint& ckpt) {
    const auto norms = neuron_row_norms(ckpt);
    return neuron_scores(trace, ckpt.config, norms);
}

/// S_h = max attention from any follower position onto any name position.
inline PromptScores head_scores(const Trace& trace, const GroupTokenSpan& span) {
    if (span.followers_begin >= span.followers_end) throw InputError("head_scores: empty follower range");
    if (span.begin >= span.end) throw InputError("head_scores: empty group span");
    PromptScores out{ComponentKind::heads, std::vector<double>(trace.n_layers() * trace.n_heads(), 0.0)};
    for (std::size_t l = 0; l < trace.n_layers(); ++l) {
        for (std::size_t h = 0; h < trace.n_heads(); ++h) {
            const Tensor& a = trace.attention(l, h);
            if (span.followers_end > a.rows() || span.end > a.cols())
                throw InputError("head_scores: span exceeds traced sequence");
            double best = 0.0;
            for (std::size_t i = span.followers_begin; i < span.followers_end; ++i)
                for (std::size_t j = span.begin; j < span.end; ++j) best = std::max(best, static_cast<double>(a.at(i, j)));
            out.values[l * trace.n_heads() + h] = best;
        }
    }
    return out;
}

/// CSV rows: component_id,kind,layer,sub_or_head,channel,score
inline void write_scores_csv(std::ostream& os, const ModelConfig& cfg, const PromptScores& scores) {
    const auto ids = all_components(cfg, scores.kind);
    if (ids.size() != scores.values.size()) throw InputError("score table does not match config");
    os << "component_id,kind,layer,sub_or_head,channel,score\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& id = ids[i];
        os << id.to_string() << ',' << to_string(scores.kind) << ',' << id.layer() << ',';
        if (id.is_head())
            os << id.index() << ",";
        else
            os << to_string(id.sub()) << ',' << id.index();
        os << ',' << scores.values[i] << '\n';
    }
}

} // namespace prunelens
