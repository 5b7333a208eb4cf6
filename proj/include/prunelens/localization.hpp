// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelens/scoring.hpp"

namespace prunelens {

enum class Group { majority, minority };

struct LabeledScores {
    Group group;
    PromptScores scores;
};

/// Per-component group means over a fixed component universe.
struct GroupedScores {
    ComponentKind kind = ComponentKind::neurons;
    std::vector<ComponentId> ids;
    std::vector<double> s_bar_maj, s_bar_min;
    std::size_t n_maj = 0, n_min = 0;

    const std::vector<double>& of(Group g) const { return g == Group::majority ? s_bar_maj : s_bar_min; }
};

inline GroupedScores group_average(std::vector<ComponentId> universe, std::span<const LabeledScores> prompts) {
    GroupedScores gs;
    gs.ids = std::move(universe);
    gs.s_bar_maj.assign(gs.ids.size(), 0.0);
    gs.s_bar_min.assign(gs.ids.size(), 0.0);
    if (!gs.ids.empty()) gs.kind = gs.ids.front().kind();
    for (const auto& p : prompts) {
        if (p.scores.values.size() != gs.ids.size() || p.scores.kind != gs.kind)
            throw InputError("group_average: prompt scores cover a different component set");
        auto& acc = p.group == Group::majority ? gs.s_bar_maj : gs.s_bar_min;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.scores.values[i];
        ++(p.group == Group::majority ? gs.n_maj : gs.n_min);
    }
    if (gs.n_maj == 0 || gs.n_min == 0) throw InputError("group_average: each group needs at least one prompt");
    for (double& v : gs.s_bar_maj) v /= static_cast<double>(gs.n_maj);
    for (double& v : gs.s_bar_min) v /= static_cast<double>(gs.n_min);
    return gs;
}

inline GroupedScores group_average(const ModelConfig& cfg, std::span<const LabeledScores> prompts) {
    if (prompts.empty()) throw InputError("group_average: no prompts");
    return group_average(all_components(cfg, prompts.front().scores.kind), prompts);
}

/// Components in descending order of the group's mean; ties go to the smaller id.
inline std::vector<ComponentId> rank(const GroupedScores& gs, Group g) {
    const auto& s = gs.of(g);
    std::vector<std::size_t> order(gs.ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s[a] != s[b]) return s[a] > s[b];
        return gs.ids[a] < gs.ids[b];
    });
    std::vector<ComponentId> out;
    out.reserve(order.size());
    for (std::size_t i : order) out.push_back(gs.ids[i]);
    return out;
}

/// Number of ranked components selected by threshold `tau`.
///
/// Neuron thresholds are fractions in [0, 1] taken as floor(tau * C). Head
/// thresholds are whole counts; counts above C select everything.
inline std::size_t threshold_count(ComponentKind kind, double tau, std::size_t universe) {
    if (!std::isfinite(tau) || tau < 0.0) throw InputError("threshold must be a finite value >= 0");
    if (kind == ComponentKind::neurons) {
        if (tau > 1.0) throw InputError("neuron threshold must be a fraction in [0, 1], got " + std::to_string(tau));
        // The small nudge keeps grid values such as 0.35 * 2304 from rounding down a whole step.
        return static_cast<std::size_t>(std::floor(tau * static_cast<double>(universe) + 1e-9));
    }
    if (tau != std::floor(tau)) throw InputError("head threshold must be a whole count, got " + std::to_string(tau));
    return std::min(static_cast<std::size_t>(tau), universe);
}

struct BiasedSet {
    ComponentKind kind = ComponentKind::neurons;
    double tau_min = 0.0, tau_maj = 0.0;
    std::string variation; // id of the prompt variation (or combination) it came from
    ComponentSet components;

    friend bool operator==(const BiasedSet&, const BiasedSet&) = default;
};

/// D = top-tau_min(minority ranking) minus top-tau_maj(majority ranking).
inline BiasedSet biased_set(const GroupedScores& gs, double tau_min, double tau_maj) {
    const std::size_t k_min = threshold_count(gs.kind, tau_min, gs.ids.size());
    const std::size_t k_maj = threshold_count(gs.kind, tau_maj, gs.ids.size());
    const auto by_min = rank(gs, Group::minority);
    const auto by_maj = rank(gs, Group::majority);
    const ComponentSet top_maj(by_maj.begin(), by_maj.begin() + static_cast<std::ptrdiff_t>(k_maj));
    BiasedSet d{gs.kind, tau_min, tau_maj, {}, {}};
    for (std::size_t i = 0; i < k_min; ++i)
        if (!top_maj.contains(by_min[i])) d.components.insert(by_min[i]);
    return d;
}

inline ComponentSet intersect(const ComponentSet& a, const ComponentSet& b) {
    ComponentSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

namespace detail {
inline void require_same_kind(std::span<const BiasedSet> sets) {
    for (const auto& s : sets)
        if (s.kind != sets.front().kind) throw InputError("cannot combine neuron and head sets");
}
} // namespace detail

/// result[k] is the intersection of every set except the k-th.
inline std::vector<ComponentSet> loo_sets(std::span<const BiasedSet> sets) {
    if (sets.size() < 2) throw InputError("leave-one-out needs at least two sets");
    detail::require_same_kind(sets);
    const std::size_t n = sets.size();
    // prefix[i] = sets[0..i), suffix[i] = sets[i..n)
    std::vector<ComponentSet> prefix(n), suffix(n + 1);
    suffix[n - 1] = sets[n - 1].components;
    for (std::size_t i = n - 1; i-- > 1;) suffix[i] = intersect(suffix[i + 1], sets[i].components);
    prefix[1] = sets[0].components;
    for (std::size_t i = 2; i < n; ++i) prefix[i] = intersect(prefix[i - 1], sets[i - 1].components);
    std::vector<ComponentSet> out(n);
    out[0] = suffix[1];
    out[n - 1] = prefix[n - 1];
    for (std::size_t k = 1; k + 1 < n; ++k) out[k] = intersect(prefix[k], suffix[k + 1]);
    return out;
}

inline ComponentSet cross_context_set(std::span<const BiasedSet> sets) {
    if (sets.empty()) throw InputError("cross-context intersection needs at least one set");
    detail::require_same_kind(sets);
    ComponentSet acc = sets.front().components;
    for (std::size_t j = 1; j < sets.size(); ++j) acc = intersect(acc, sets[j].components);
    return acc;
}

inline void to_json(nlohmann::json& j, const BiasedSet& s) {
    std::vector<std::string> ids;
    for (const auto& id : s.components) ids.push_back(id.to_string());
    j = nlohmann::json{{"kind", to_string(s.kind)}, {"tau_min", s.tau_min}, {"tau_maj", s.tau_maj},
                       {"variation", s.variation}, {"size", s.components.size()}, {"components", ids}};
}

inline void from_json(const nlohmann::json& j, BiasedSet& s) {
    s.kind = parse_kind(j.at("kind").get<std::string>());
    s.tau_min = j.at("tau_min").get<double>();
    s.tau_maj = j.at("tau_maj").get<double>();
    s.variation = j.value("variation", std::string{});
    s.components.clear();
    for (const auto& text : j.at("components")) {
        const auto id = ComponentId::parse(text.get<std::string>());
        if (id.kind() != s.kind) throw InputError("set of kind " + std::string(to_string(s.kind)) + " contains " + id.to_string());
        s.components.insert(id);
    }
}

} // namespace prunelens
