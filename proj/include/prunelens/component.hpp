// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prunelens/config.hpp"
#include "prunelens/errors.hpp"

namespace prunelens {

/// The six per-layer projection sites at which neurons are addressed.
enum class Sub : std::uint8_t { q, k, v, gate, up, down };

inline constexpr std::array<Sub, 6> kAllSubs{Sub::q, Sub::k, Sub::v, Sub::gate, Sub::up, Sub::down};

inline constexpr std::string_view to_string(Sub s) {
    switch (s) {
    case Sub::q: return "q";
    case Sub::k: return "k";
    case Sub::v: return "v";
    case Sub::gate: return "gate";
    case Sub::up: return "up";
    case Sub::down: return "down";
    }
    return "?";
}

inline Sub parse_sub(std::string_view s) {
    for (Sub sub : kAllSubs)
        if (to_string(sub) == s) return sub;
    throw InputError("unknown subcomponent '" + std::string(s) + "'");
}

/// Input width of a subcomponent: the number of neurons it exposes.
inline std::size_t sub_width(const ModelConfig& cfg, Sub s) {
    return s == Sub::down ? cfg.d_ff : cfg.d_model;
}

enum class ComponentKind { neurons, heads };

inline std::string_view to_string(ComponentKind k) { return k == ComponentKind::heads ? "heads" : "neurons"; }

inline ComponentKind parse_kind(std::string_view s) {
    if (s == "heads" || s == "head") return ComponentKind::heads;
    if (s == "neurons" || s == "neuron") return ComponentKind::neurons;
    throw InputError("unknown component kind '" + std::string(s) + "'");
}

/// A prunable unit: attention head (layer, head) or neuron (layer, sub, channel).
///
/// Canonical order is (layer, kind, index) with heads ordered before the
/// q, k, v, gate, up, down neuron groups of the same layer.
class ComponentId {
public:
    static constexpr ComponentId head(std::size_t layer, std::size_t head) {
        return ComponentId(static_cast<std::uint32_t>(layer), 0, static_cast<std::uint32_t>(head));
    }
    static constexpr ComponentId neuron(std::size_t layer, Sub sub, std::size_t channel) {
        return ComponentId(static_cast<std::uint32_t>(layer), static_cast<std::uint8_t>(1 + static_cast<int>(sub)),
                           static_cast<std::uint32_t>(channel));
    }

    constexpr bool is_head() const noexcept { return tag_ == 0; }
    constexpr bool is_neuron() const noexcept { return tag_ != 0; }
    constexpr ComponentKind kind() const noexcept { return is_head() ? ComponentKind::heads : ComponentKind::neurons; }
    constexpr std::size_t layer() const noexcept { return layer_; }
    constexpr std::size_t index() const noexcept { return index_; }
    Sub sub() const {
        if (is_head()) throw InputError("head component has no subcomponent");
        return static_cast<Sub>(tag_ - 1);
    }

    /// e.g. "L2.H3" or "L1.gate.17"
    std::string to_string() const {
        std::string s = "L" + std::to_string(layer_) + ".";
        if (is_head()) return s + "H" + std::to_string(index_);
        return s + std::string(prunelens::to_string(sub())) + "." + std::to_string(index_);
    }

    static ComponentId parse(std::string_view text) {
        auto fail = [&] { return InputError("malformed component id '" + std::string(text) + "'"); };
        auto number = [&](std::string_view part) {
            std::size_t v = 0;
            auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
            if (ec != std::errc() || p != part.data() + part.size() || part.empty()) throw fail();
            return v;
        };
        if (text.size() < 4 || text[0] != 'L') throw fail();
        const auto dot1 = text.find('.');
        if (dot1 == std::string_view::npos) throw fail();
        const std::size_t layer = number(text.substr(1, dot1 - 1));
        const auto rest = text.substr(dot1 + 1);
        if (!rest.empty() && rest[0] == 'H') return head(layer, number(rest.substr(1)));
        const auto dot2 = rest.find('.');
        if (dot2 == std::string_view::npos) throw fail();
        return neuron(layer, parse_sub(rest.substr(0, dot2)), number(rest.substr(dot2 + 1)));
    }

    void validate(const ModelConfig& cfg) const {
        if (layer_ >= cfg.n_layers)
            throw InputError(to_string() + ": layer out of range (n_layers=" + std::to_string(cfg.n_layers) + ")");
        if (is_head()) {
            if (index_ >= cfg.n_heads)
                throw InputError(to_string() + ": head out of range (n_heads=" + std::to_string(cfg.n_heads) + ")");
        } else if (index_ >= sub_width(cfg, sub())) {
            throw InputError(to_string() + ": channel out of range");
        }
    }

    friend constexpr auto operator<=>(const ComponentId&, const ComponentId&) = default;

private:
    constexpr ComponentId(std::uint32_t layer, std::uint8_t tag, std::uint32_t index)
        : layer_(layer), tag_(tag), index_(index) {}

    // member order defines the canonical ordering
    std::uint32_t layer_;
    std::uint8_t tag_;
    std::uint32_t index_;
};

using ComponentSet = std::set<ComponentId>;

/// Every component of one kind for a configuration, in canonical order.
inline std::vector<ComponentId> all_components(const ModelConfig& cfg, ComponentKind kind) {
    std::vector<ComponentId> out;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        if (kind == ComponentKind::heads) {
            for (std::size_t h = 0; h < cfg.n_heads; ++h) out.push_back(ComponentId::head(l, h));
        } else {
            for (Sub s : kAllSubs)
                for (std::size_t c = 0; c < sub_width(cfg, s); ++c) out.push_back(ComponentId::neuron(l, s, c));
        }
    }
    return out;
}

/// Set of components whose contribution is zeroed during forward passes.
class PruneMask {
public:
    PruneMask() = default;
    explicit PruneMask(ComponentSet pruned) : pruned_(std::move(pruned)) {}

    void insert(ComponentId id) { pruned_.insert(id); }
    bool contains(ComponentId id) const { return pruned_.contains(id); }
    bool empty() const noexcept { return pruned_.empty(); }
    std::size_t size() const noexcept { return pruned_.size(); }
    const ComponentSet& components() const noexcept { return pruned_; }

    PruneMask united(const PruneMask& other) const {
        ComponentSet s = pruned_;
        s.insert(other.pruned_.begin(), other.pruned_.end());
        return PruneMask(std::move(s));
    }

    void validate(const ModelConfig& cfg) const {
        for (const auto& id : pruned_) id.validate(cfg);
    }

    friend bool operator==(const PruneMask&, const PruneMask&) = default;

private:
    ComponentSet pruned_;
};

} // namespace prunelens
