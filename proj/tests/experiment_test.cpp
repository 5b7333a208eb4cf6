// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "prunelens/experiment.hpp"
#include "prunelens/toy.hpp"

namespace prunelens {
namespace {

TEST(TauGrid, FiftyFiveCellsPerKind) {
    for (auto kind : {ComponentKind::neurons, ComponentKind::heads}) {
        const auto grid = tau_grid(kind);
        EXPECT_EQ(grid.size(), 55u);
        for (const auto& t : grid) {
            EXPECT_LE(t.tau_maj, t.tau_min);
            EXPECT_GT(t.tau_maj, 0.0);
        }
        EXPECT_EQ(tau_grid(kind, true).size(), 66u);
    }
    const auto heads = tau_grid(ComponentKind::heads);
    EXPECT_TRUE(std::any_of(heads.begin(), heads.end(), [](const Thresholds& t) { return t.tau_min == 40 && t.tau_maj == 5; }));
    const auto neurons = tau_grid(ComponentKind::neurons);
    EXPECT_TRUE(std::any_of(neurons.begin(), neurons.end(), [](const Thresholds& t) {
        return std::abs(t.tau_min - 0.40) < 1e-12 && std::abs(t.tau_maj - 0.35) < 1e-12;
    }));
    // Every grid value converts to a valid count.
    for (const auto& t : neurons) EXPECT_NO_THROW(threshold_count(t.kind, t.tau_min, 2304));
}

VariationScores synthetic(const std::string& id, std::vector<double> maj, std::vector<double> min) {
    VariationScores v;
    v.spec.scenario = "S";
    v.spec.variation = id;
    v.spec.templ = "{variation} {name}";
    GroupedScores gs;
    gs.kind = ComponentKind::heads;
    for (std::size_t i = 0; i < maj.size(); ++i) gs.ids.push_back(ComponentId::head(i / 4, i % 4));
    gs.s_bar_maj = std::move(maj);
    gs.s_bar_min = std::move(min);
    gs.n_maj = gs.n_min = 1;
    v.heads = gs;
    v.neurons = gs;
    v.neurons.kind = ComponentKind::neurons;
    return v;
}

std::vector<VariationScores> random_variations(std::mt19937& gen, std::size_t n, const std::string& prefix) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<VariationScores> out;
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> a(16), b(16);
        for (auto& x : a) x = u(gen);
        for (auto& x : b) x = u(gen);
        out.push_back(synthetic(prefix + std::to_string(k), a, b));
    }
    return out;
}

TEST(ProtocolSets, Arities) {
    std::mt19937 gen(41);
    const auto ref = random_variations(gen, 10, "v");
    const auto others = random_variations(gen, 9, "o");
    const Thresholds t{ComponentKind::heads, 8, 2};

    const auto ps = build_protocol_sets(Protocol::prompt_specific, ref, others, t);
    EXPECT_EQ(ps.pruning.size(), 10u);
    EXPECT_EQ(ps.set_for_variation.size(), 10u);

    const auto loo = build_protocol_sets(Protocol::within_context_loo, ref, others, t);
    ASSERT_EQ(loo.pruning.size(), 10u);
    const auto all = cross_context_set(loo.variation_sets);
    for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_EQ(loo.set_for_variation[k], k);
        EXPECT_TRUE(std::includes(loo.pruning[k].components.begin(), loo.pruning[k].components.end(), all.begin(), all.end()));
        EXPECT_EQ(loo.pruning[k].variation, ref[k].spec.id());
    }

    const auto cc = build_protocol_sets(Protocol::cross_context, ref, others, t);
    ASSERT_EQ(cc.pruning.size(), 1u);
    EXPECT_EQ(cc.pruning[0].variation, kCrossContextId);
    EXPECT_EQ(cc.set_for_variation, std::vector<std::size_t>(10, 0));
    for (const auto& s : cc.variation_sets)
        EXPECT_TRUE(std::includes(s.components.begin(), s.components.end(), cc.pruning[0].components.begin(),
                                  cc.pruning[0].components.end()));

    EXPECT_THROW(build_protocol_sets(Protocol::within_context_loo, std::span(ref).first(1), others, t), ConfigError);
    EXPECT_THROW(build_protocol_sets(Protocol::cross_context, ref, {}, t), ConfigError);
}

TEST(ProtocolNames, RoundTrip) {
    for (auto p : {Protocol::prompt_specific, Protocol::within_context_loo, Protocol::cross_context})
        EXPECT_EQ(parse_protocol(to_string(p)), p);
    EXPECT_THROW(parse_protocol("everything"), ConfigError);
}

BiasedSet named(const std::string& id, std::initializer_list<std::size_t> heads) {
    BiasedSet s;
    s.kind = ComponentKind::heads;
    s.variation = id;
    for (auto h : heads) s.components.insert(ComponentId::head(h / 4, h % 4));
    return s;
}

TEST(Overlap, Fractions) {
    const std::vector<BiasedSet> sets{named("a", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), named("b", {1, 2, 20, 21}),
                                      named("c", {30, 31}), named("e", {})};
    const auto cells = overlap_matrix(sets);
    ASSERT_EQ(cells.size(), 16u);
    auto at = [&](std::size_t r, std::size_t c) { return cells[r * 4 + c]; };
    EXPECT_EQ(at(0, 0).fraction, 1.0);
    EXPECT_DOUBLE_EQ(*at(0, 1).fraction, 0.2);
    EXPECT_DOUBLE_EQ(*at(1, 0).fraction, 0.5);
    EXPECT_EQ(at(0, 2).fraction, 0.0);
    EXPECT_FALSE(at(3, 0).fraction.has_value());
    for (const auto& c : cells)
        if (c.fraction) {
            EXPECT_TRUE(*c.fraction >= 0.0 && *c.fraction <= 1.0);
        }
    EXPECT_THROW(overlap_matrix(std::span(sets).first(1)), InputError);
}

TEST(LayerDistribution, SingleNeuron) {
    const auto cfg = ModelConfig::desk();
    BiasedSet s;
    s.components.insert(ComponentId::neuron(0, Sub::gate, 7));
    const auto d = layer_distribution(s, cfg);
    EXPECT_DOUBLE_EQ(d.cell[0][static_cast<int>(Sub::gate)], 1.0 / static_cast<double>(cfg.d_model));
    EXPECT_EQ(d.layer_share[0], 1.0);
    BiasedSet h;
    h.kind = ComponentKind::heads;
    EXPECT_THROW(layer_distribution(h, cfg), InputError);
}

TEST(LayerDistribution, UniformRandomSetIsFlat) {
    const auto cfg = ModelConfig::desk();
    const auto all = all_components(cfg, ComponentKind::neurons);
    std::mt19937 gen(42);
    BiasedSet s;
    while (s.components.size() < 600) s.components.insert(all[gen() % all.size()]);
    const auto d = layer_distribution(s, cfg);
    double sum = 0.0, chi2 = 0.0;
    const double expected = 600.0 / static_cast<double>(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        sum += d.layer_share[l];
        const double observed = d.layer_share[l] * 600.0;
        chi2 += (observed - expected) * (observed - expected) / expected;
        for (double c : d.cell[l]) EXPECT_TRUE(c >= 0.0 && c <= 1.0);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    ASSERT_EQ(cfg.n_layers, 4u);
    EXPECT_LT(chi2, 11.345); // chi-square, 3 degrees of freedom, p = 0.01
}

} // namespace
} // namespace prunelens
