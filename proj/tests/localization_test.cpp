// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "prunelens/localization.hpp"
#include "test_util.hpp"

namespace prunelens {
namespace {

std::vector<ComponentId> heads(std::size_t n) {
    std::vector<ComponentId> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(ComponentId::head(i / 4, i % 4));
    return out;
}

GroupedScores grouped(std::vector<double> maj, std::vector<double> min) {
    GroupedScores gs;
    gs.kind = ComponentKind::heads;
    gs.ids = heads(maj.size());
    gs.s_bar_maj = std::move(maj);
    gs.s_bar_min = std::move(min);
    gs.n_maj = gs.n_min = 1;
    return gs;
}

ComponentSet top(const std::vector<ComponentId>& ranked, std::size_t k) {
    return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size()))};
}

TEST(GroupAverage, SinglePromptsAreTheirOwnMeans) {
    const auto ids = heads(3);
    const std::vector<LabeledScores> p{{Group::majority, {ComponentKind::heads, {1, 2, 3}}},
                                       {Group::minority, {ComponentKind::heads, {4, 5, 6}}}};
    const auto gs = group_average(ids, p);
    EXPECT_EQ(gs.s_bar_maj, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(gs.s_bar_min, (std::vector<double>{4, 5, 6}));
}

TEST(GroupAverage, TwoMinorityPrompts) {
    const std::vector<LabeledScores> p{{Group::majority, {ComponentKind::heads, {0}}},
                                       {Group::minority, {ComponentKind::heads, {2}}},
                                       {Group::minority, {ComponentKind::heads, {4}}}};
    EXPECT_EQ(group_average(heads(1), p).s_bar_min[0], 3.0);
}

TEST(GroupAverage, MatchesNaiveMeans) {
    std::mt19937 gen(21);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<LabeledScores> p;
    for (int i = 0; i < 8; ++i) {
        LabeledScores ls{i % 3 == 0 ? Group::minority : Group::majority, {ComponentKind::heads, {}}};
        for (int c = 0; c < 50; ++c) ls.scores.values.push_back(u(gen));
        p.push_back(ls);
    }
    const auto gs = group_average(heads(50), p);
    for (std::size_t c = 0; c < 50; ++c) {
        double sum_maj = 0, sum_min = 0;
        int n_maj = 0, n_min = 0;
        for (const auto& ls : p) {
            if (ls.group == Group::majority) sum_maj += ls.scores[c], ++n_maj;
            else sum_min += ls.scores[c], ++n_min;
        }
        EXPECT_DOUBLE_EQ(gs.s_bar_maj[c], sum_maj / n_maj);
        EXPECT_DOUBLE_EQ(gs.s_bar_min[c], sum_min / n_min);
    }
}

TEST(GroupAverage, RejectsEmptyGroupAndMismatch) {
    const std::vector<LabeledScores> only_maj{{Group::majority, {ComponentKind::heads, {1}}}};
    EXPECT_THROW(group_average(heads(1), only_maj), InputError);
    const std::vector<LabeledScores> ragged{{Group::majority, {ComponentKind::heads, {1}}},
                                            {Group::minority, {ComponentKind::heads, {1, 2}}}};
    EXPECT_THROW(group_average(heads(1), ragged), InputError);
}

TEST(Rank, DescendingWithCanonicalTies) {
    const auto gs = grouped({3, 1, 2}, {1, 1, 1});
    EXPECT_EQ(rank(gs, Group::majority), (std::vector<ComponentId>{gs.ids[0], gs.ids[2], gs.ids[1]}));
    EXPECT_EQ(rank(gs, Group::minority), gs.ids);
}

TEST(Rank, MatchesSortOracle) {
    std::mt19937 gen(22);
    std::vector<double> v(40);
    for (auto& x : v) x = static_cast<double>(gen() % 7);
    const auto gs = grouped(v, v);
    std::vector<std::pair<double, ComponentId>> oracle;
    for (std::size_t i = 0; i < v.size(); ++i) oracle.emplace_back(-v[i], gs.ids[i]);
    std::sort(oracle.begin(), oracle.end());
    const auto got = rank(gs, Group::majority);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(got[i], oracle[i].second);
}

TEST(BiasedSet, SetDifferenceExamples) {
    const auto gs = grouped({9, 1, 1, 0}, {9, 8, 7, 0});
    const auto d = biased_set(gs, 3, 1);
    EXPECT_EQ(d.components, (ComponentSet{gs.ids[1], gs.ids[2]}));
    EXPECT_TRUE(biased_set(gs, 3, 4).components.empty());
    const auto same = grouped({4, 3, 2, 1}, {4, 3, 2, 1});
    EXPECT_TRUE(biased_set(same, 2, 2).components.empty());
}

TEST(BiasedSet, ThresholdConversion) {
    EXPECT_EQ(threshold_count(ComponentKind::neurons, 0.4, 10), 4u);
    EXPECT_EQ(threshold_count(ComponentKind::neurons, 0.35, 20), 7u);
    EXPECT_EQ(threshold_count(ComponentKind::neurons, 1.0, 13), 13u);
    EXPECT_EQ(threshold_count(ComponentKind::heads, 40, 12), 12u);
    EXPECT_THROW(threshold_count(ComponentKind::neurons, 1.2, 10), InputError);
    EXPECT_THROW(threshold_count(ComponentKind::neurons, -0.1, 10), InputError);
    EXPECT_THROW(threshold_count(ComponentKind::heads, 2.5, 10), InputError);
}

TEST(BiasedSet, BoundsAndMonotonicity) {
    std::mt19937 gen(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> a(24), b(24);
        for (auto& x : a) x = u(gen);
        for (auto& x : b) x = u(gen);
        const auto gs = grouped(a, b);
        for (std::size_t tmin = 0; tmin <= 24; tmin += 3) {
            for (std::size_t tmaj = 0; tmaj <= 24; tmaj += 3) {
                const auto d = biased_set(gs, double(tmin), double(tmaj)).components;
                EXPECT_LE(d.size(), tmin);
                EXPECT_GE(static_cast<long>(d.size()), static_cast<long>(tmin) - static_cast<long>(tmaj));
                // Independent oracle: explicit set difference of sorted tops.
                ComponentSet expect;
                const auto tmin_set = top(rank(gs, Group::minority), tmin);
                const auto tmaj_set = top(rank(gs, Group::majority), tmaj);
                std::set_difference(tmin_set.begin(), tmin_set.end(), tmaj_set.begin(), tmaj_set.end(),
                                    std::inserter(expect, expect.end()));
                EXPECT_EQ(d, expect);
                if (tmaj + 3 <= 24) {
                    const auto more_maj = biased_set(gs, double(tmin), double(tmaj + 3)).components;
                    EXPECT_TRUE(std::includes(d.begin(), d.end(), more_maj.begin(), more_maj.end()));
                }
                if (tmin + 3 <= 24) {
                    const auto more_min = biased_set(gs, double(tmin + 3), double(tmaj)).components;
                    EXPECT_TRUE(std::includes(more_min.begin(), more_min.end(), d.begin(), d.end()));
                }
            }
        }
    }
}

TEST(BiasedSet, ScalingOneGroupKeepsD) {
    std::mt19937 gen(24);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> a(30), b(30);
    for (auto& x : a) x = u(gen);
    for (auto& x : b) x = u(gen);
    auto scaled = b;
    for (auto& x : scaled) x *= 7.5;
    EXPECT_EQ(biased_set(grouped(a, b), 12, 6).components, biased_set(grouped(a, scaled), 12, 6).components);
    EXPECT_EQ(rank(grouped(a, b), Group::minority), rank(grouped(a, scaled), Group::minority));
}

BiasedSet make_set(ComponentSet c) {
    BiasedSet s;
    s.kind = ComponentKind::heads;
    s.components = std::move(c);
    return s;
}

TEST(SetAlgebra, LeaveOneOutExamples) {
    const auto ids = heads(4);
    const std::vector<BiasedSet> two{make_set({ids[0]}), make_set({ids[1], ids[2]})};
    const auto r = loo_sets(two);
    EXPECT_EQ(r[0], two[1].components);
    EXPECT_EQ(r[1], two[0].components);
    const std::vector<BiasedSet> same(5, make_set({ids[1], ids[3]}));
    for (const auto& s : loo_sets(same)) EXPECT_EQ(s, same[0].components);
    EXPECT_THROW(loo_sets(std::vector<BiasedSet>{make_set({})}), InputError);
}

TEST(SetAlgebra, RandomSetsMatchBruteForce) {
    const auto ids = heads(16);
    std::mt19937 gen(25);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + gen() % 9;
        std::vector<BiasedSet> sets;
        for (std::size_t i = 0; i < n; ++i) {
            ComponentSet c;
            for (const auto& id : ids)
                if (gen() % 4 != 0) c.insert(id);
            sets.push_back(make_set(c));
        }
        ComponentSet all;
        for (const auto& id : ids)
            if (std::all_of(sets.begin(), sets.end(), [&](const BiasedSet& s) { return s.components.contains(id); }))
                all.insert(id);
        const auto loo = loo_sets(sets);
        for (std::size_t k = 0; k < n; ++k) {
            ComponentSet expect;
            for (const auto& id : ids) {
                bool in_all = true;
                for (std::size_t i = 0; i < n; ++i)
                    if (i != k && !sets[i].components.contains(id)) in_all = false;
                if (in_all) expect.insert(id);
            }
            EXPECT_EQ(loo[k], expect);
            EXPECT_TRUE(std::includes(loo[k].begin(), loo[k].end(), all.begin(), all.end()));
        }
        const auto cc = cross_context_set(sets);
        EXPECT_EQ(cc, all);
        for (const auto& s : sets) EXPECT_TRUE(std::includes(s.components.begin(), s.components.end(), cc.begin(), cc.end()));
    }
}

TEST(SetAlgebra, CrossContextExamples) {
    const auto ids = heads(3);
    EXPECT_EQ(cross_context_set(std::vector<BiasedSet>{make_set({ids[0], ids[2]})}), (ComponentSet{ids[0], ids[2]}));
    EXPECT_TRUE(cross_context_set(std::vector<BiasedSet>{make_set({ids[0]}), make_set({})}).empty());
}

TEST(BiasedSetJson, RoundTrip) {
    const auto gs = grouped({9, 1, 1, 0}, {9, 8, 7, 0});
    auto d = biased_set(gs, 3, 1);
    d.variation = "purchase.chair";
    const nlohmann::json j = d;
    EXPECT_EQ(j.at("size"), 2);
    EXPECT_EQ(j.get<BiasedSet>(), d);
}

} // namespace
} // namespace prunelens
