// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "prunelens/plant.hpp"
#include "prunelens/toy.hpp"
#include "test_util.hpp"

namespace prunelens {
namespace {

using testing::max_abs_diff;

const std::set<TokenId> kGroup{170, 171, 172};

std::vector<TokenId> random_prompt(std::mt19937& gen, bool with_group) {
    std::vector<TokenId> p{0};
    while (p.size() < 20) {
        const TokenId t = static_cast<TokenId>(4 + gen() % 252);
        if (!kGroup.contains(t)) p.push_back(t);
    }
    if (with_group) p[2 + gen() % 8] = *std::next(kGroup.begin(), static_cast<long>(gen() % kGroup.size()));
    return p;
}

class PlantTest : public ::testing::Test {
protected:
    const ModelConfig cfg = ModelConfig::desk();
    const Checkpoint base = make_toy_model(cfg, 1);
    const ComponentSet planted = default_planted_set(cfg, 20);
};

TEST_F(PlantTest, PromptsWithoutGroupTokensAreUnchanged) {
    const auto ck = plant_bias(base, kGroup, planted, -3.0);
    std::mt19937 gen(5);
    for (int i = 0; i < 50; ++i) {
        const auto p = random_prompt(gen, false);
        EXPECT_LE(max_abs_diff(forward(ck, p).logits, forward(base, p).logits), 1e-4);
    }
}

TEST_F(PlantTest, GroupTokenShiftsDesignatedLogitsByAboutStrength) {
    for (double strength : {-3.0, 2.0}) {
        const auto ck = plant_bias(base, kGroup, planted, strength);
        const auto high = VocabLayout::for_vocab(cfg.vocab_size).high_numerals();
        std::mt19937 gen(6);
        double total = 0.0;
        std::size_t n = 0;
        for (int i = 0; i < 50; ++i) {
            const auto p = random_prompt(gen, true);
            const auto with = forward(ck, p).logits, without = forward(base, p).logits;
            for (std::size_t t : high) {
                total += with.at(p.size() - 1, t) - without.at(p.size() - 1, t);
                ++n;
            }
        }
        const double mean = total / static_cast<double>(n);
        EXPECT_GE(std::abs(mean), 0.5 * std::abs(strength)) << strength;
        EXPECT_LE(std::abs(mean), 2.0 * std::abs(strength)) << strength;
        EXPECT_GT(mean * strength, 0.0);
    }
}

TEST_F(PlantTest, ZeroStrengthReturnsInput) {
    EXPECT_EQ(plant_bias(base, kGroup, planted, 0.0), base);
}

TEST_F(PlantTest, PruningPlantedNeuronsRemovesTheShift) {
    const auto ck = plant_bias(base, kGroup, planted, -3.0);
    const auto high = VocabLayout::for_vocab(cfg.vocab_size).high_numerals();
    const PruneMask mask(planted);
    std::mt19937 gen(7);
    double live = 0.0, pruned = 0.0;
    for (int i = 0; i < 10; ++i) {
        const auto p = random_prompt(gen, true);
        const std::size_t last = p.size() - 1;
        const auto a = forward(ck, p).logits, b = forward(base, p).logits;
        const auto am = forward(ck, p, mask).logits, bm = forward(base, p, mask).logits;
        for (std::size_t t : high) {
            live += a.at(last, t) - b.at(last, t);
            pruned += am.at(last, t) - bm.at(last, t);
        }
    }
    EXPECT_LT(std::abs(pruned), 0.01 * std::abs(live));
}

TEST_F(PlantTest, DefaultSetIsGateUpPairsInMiddleLayer) {
    EXPECT_EQ(planted.size(), 20u);
    for (const auto& id : planted) {
        EXPECT_EQ(id.layer(), 2u);
        EXPECT_TRUE(id.sub() == Sub::gate || id.sub() == Sub::up);
    }
}

TEST_F(PlantTest, InvalidPlantedIdsAreRejected) {
    EXPECT_THROW(plant_bias(base, kGroup, {ComponentId::neuron(2, Sub::q, 60)}, -1.0), InputError);
    EXPECT_THROW(plant_bias(base, kGroup, {ComponentId::neuron(9, Sub::gate, 60)}, -1.0), InputError);
    EXPECT_THROW(plant_bias(base, kGroup, {ComponentId::neuron(2, Sub::gate, 3)}, -1.0), InputError);
    EXPECT_THROW(plant_bias(base, {}, planted, -1.0), InputError);
}

TEST_F(PlantTest, TriggeredContextNeedsItsTrigger) {
    PlantSpec spec;
    spec.group_tokens = kGroup;
    spec.strength = -3.0;
    spec.contexts.push_back({{200}, planted, 1.0});
    const auto ck = plant_bias(base, spec);
    std::mt19937 gen(8);
    auto p = random_prompt(gen, true);
    std::replace(p.begin(), p.end(), TokenId{200}, TokenId{201});
    EXPECT_LE(max_abs_diff(forward(ck, p).logits, forward(base, p).logits), 1e-4);
    p[1] = 200;
    EXPECT_GT(max_abs_diff(forward(ck, p).logits, forward(base, p).logits), 0.5);
}

TEST(PlantReserve, ToyModelWithoutReserveCannotBePlanted) {
    const auto ck = make_toy_model(testing::small_config(), 1);
    EXPECT_THROW(plant_bias(ck, {5}, {ComponentId::neuron(1, Sub::gate, 1)}, 1.0), InputError);
}

} // namespace
} // namespace prunelens
