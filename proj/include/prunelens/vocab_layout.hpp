// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "prunelens/errors.hpp"

namespace prunelens {

/// Partition of the toy vocabulary into special, numeral, name and word ids.
/// Numeral token i stands for the quantity (i + 1) * kNumeralStep.
struct VocabLayout {
    static constexpr std::size_t kBos = 0, kEos = 1, kUnk = 2, kSep = 3;
    static constexpr std::size_t kSpecials = 4;
    static constexpr double kNumeralStep = 25.0;

    std::size_t vocab_size = 0;
    std::size_t numerals_begin = 0, numerals_end = 0;
    std::size_t names_begin = 0, names_end = 0;
    std::size_t words_begin = 0, words_end = 0;

    static VocabLayout for_vocab(std::size_t vocab_size) {
        if (vocab_size < 16) throw InputError("vocab_size must be >= 16");
        const std::size_t rest = vocab_size - kSpecials;
        VocabLayout v;
        v.vocab_size = vocab_size;
        v.numerals_begin = kSpecials;
        v.numerals_end = v.numerals_begin + rest * 96 / 252;
        v.names_begin = v.numerals_end;
        v.names_end = v.names_begin + rest * 66 / 252;
        v.words_begin = v.names_end;
        v.words_end = vocab_size;
        return v;
    }

    std::size_t numeral_count() const { return numerals_end - numerals_begin; }
    bool is_numeral(std::size_t id) const { return id >= numerals_begin && id < numerals_end; }
    double numeral_value(std::size_t id) const { return static_cast<double>(id - numerals_begin + 1) * kNumeralStep; }

    /// Upper half of the numeral block: the region a planted bias pushes on.
    std::vector<std::size_t> high_numerals() const {
        std::vector<std::size_t> out;
        for (std::size_t id = numerals_begin + numeral_count() / 2; id < numerals_end; ++id) out.push_back(id);
        return out;
    }
};

} // namespace prunelens
