// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "prunelens/model.hpp"
#include "prunelens/scenario.hpp"
#include "prunelens/vocab_layout.hpp"

namespace prunelens {

/// Whitespace/punctuation tokenizer over a closed vocabulary.
///
/// Words come from the scenario config (lower-cased, sorted), names map to
/// the reserved name block in table order, and numerals are the fixed
/// quantity tokens of the vocabulary layout. Anything else becomes <unk>.
class Tokenizer {
public:
    Tokenizer(const ScenarioConfig& cfg, std::size_t vocab_size) : layout_(VocabLayout::for_vocab(vocab_size)) {
        std::set<std::string> words{"."};
        auto add_words = [&](const std::string& text) {
            for (const auto& piece : split(text)) {
                if (piece.starts_with("{")) continue;
                words.insert(lower(piece));
            }
        };
        for (const auto& s : cfg.scenarios) {
            add_words(s.templ);
            for (const auto& v : s.variations) add_words(v);
        }
        std::size_t next = layout_.words_begin;
        for (const auto& w : words) {
            if (next >= layout_.words_end)
                throw ConfigError("scenario vocabulary has " + std::to_string(words.size()) + " words but only " +
                                  std::to_string(layout_.words_end - layout_.words_begin) + " word slots exist");
            word_ids_[w] = static_cast<TokenId>(next);
            text_[static_cast<TokenId>(next++)] = w;
        }
        next = layout_.names_begin;
        for (const auto& n : cfg.names) {
            for (const auto* part : {&n.first, &n.last}) {
                if (name_ids_.contains(*part)) continue;
                if (next >= layout_.names_end) throw ConfigError("name table does not fit the reserved name block");
                name_ids_[*part] = static_cast<TokenId>(next);
                text_[static_cast<TokenId>(next++)] = *part;
            }
        }
    }

    const VocabLayout& layout() const noexcept { return layout_; }

    std::vector<TokenId> encode(const std::string& text) const {
        std::vector<TokenId> out;
        for (const auto& piece : split(text)) out.push_back(lookup(piece));
        return out;
    }

    /// <bos> followed by the rendered prompt.
    std::vector<TokenId> encode_prompt(const PromptSpec& spec, const NameEntry& name) const {
        std::vector<TokenId> out{static_cast<TokenId>(VocabLayout::kBos)};
        const auto body = encode(spec.render(name));
        out.insert(out.end(), body.begin(), body.end());
        return out;
    }

    std::vector<TokenId> name_tokens(const NameEntry& name) const { return {name_id(name.first), name_id(name.last)}; }

    TokenId name_id(const std::string& part) const {
        const auto it = name_ids_.find(part);
        if (it == name_ids_.end()) throw ConfigError("'" + part + "' is not in the name table");
        return it->second;
    }

    std::optional<TokenId> word_id(const std::string& word) const {
        const auto it = word_ids_.find(lower(word));
        if (it == word_ids_.end()) return std::nullopt;
        return it->second;
    }

    /// Name-block tokens that belong only to names of `group`.
    std::set<TokenId> group_tokens(const ScenarioConfig& cfg, RaceGroup group) const {
        std::set<TokenId> mine, others;
        for (const auto& n : cfg.names)
            for (const auto* part : {&n.first, &n.last}) (n.group == group ? mine : others).insert(name_id(*part));
        std::set<TokenId> out;
        for (TokenId t : mine)
            if (!others.contains(t)) out.insert(t);
        return out;
    }

    std::string token_text(TokenId t) const {
        if (layout_.is_numeral(t)) return format_quantity(layout_.numeral_value(t));
        if (const auto it = text_.find(t); it != text_.end()) return it->second;
        switch (t) {
        case VocabLayout::kBos: return "<bos>";
        case VocabLayout::kEos: return "<eos>";
        case VocabLayout::kSep: return "<sep>";
        default: return "<unk>";
        }
    }

    /// Readable text; special tokens are dropped and "." attaches to the previous word.
    std::string decode(std::span<const TokenId> tokens) const {
        std::string out;
        for (TokenId t : tokens) {
            if (t < VocabLayout::kSpecials && t != VocabLayout::kUnk) continue;
            const std::string piece = token_text(t);
            if (!out.empty() && piece != ".") out += ' ';
            out += piece;
        }
        return out;
    }

    static std::string format_quantity(double value) {
        std::string digits = std::to_string(static_cast<long long>(value));
        for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
        return "$" + digits;
    }

private:
    static std::string lower(std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    }

    static bool is_punct(char c) { return c == '.' || c == ',' || c == '?' || c == '!' || c == ';' || c == ':'; }

    // Whitespace split; trailing punctuation becomes its own piece.
    static std::vector<std::string> split(const std::string& text) {
        std::vector<std::string> out;
        std::istringstream in(text);
        std::string chunk;
        while (in >> chunk) {
            std::vector<std::string> tail;
            while (chunk.size() > 1 && is_punct(chunk.back())) {
                tail.insert(tail.begin(), std::string(1, chunk.back()));
                chunk.pop_back();
            }
            out.push_back(chunk);
            out.insert(out.end(), tail.begin(), tail.end());
        }
        return out;
    }

    TokenId lookup(const std::string& piece) const {
        if (const auto it = name_ids_.find(piece); it != name_ids_.end()) return it->second;
        std::string digits;
        for (char c : piece)
            if (c != '$' && c != ',') digits += c;
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos && digits.size() < 9) {
            const long long v = std::stoll(digits);
            const auto step = static_cast<long long>(VocabLayout::kNumeralStep);
            if (v > 0 && v % step == 0 && static_cast<std::size_t>(v / step) <= layout_.numeral_count())
                return static_cast<TokenId>(layout_.numerals_begin + static_cast<std::size_t>(v / step) - 1);
        }
        if (const auto it = word_ids_.find(lower(piece)); it != word_ids_.end()) return it->second;
        return static_cast<TokenId>(VocabLayout::kUnk);
    }

    VocabLayout layout_;
    std::map<std::string, TokenId> word_ids_;
    std::map<std::string, TokenId> name_ids_;
    std::map<TokenId, std::string> text_;
};

} // namespace prunelens
