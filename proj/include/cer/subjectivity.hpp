#pragma once

// Lexicon-based subjectivity scoring: the fraction of a chunk's token
// positions covered by hedge, opinion, or booster cue terms.

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cer/corpus.hpp"
#include "cer/error.hpp"
#include "cer/unicode.hpp"

namespace cer {

struct SubjectivityLexicon {
    /// Case-folded terms; multi-word terms are single-space separated.
    std::set<std::string> terms;
    std::string source;

    /// Multi-word terms pre-split into folded token sequences.
    std::vector<std::vector<std::string>> phrases;
    std::size_t longest_phrase = 1;

    bool contains(const std::string& folded) const { return terms.count(folded) != 0; }
};

namespace detail {

inline constexpr std::string_view kBuiltinLexicon[] = {
    // hedges
    "believe", "believed", "think", "feel", "seems", "seem", "apparently", "probably", "possibly", "perhaps",
    "maybe", "might", "likely", "suggests", "arguably", "supposedly", "allegedly", "presumably", "hopefully",
    "in my opinion", "i think", "it seems", "we believe",
    // opinion adjectives
    "remarkable", "amazing", "incredible", "wonderful", "terrible", "awful", "fantastic", "outstanding",
    "excellent", "horrible", "shocking", "unbelievable", "best", "worst", "brilliant", "disappointing",
    "impressive", "magical", "toxic", "life changing", "shameful",
    // boosters
    "miracle", "miraculous", "definitely", "certainly", "undoubtedly", "clearly", "obviously", "absolutely",
    "always", "never", "completely", "totally", "guaranteed", "proven", "revolutionary", "breakthrough",
    "secret", "everyone knows", "trust me",
};

/// Case-folds and re-joins the term's tokens with single spaces.
inline std::string normalize_term(std::string_view raw) {
    std::string out;
    for (const Token& t : tokenize(raw)) {
        if (!out.empty()) out += ' ';
        out += unicode::fold_case(t.text);
    }
    return out;
}

inline SubjectivityLexicon finish_lexicon(std::set<std::string> terms, std::string source) {
    if (terms.empty()) throw DataError("empty lexicon");
    SubjectivityLexicon lex;
    lex.source = std::move(source);
    for (const auto& term : terms) {
        if (term.find(' ') == std::string::npos) continue;
        std::vector<std::string> words;
        std::istringstream is(term);
        for (std::string w; is >> w;) words.push_back(w);
        lex.longest_phrase = std::max(lex.longest_phrase, words.size());
        lex.phrases.push_back(std::move(words));
    }
    lex.terms = std::move(terms);
    return lex;
}

}  // namespace detail

inline SubjectivityLexicon builtin_lexicon() {
    std::set<std::string> terms;
    for (auto t : detail::kBuiltinLexicon) terms.insert(detail::normalize_term(t));
    return detail::finish_lexicon(std::move(terms), "builtin");
}

/// One term per line; '#' starts a comment line; blank lines ignored.
/// "builtin" loads the shipped lexicon.
inline SubjectivityLexicon load_lexicon(const std::string& path) {
    if (path == "builtin") return builtin_lexicon();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path);
    std::set<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::string term = detail::normalize_term(line);
        if (!term.empty()) terms.insert(std::move(term));
    }
    return detail::finish_lexicon(std::move(terms), path);
}

/// Per-token flag: true when the token position is covered by a lexicon match.
inline std::vector<bool> subjective_mask(std::span<const Token> tokens, const SubjectivityLexicon& lex) {
    std::vector<std::string> folded;
    folded.reserve(tokens.size());
    for (const Token& t : tokens) folded.push_back(unicode::fold_case(t.text));

    std::vector<bool> covered(tokens.size(), false);
    for (std::size_t i = 0; i < folded.size(); ++i) {
        if (lex.contains(folded[i])) covered[i] = true;
        for (const auto& phrase : lex.phrases) {
            if (i + phrase.size() > folded.size()) continue;
            if (std::equal(phrase.begin(), phrase.end(), folded.begin() + static_cast<std::ptrdiff_t>(i)))
                std::fill(covered.begin() + static_cast<std::ptrdiff_t>(i),
                          covered.begin() + static_cast<std::ptrdiff_t>(i + phrase.size()), true);
        }
    }
    return covered;
}

/// covered positions / total tokens, in [0, 1].
inline double subjectivity_score(std::span<const Token> tokens, const SubjectivityLexicon& lex) {
    if (tokens.empty()) throw DataError("empty chunk");
    const auto mask = subjective_mask(tokens, lex);
    const auto covered = std::count(mask.begin(), mask.end(), true);
    return static_cast<double>(covered) / static_cast<double>(tokens.size());
}

inline double subjectivity_score(const Chunk& chunk, const SubjectivityLexicon& lex) {
    return subjectivity_score(std::span<const Token>(chunk.tokens), lex);
}

}  // namespace cer
