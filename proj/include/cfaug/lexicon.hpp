#pragma once

#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cfaug/error.hpp"
#include "cfaug/polarity.hpp"

namespace cfaug {

// Opinion word lists keyed by polarity. Word order is meaningful, it is
// the sampling order for deterministic infill runs.
class Lexicon {
  public:
    Lexicon() = default;

    void add(Polarity p, const std::string& word) { words_[static_cast<size_t>(code(p))].push_back(word); }

    const std::vector<std::string>& words(Polarity p) const { return words_[static_cast<size_t>(code(p))]; }

    size_t size() const {
        return words_[0].size() + words_[1].size() + words_[2].size();
    }

    bool operator==(const Lexicon& other) const { return words_ == other.words_; }

  private:
    std::array<std::vector<std::string>, 3> words_;
};

// File format: one "polarity<TAB>word" pair per line. Blank lines are
// allowed, anything else malformed is an error with its line number.
inline Lexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open lexicon file: " + path);
    Lexicon lex;
    std::set<std::pair<int, std::string>> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected polarity<TAB>word");
        std::string pol = line.substr(0, tab);
        std::string word = line.substr(tab + 1);
        if (word.empty() || word.find_first_of(" \t") != std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": word must be a single non-empty token");
        Polarity p;
        try {
            p = parse_polarity(pol);
        } catch (const std::invalid_argument& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert({code(p), word}).second)
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate entry \"" + word + "\"");
        lex.add(p, word);
    }
    return lex;
}

// Built-in fallback lexicon; data/lexicon.tsv ships the same lists.
inline const Lexicon& builtin_lexicon() {
    static const Lexicon lex = [] {
        Lexicon l;
        static const char* positive[] = {
            "great",      "good",       "excellent",  "wonderful",  "amazing",
            "fantastic",  "delicious",  "tasty",      "friendly",   "helpful",
            "superb",     "awesome",    "lovely",     "pleasant",   "outstanding",
            "impressive", "delightful", "brilliant",  "perfect",    "charming",
            "attentive",  "fresh",      "flavorful",  "generous",   "cozy",
            "beautiful",  "crisp",      "fabulous",   "terrific",   "marvelous",
            "exceptional", "satisfying", "reliable",  "fast",       "sturdy",
            "bright",     "vibrant",    "spacious",   "polite",     "welcoming",
            "memorable",  "incredible", "stellar",    "splendid",   "enjoyable",
            "refreshing", "quick",      "smooth",     "solid",      "gorgeous"};
        static const char* negative[] = {
            "terrible",   "awful",      "bad",          "horrible",    "disappointing",
            "bland",      "rude",       "slow",         "dirty",       "stale",
            "mediocre",   "overpriced", "greasy",       "noisy",       "cramped",
            "unfriendly", "tasteless",  "soggy",        "burnt",       "dreadful",
            "atrocious",  "lousy",      "unacceptable", "flimsy",      "broken",
            "sluggish",   "unreliable", "frustrating",  "annoying",    "defective",
            "worthless",  "disgusting", "inedible",     "cold",        "watery",
            "salty",      "undercooked", "overcooked",  "careless",    "inattentive",
            "dismal",     "poor",       "pathetic",     "shoddy",      "clunky",
            "faulty",     "miserable",  "unpleasant",   "appalling",   "abysmal"};
        static const char* neutral[] = {
            "okay",         "ordinary",      "average",       "standard",     "typical",
            "plain",        "regular",       "normal",        "usual",        "common",
            "moderate",     "acceptable",    "adequate",      "fine",         "fair",
            "basic",        "simple",        "conventional",  "unremarkable", "routine",
            "expected",     "familiar",      "middling",      "passable",     "tolerable",
            "reasonable",   "functional",    "serviceable",   "modest",       "neutral",
            "unchanged",    "consistent",    "predictable",   "customary",    "everyday",
            "generic",      "traditional",   "steady",        "uniform",      "habitual",
            "mundane",      "workable",      "sufficient",    "decent",       "standardized",
            "nondescript",  "unexceptional", "commonplace",   "intermediate", "medium"};
        for (const char* w : positive) l.add(Polarity::Positive, w);
        for (const char* w : negative) l.add(Polarity::Negative, w);
        for (const char* w : neutral) l.add(Polarity::Neutral, w);
        return l;
    }();
    return lex;
}

}  // namespace cfaug
