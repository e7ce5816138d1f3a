#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "cfaug/error.hpp"
#include "cfaug/lexicon.hpp"
#include "cfaug/polarity.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

struct TokenSpan {
    std::string text;   // normalized token (ASCII lowercased)
    size_t begin = 0;   // byte offsets into the original string
    size_t end = 0;
};

namespace detail {

struct Codepoint {
    std::uint32_t value = 0;
    size_t length = 1;  // bytes consumed
};

inline Codepoint decode_utf8(const std::string& s, size_t i) {
    unsigned char b = static_cast<unsigned char>(s[i]);
    Codepoint cp;
    size_t len;
    if (b < 0x80) {
        cp.value = b;
        cp.length = 1;
        return cp;
    } else if ((b & 0xe0) == 0xc0) {
        cp.value = b & 0x1fu;
        len = 2;
    } else if ((b & 0xf0) == 0xe0) {
        cp.value = b & 0x0fu;
        len = 3;
    } else if ((b & 0xf8) == 0xf0) {
        cp.value = b & 0x07u;
        len = 4;
    } else {
        // stray continuation byte; treat as an opaque word character
        cp.value = 0xfffd;
        cp.length = 1;
        return cp;
    }
    for (size_t k = 1; k < len; ++k) {
        if (i + k >= s.size()) break;
        unsigned char c = static_cast<unsigned char>(s[i + k]);
        if ((c & 0xc0) != 0x80) break;
        cp.value = (cp.value << 6) | (c & 0x3fu);
        cp.length = k + 1;
    }
    return cp;
}

// Non-ASCII codepoints treated as punctuation; everything else non-ASCII
// is a word character.
inline bool is_wide_punct(std::uint32_t cp) {
    switch (cp) {
        case 0x2018:  // left single quote
        case 0x201c:  // left double quote
        case 0x201d:  // right double quote
        case 0x2013:  // en dash
        case 0x2014:  // em dash
        case 0x2026:  // ellipsis
        case 0x27e8:  // mathematical left angle bracket
        case 0x27e9:  // mathematical right angle bracket
            return true;
        default:
            return false;
    }
}

inline bool is_ascii_letter(std::uint32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

inline bool is_word_char(std::uint32_t cp) {
    if (cp < 0x80) return (cp >= '0' && cp <= '9') || is_ascii_letter(cp);
    return !is_wide_punct(cp) && cp != 0x2019;
}

inline void append_codepoint_lower(std::string& out, const std::string& src, size_t i, const Codepoint& cp) {
    if (cp.value < 0x80) {
        char c = static_cast<char>(cp.value);
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        out.push_back(c);
    } else {
        out.append(src, i, cp.length);
    }
}

}  // namespace detail

// Whitespace-and-punctuation tokenizer with two wrinkles: ASCII is
// lowercased, and an apostrophe inside a word starts a new token that
// keeps the apostrophe ("isn't" -> "isn", "'t"). U+2019 is normalized
// to the ASCII apostrophe first. Offsets refer to the original bytes.
inline std::vector<TokenSpan> tokenize_spans(const std::string& text) {
    std::vector<TokenSpan> out;
    std::string cur;
    size_t cur_begin = 0;
    auto flush = [&](size_t end) {
        if (!cur.empty()) {
            out.push_back({cur, cur_begin, end});
            cur.clear();
        }
    };
    size_t i = 0;
    while (i < text.size()) {
        detail::Codepoint cp = detail::decode_utf8(text, i);
        std::uint32_t v = cp.value == 0x2019 ? static_cast<std::uint32_t>('\'') : cp.value;
        if (v < 0x80 && (v == ' ' || v == '\t' || v == '\n' || v == '\r' || v == '\f' || v == '\v')) {
            flush(i);
        } else if (v == '\'') {
            size_t next = i + cp.length;
            bool contraction = false;
            if (!cur.empty() && next < text.size()) {
                detail::Codepoint peek = detail::decode_utf8(text, next);
                contraction = detail::is_ascii_letter(peek.value);
            }
            flush(i);
            if (contraction) {
                cur = "'";
                cur_begin = i;
            } else {
                out.push_back({"'", i, i + cp.length});
            }
        } else if (detail::is_word_char(v)) {
            if (cur.empty()) cur_begin = i;
            detail::append_codepoint_lower(cur, text, i, cp);
        } else {
            flush(i);
            std::string punct;
            detail::append_codepoint_lower(punct, text, i, cp);
            out.push_back({punct, i, i + cp.length});
        }
        i += cp.length;
    }
    flush(text.size());
    return out;
}

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    for (auto& t : tokenize_spans(text)) out.push_back(std::move(t.text));
    return out;
}

// ---------------------------------------------------------------------------
// Samples and datasets
// ---------------------------------------------------------------------------

struct AspectSpan {
    int start = 0;  // token range [start, end) in Sample::tokens
    int end = 0;
    std::string surface;   // joined tokens, normalized form
    int char_begin = 0;    // byte range in Sample::text, kept for dumps
    int char_end = 0;

    bool operator==(const AspectSpan&) const = default;
};

struct Sample {
    std::string id;
    std::string text;                // original surface text
    std::vector<std::string> tokens;
    std::vector<AspectSpan> aspects;
    size_t aspect_index = 0;         // which aspect this sample targets
    Polarity label = Polarity::Neutral;

    const AspectSpan& aspect() const { return aspects.at(aspect_index); }

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    int skipped_conflicts = 0;
};

inline std::string join_tokens(const std::vector<std::string>& tokens, int start, int end) {
    std::string out;
    for (int i = start; i < end; ++i) {
        if (i > start) out += ' ';
        out += tokens[static_cast<size_t>(i)];
    }
    return out;
}

namespace detail {

// Maps a byte range onto the token sequence. The range must cover whole
// tokens; `where` names the offending sample in error messages.
inline std::pair<int, int> char_span_to_tokens(const std::vector<TokenSpan>& spans, int from, int to,
                                               const std::string& aspect_text, const std::string& where) {
    int first = -1, last = -1;
    for (size_t t = 0; t < spans.size(); ++t) {
        bool overlaps = spans[t].begin < static_cast<size_t>(to) && spans[t].end > static_cast<size_t>(from);
        if (overlaps) {
            if (first < 0) first = static_cast<int>(t);
            last = static_cast<int>(t);
        }
    }
    if (first < 0)
        throw ParseError("aspect span [" + std::to_string(from) + "," + std::to_string(to) +
                         ") matches no tokens in sample " + where);
    std::vector<std::string> aspect_tokens = tokenize(aspect_text);
    std::vector<std::string> covered;
    for (int t = first; t <= last; ++t) covered.push_back(spans[static_cast<size_t>(t)].text);
    if (aspect_tokens != covered)
        throw ParseError("aspect \"" + aspect_text + "\" does not align with token boundaries in sample " + where);
    return {first, last + 1};
}

inline Sample make_sample(std::string id, std::string text, Polarity label, int from, int to,
                          const std::string& aspect_text) {
    std::vector<TokenSpan> spans = tokenize_spans(text);
    if (spans.empty()) throw ParseError("sample " + id + " has no tokens");
    auto [a, b] = char_span_to_tokens(spans, from, to, aspect_text, id);
    Sample s;
    s.id = std::move(id);
    s.text = std::move(text);
    for (auto& sp : spans) s.tokens.push_back(sp.text);
    AspectSpan span;
    span.start = a;
    span.end = b;
    span.surface = join_tokens(s.tokens, a, b);
    span.char_begin = from;
    span.char_end = to;
    s.aspects.push_back(span);
    s.aspect_index = 0;
    s.label = label;
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSONL format: {"text", "aspect", "from", "to", "polarity"[, "id"]}
// ---------------------------------------------------------------------------

inline Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset: " + path);
    Dataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        try {
            std::string text = j.at("text").get<std::string>();
            std::string aspect = j.at("aspect").get<std::string>();
            int from = j.at("from").get<int>();
            int to = j.at("to").get<int>();
            Polarity label = parse_polarity(j.at("polarity").get<std::string>());
            std::string id = j.contains("id") ? j.at("id").get<std::string>() : std::to_string(line_no);
            if (from < 0 || to <= from || static_cast<size_t>(to) > text.size())
                throw ParseError(where + ": bad aspect offsets [" + std::to_string(from) + "," +
                                 std::to_string(to) + ")");
            ds.samples.push_back(detail::make_sample(std::move(id), std::move(text), label, from, to, aspect));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return ds;
}

inline nlohmann::json to_json(const Sample& s) {
    const AspectSpan& a = s.aspect();
    nlohmann::json j;
    j["text"] = s.text;
    j["aspect"] = s.text.substr(static_cast<size_t>(a.char_begin),
                                static_cast<size_t>(a.char_end - a.char_begin));
    j["from"] = a.char_begin;
    j["to"] = a.char_end;
    j["polarity"] = to_string(s.label);
    j["id"] = s.id;
    return j;
}

inline void dump_jsonl(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset: " + path);
    for (const Sample& s : ds.samples) out << to_json(s).dump() << "\n";
    if (!out) throw Error("failed writing dataset: " + path);
}

// ---------------------------------------------------------------------------
// SemEval XML format
// ---------------------------------------------------------------------------

// One sample per aspectTerm; "conflict" terms are skipped and counted.
// A sentence with several kept terms yields samples sharing tokens, with
// all kept spans listed and aspect_index selecting the target.
inline Dataset load_semeval_xml(const std::string& path) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_xml(path, tree);
    } catch (const pt::ptree_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    Dataset ds;
    try {
        const pt::ptree& sentences = tree.get_child("sentences");
        for (const auto& [key, sent] : sentences) {
            if (key != "sentence") continue;
            std::string sid = sent.get<std::string>("<xmlattr>.id", "?");
            std::string text = sent.get<std::string>("text");
            auto terms = sent.get_child_optional("aspectTerms");
            if (!terms) continue;
            struct Term {
                std::string surface;
                Polarity label;
                int from, to;
            };
            std::vector<Term> kept;
            for (const auto& [k2, term] : *terms) {
                if (k2 != "aspectTerm") continue;
                std::string pol = term.get<std::string>("<xmlattr>.polarity");
                if (pol == "conflict") {
                    ++ds.skipped_conflicts;
                    continue;
                }
                Term t;
                t.surface = term.get<std::string>("<xmlattr>.term");
                t.from = term.get<int>("<xmlattr>.from");
                t.to = term.get<int>("<xmlattr>.to");
                try {
                    t.label = parse_polarity(pol);
                } catch (const std::invalid_argument& e) {
                    throw ParseError(path + ": sentence " + sid + ": " + e.what());
                }
                kept.push_back(std::move(t));
            }
            if (kept.empty()) continue;
            std::vector<TokenSpan> spans = tokenize_spans(text);
            if (spans.empty()) throw ParseError(path + ": sentence " + sid + " has no tokens");
            std::vector<std::string> tokens;
            for (auto& sp : spans) tokens.push_back(sp.text);
            std::vector<AspectSpan> aspect_spans;
            for (const Term& t : kept) {
                auto [a, b] = detail::char_span_to_tokens(spans, t.from, t.to, t.surface, sid);
                AspectSpan sp;
                sp.start = a;
                sp.end = b;
                sp.surface = join_tokens(tokens, a, b);
                sp.char_begin = t.from;
                sp.char_end = t.to;
                aspect_spans.push_back(sp);
            }
            for (size_t k = 0; k < kept.size(); ++k) {
                Sample s;
                s.id = sid + "#" + std::to_string(k);
                s.text = text;
                s.tokens = tokens;
                s.aspects = aspect_spans;
                s.aspect_index = k;
                s.label = kept[k].label;
                ds.samples.push_back(std::move(s));
            }
        }
    } catch (const pt::ptree_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Vocabulary and encoding
// ---------------------------------------------------------------------------

class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kSep = 1;
    static constexpr int kMask = 2;
    static constexpr int kUnk = 3;

    Vocab() {
        id_to_token_ = {"[PAD]", "[SEP]", "[MASK]", "[UNK]"};
    }

    int add(const std::string& token) {
        auto it = token_to_id_.find(token);
        if (it != token_to_id_.end()) return it->second;
        int id = static_cast<int>(id_to_token_.size());
        id_to_token_.push_back(token);
        token_to_id_.emplace(token, id);
        return id;
    }

    int id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size())
            throw std::invalid_argument("token id out of range: " + std::to_string(id));
        return id_to_token_[static_cast<size_t>(id)];
    }

    size_t size() const { return id_to_token_.size(); }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Tokens ordered by (frequency desc, lexicographic asc) after the four
// specials. Aspect tokens are always kept regardless of min_count.
inline Vocab build_vocab(const Dataset& ds, int min_count = 1) {
    std::map<std::string, std::int64_t> freq;
    std::map<std::string, bool> is_aspect;
    for (const Sample& s : ds.samples) {
        for (const std::string& t : s.tokens) ++freq[t];
        const AspectSpan& a = s.aspect();
        for (int i = a.start; i < a.end; ++i) is_aspect[s.tokens[static_cast<size_t>(i)]] = true;
    }
    std::vector<std::pair<std::string, std::int64_t>> entries;
    for (const auto& [tok, n] : freq) {
        if (n >= min_count || is_aspect.count(tok)) entries.emplace_back(tok, n);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    Vocab v;
    for (const auto& [tok, n] : entries) v.add(tok);
    return v;
}

struct EncodedSample {
    std::vector<int> ids;             // sentence ++ SEP ++ target aspect tokens
    int sentence_len = 0;
    std::vector<int> aspect_positions;  // target-span positions within the sentence

    bool operator==(const EncodedSample&) const = default;
};

inline EncodedSample encode(const Sample& s, const Vocab& vocab) {
    EncodedSample e;
    e.sentence_len = static_cast<int>(s.tokens.size());
    for (const std::string& t : s.tokens) e.ids.push_back(vocab.id(t));
    e.ids.push_back(Vocab::kSep);
    const AspectSpan& a = s.aspect();
    for (int i = a.start; i < a.end; ++i) {
        e.ids.push_back(vocab.id(s.tokens[static_cast<size_t>(i)]));
        e.aspect_positions.push_back(i);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
    std::array<int, 3> per_class{};  // indexed by polarity code
    int total = 0;
    int skipped_conflicts = 0;
};

inline CorpusStats stats(const Dataset& ds) {
    CorpusStats st;
    st.total = static_cast<int>(ds.samples.size());
    st.skipped_conflicts = ds.skipped_conflicts;
    for (const Sample& s : ds.samples) ++st.per_class[static_cast<size_t>(code(s.label))];
    return st;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

// Class-balanced sentences over a fixed aspect list, with the opinion word
// drawn from the built-in lexicon for the sample's label. Deterministic in
// (n, seed) down to the byte.
inline Dataset generate_synthetic(int n, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("generate_synthetic: n must be >= 0");
    static const std::vector<std::string> aspects = {
        "food",    "service", "battery life", "screen", "keyboard",   "pizza",
        "staff",   "wine list", "menu",       "laptop", "price",      "atmosphere"};
    static const std::vector<std::string> patterns = {
        "the {A} was {O}",
        "i thought the {A} was really {O}",
        "the {A} seemed {O} to everyone there",
        "honestly the {A} felt {O} during our visit",
        "the {A} turned out {O} after all",
        "overall the {A} was {O} this time"};
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(seed, "synth", i);
        Polarity label = polarity_from_code(i % 3);
        const std::string& aspect = rng.pick(aspects);
        const std::string& pattern = rng.pick(patterns);
        const std::string& opinion = rng.pick(builtin_lexicon().words(label));
        std::string text = pattern;
        size_t apos = text.find("{A}");
        text.replace(apos, 3, aspect);
        size_t opos = text.find("{O}");
        text.replace(opos, 3, opinion);
        std::string id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);
        ds.samples.push_back(detail::make_sample(std::move(id), std::move(text), label,
                                                 static_cast<int>(apos),
                                                 static_cast<int>(apos + aspect.size()), aspect));
    }
    return ds;
}

}  // namespace cfaug
