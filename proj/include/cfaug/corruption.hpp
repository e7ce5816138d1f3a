#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cfaug/corpus.hpp"
#include "cfaug/rng.hpp"

namespace cfaug {

enum class MaskStrategy { IntegratedGradients, Random };

inline const std::string& to_string(MaskStrategy s) {
    static const std::string ig = "integrated_gradients", rnd = "random";
    return s == MaskStrategy::IntegratedGradients ? ig : rnd;
}

inline MaskStrategy parse_mask_strategy(const std::string& s) {
    if (s == "integrated_gradients") return MaskStrategy::IntegratedGradients;
    if (s == "random") return MaskStrategy::Random;
    throw std::invalid_argument("unknown mask strategy: \"" + s + "\"");
}

struct MaskSpan {
    int begin = 0;  // token range [begin, end)
    int end = 0;

    bool operator==(const MaskSpan&) const = default;
};

struct CorruptedSample {
    std::string sample_id;
    std::vector<std::string> tokens;  // original sentence tokens
    std::vector<MaskSpan> spans;      // sorted, disjoint, non-adjacent
    int k = 0;                        // mask budget that was in effect
    MaskStrategy strategy = MaskStrategy::IntegratedGradients;
    bool all_aspect = false;          // nothing maskable: every token was aspect

    bool masked(int pos) const {
        for (const MaskSpan& s : spans)
            if (pos >= s.begin && pos < s.end) return true;
        return false;
    }

    int masked_count() const {
        int n = 0;
        for (const MaskSpan& s : spans) n += s.end - s.begin;
        return n;
    }
};

// Mask budget and score threshold: k = max(1, len/3), threshold = k-th
// largest score over the whole sentence (aspect positions included).
inline std::pair<double, int> select_threshold(const Vec& scores, int sentence_len) {
    if (sentence_len <= 0 || scores.size() != static_cast<size_t>(sentence_len))
        throw std::invalid_argument("select_threshold: scores and sentence length disagree");
    int k = std::max(1, sentence_len / 3);
    Vec sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    return {sorted[static_cast<size_t>(k - 1)], k};
}

namespace detail {

// Merge selected positions into maximal runs of consecutive indices.
inline std::vector<MaskSpan> merge_positions(std::vector<int> positions) {
    std::sort(positions.begin(), positions.end());
    std::vector<MaskSpan> spans;
    for (int pos : positions) {
        if (!spans.empty() && spans.back().end == pos) {
            spans.back().end = pos + 1;
        } else {
            spans.push_back({pos, pos + 1});
        }
    }
    return spans;
}

}  // namespace cfaug::detail

// Builds the corrupted view for an explicit set of selected positions.
// Aspect positions are off limits regardless of what selection produced.
inline CorruptedSample corrupt_positions(const std::string& sample_id, const std::vector<std::string>& tokens,
                                         const std::vector<int>& aspect_positions,
                                         const std::vector<int>& selected, int k, MaskStrategy strategy) {
    CorruptedSample out;
    out.sample_id = sample_id;
    out.tokens = tokens;
    out.k = k;
    out.strategy = strategy;
    for (int pos : selected) {
        if (pos < 0 || static_cast<size_t>(pos) >= tokens.size())
            throw std::invalid_argument("corrupt_positions: position out of range in sample " + sample_id);
        if (std::find(aspect_positions.begin(), aspect_positions.end(), pos) != aspect_positions.end())
            throw std::invalid_argument("corrupt_positions: aspect position selected in sample " + sample_id);
    }
    out.spans = detail::merge_positions(selected);
    return out;
}

// Selects which sentence tokens to corrupt. With the attribution strategy,
// non-aspect positions scoring at or above the k-th-largest threshold are
// taken in (score desc, position asc) order, at most k of them. The random
// strategy draws k distinct non-aspect positions from a per-sample stream.
// A sentence whose every token is aspect yields zero spans and a flag.
inline CorruptedSample mask_tokens(const std::string& sample_id, const std::vector<std::string>& tokens,
                                   const std::vector<int>& aspect_positions, const Vec& scores,
                                   MaskStrategy strategy, std::uint64_t seed) {
    auto [threshold, k] = select_threshold(scores, static_cast<int>(tokens.size()));
    std::vector<bool> is_aspect(tokens.size(), false);
    for (int pos : aspect_positions) {
        if (pos < 0 || static_cast<size_t>(pos) >= tokens.size())
            throw std::invalid_argument("mask_tokens: aspect position out of range in sample " + sample_id);
        is_aspect[static_cast<size_t>(pos)] = true;
    }
    std::vector<int> candidates;
    for (size_t t = 0; t < tokens.size(); ++t)
        if (!is_aspect[t]) candidates.push_back(static_cast<int>(t));

    if (candidates.empty()) {
        CorruptedSample out;
        out.sample_id = sample_id;
        out.tokens = tokens;
        out.k = k;
        out.strategy = strategy;
        out.all_aspect = true;
        return out;
    }

    std::vector<int> selected;
    if (strategy == MaskStrategy::IntegratedGradients) {
        std::vector<int> eligible;
        for (int pos : candidates)
            if (scores[static_cast<size_t>(pos)] >= threshold) eligible.push_back(pos);
        if (eligible.empty()) {
            // The threshold came from the whole sentence, so scores that
            // concentrate the top k on aspect positions would otherwise
            // leave nothing; something must always be masked.
            int best = candidates[0];
            for (int pos : candidates)
                if (scores[static_cast<size_t>(pos)] > scores[static_cast<size_t>(best)]) best = pos;
            eligible.push_back(best);
        }
        std::stable_sort(eligible.begin(), eligible.end(), [&](int x, int y) {
            return scores[static_cast<size_t>(x)] > scores[static_cast<size_t>(y)];
        });
        if (static_cast<int>(eligible.size()) > k) eligible.resize(static_cast<size_t>(k));
        selected = std::move(eligible);
    } else {
        Rng rng = derive_rng(seed, sample_id, "random-mask");
        std::vector<int> pool = candidates;
        rng.shuffle(pool);
        size_t take = std::min(pool.size(), static_cast<size_t>(k));
        selected.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return corrupt_positions(sample_id, tokens, aspect_positions, selected, k, strategy);
}

// Surface form with each masked span replaced by a single mask token.
inline std::string render(const CorruptedSample& c, const std::string& mask_token) {
    std::string out;
    size_t span_idx = 0;
    bool first = true;
    auto emit = [&](const std::string& piece) {
        if (!first) out += ' ';
        out += piece;
        first = false;
    };
    for (int t = 0; t < static_cast<int>(c.tokens.size());) {
        if (span_idx < c.spans.size() && c.spans[span_idx].begin == t) {
            emit(mask_token);
            t = c.spans[span_idx].end;
            ++span_idx;
        } else {
            emit(c.tokens[static_cast<size_t>(t)]);
            ++t;
        }
    }
    return out;
}

// The original sentence tokens (masking keeps them around).
inline const std::vector<std::string>& restore(const CorruptedSample& c) { return c.tokens; }

}  // namespace cfaug
