#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cfaug/classifier.hpp"
#include "cfaug/corpus.hpp"
#include "cfaug/generation.hpp"

namespace cfaug {

enum class RelabelRule { KeptTarget, ArgmaxOverride };

inline const std::string& to_string(RelabelRule r) {
    static const std::string kept = "kept_target", over = "argmax_override";
    return r == RelabelRule::KeptTarget ? kept : over;
}

inline RelabelRule parse_relabel_rule(const std::string& s) {
    if (s == "kept_target") return RelabelRule::KeptTarget;
    if (s == "argmax_override") return RelabelRule::ArgmaxOverride;
    throw std::invalid_argument("unknown relabel rule: \"" + s + "\"");
}

struct RelabelDecision {
    Polarity label = Polarity::Neutral;
    RelabelRule rule = RelabelRule::ArgmaxOverride;
};

inline int argmax3(const std::array<double, 3>& p) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
        if (p[static_cast<size_t>(c)] > p[static_cast<size_t>(best)]) best = c;
    return best;
}

// Confidence gate: keep the intended target label only when the model both
// picks it and is confident; otherwise the model's argmax wins. Ties go to
// the smallest class index.
inline RelabelDecision assign_label(const std::array<double, 3>& probs, Polarity target, double prob_threshold) {
    if (!(prob_threshold > 0.0 && prob_threshold < 1.0))
        throw std::invalid_argument("assign_label: prob_threshold must lie in (0, 1)");
    int best = argmax3(probs);
    RelabelDecision d;
    if (best == code(target) && probs[static_cast<size_t>(best)] > prob_threshold) {
        d.label = target;
        d.rule = RelabelRule::KeptTarget;
    } else {
        d.label = polarity_from_code(best);
        d.rule = RelabelRule::ArgmaxOverride;
    }
    return d;
}

struct ScoredCandidate {
    GenerationCandidate candidate;
    Sample as_sample;             // candidate text with the aspect located
    std::array<double, 3> probs{};
    double fluctuation = 0.0;     // p_candidate[target] - p_source[target]
};

// Rebuilds a Sample around the candidate text by finding the source
// aspect's token sequence inside it. Candidates that lost the aspect
// surface have no home for the label and return nothing.
inline std::optional<Sample> locate_aspect(const Sample& source, const std::string& candidate_text,
                                           const std::string& id) {
    const AspectSpan& src_aspect = source.aspect();
    std::vector<std::string> aspect_tokens(source.tokens.begin() + src_aspect.start,
                                           source.tokens.begin() + src_aspect.end);
    std::vector<TokenSpan> spans = tokenize_spans(candidate_text);
    if (spans.size() < aspect_tokens.size() || aspect_tokens.empty()) return std::nullopt;
    for (size_t start = 0; start + aspect_tokens.size() <= spans.size(); ++start) {
        bool match = true;
        for (size_t k = 0; k < aspect_tokens.size(); ++k) {
            if (spans[start + k].text != aspect_tokens[k]) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        size_t from = spans[start].begin;
        size_t to = spans[start + aspect_tokens.size() - 1].end;
        return detail::make_sample(id, candidate_text, source.label, static_cast<int>(from),
                                   static_cast<int>(to), candidate_text.substr(from, to - from));
    }
    return std::nullopt;
}

struct CandidateSelection {
    std::optional<ScoredCandidate> chosen;
    int excluded = 0;  // candidates that lost the aspect surface
};

// Scores every viable candidate under the model and keeps the one that
// moves the target-class probability up the most; ties keep the earlier
// candidate. All candidates unusable -> no selection.
inline CandidateSelection select_candidate(const ModelParams& params, const Vocab& vocab, const Sample& source,
                                           const std::vector<GenerationCandidate>& candidates,
                                           const std::array<double, 3>& source_probs, Polarity target) {
    CandidateSelection sel;
    for (const GenerationCandidate& cand : candidates) {
        if (cand.target != target)
            throw std::invalid_argument("select_candidate: candidate target mismatch for " + cand.source_id);
        std::optional<Sample> s = locate_aspect(source, cand.text, source.id + ":cand");
        if (!s) {
            ++sel.excluded;
            continue;
        }
        ScoredCandidate scored;
        scored.candidate = cand;
        scored.as_sample = std::move(*s);
        scored.probs = predict(params, vocab, scored.as_sample);
        scored.fluctuation =
            scored.probs[static_cast<size_t>(code(target))] - source_probs[static_cast<size_t>(code(target))];
        if (!sel.chosen || scored.fluctuation > sel.chosen->fluctuation) sel.chosen = std::move(scored);
    }
    return sel;
}

}  // namespace cfaug
