#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <utility>
#include <vector>

#include "cfaug/classifier.hpp"

namespace cfaug {

struct IgConfig {
    int steps = 64;
};

struct AttributionResult {
    int target_class = 0;
    std::vector<Vec> signed_components;  // per sentence token, d-wide
    Vec token_scores;                    // L2 norm per sentence token
    double completeness_gap = 0.0;       // |sum(components) - (p_in - p_base)|
    double input_prob = 0.0;
    double baseline_prob = 0.0;
};

// Baseline input: every non-aspect sentence vector is replaced by the PAD
// embedding; aspect positions and the aspect suffix stay as in the input,
// so the baseline asks "this aspect, with the sentence blanked out".
inline EmbeddedInput make_baseline(const ModelParams& params, const EmbeddedInput& input) {
    if (params.E.empty()) throw std::invalid_argument("make_baseline: model has no embeddings");
    EmbeddedInput base = input;
    const Vec& pad = params.E[Vocab::kPad];
    std::vector<bool> is_aspect(base.sentence.size(), false);
    for (int pos : input.origin.aspect_positions) {
        if (pos < 0 || static_cast<size_t>(pos) >= base.sentence.size())
            throw std::invalid_argument("make_baseline: aspect position out of range");
        is_aspect[static_cast<size_t>(pos)] = true;
    }
    for (size_t t = 0; t < base.sentence.size(); ++t) {
        if (!is_aspect[t]) base.sentence[t] = pad;
    }
    return base;
}

// Path-integrated gradients of the target-class probability from the
// baseline to the input, right-endpoint Riemann sum over `steps` points.
// Scores land on sentence positions; aspect positions get exactly zero
// because input and baseline coincide there.
inline AttributionResult integrated_gradients(const ModelParams& params, const EmbeddedInput& input,
                                              const EmbeddedInput& baseline, int target_class,
                                              const IgConfig& cfg = {}) {
    if (cfg.steps < 1) throw std::invalid_argument("integrated_gradients: steps must be >= 1");
    if (target_class < 0 || target_class > 2)
        throw std::invalid_argument("integrated_gradients: target class out of range");
    if (input.sentence.size() != baseline.sentence.size() || input.aspect.size() != baseline.aspect.size())
        throw std::invalid_argument("integrated_gradients: input and baseline shapes differ");

    const size_t n = input.sentence.size();
    const size_t m = input.aspect.size();
    const size_t d = static_cast<size_t>(params.d);

    std::vector<Vec> grad_sum_sentence(n, Vec(d, 0.0));
    std::vector<Vec> grad_sum_aspect(m, Vec(d, 0.0));
    EmbeddedInput point = input;
    for (int j = 1; j <= cfg.steps; ++j) {
        double alpha = static_cast<double>(j) / static_cast<double>(cfg.steps);
        for (size_t t = 0; t < n; ++t)
            for (size_t i = 0; i < d; ++i)
                point.sentence[t][i] = baseline.sentence[t][i] + alpha * (input.sentence[t][i] - baseline.sentence[t][i]);
        for (size_t t = 0; t < m; ++t)
            for (size_t i = 0; i < d; ++i)
                point.aspect[t][i] = baseline.aspect[t][i] + alpha * (input.aspect[t][i] - baseline.aspect[t][i]);
        InputGradient g = grad_wrt_input(params, point, target_class);
        for (size_t t = 0; t < n; ++t)
            for (size_t i = 0; i < d; ++i) grad_sum_sentence[t][i] += g.sentence[t][i];
        for (size_t t = 0; t < m; ++t)
            for (size_t i = 0; i < d; ++i) grad_sum_aspect[t][i] += g.aspect[t][i];
    }

    AttributionResult res;
    res.target_class = target_class;
    res.signed_components.assign(n, Vec(d, 0.0));
    res.token_scores.assign(n, 0.0);
    double total = 0.0;
    for (size_t t = 0; t < n; ++t) {
        double sq = 0.0;
        for (size_t i = 0; i < d; ++i) {
            double c = (input.sentence[t][i] - baseline.sentence[t][i]) * grad_sum_sentence[t][i] /
                       static_cast<double>(cfg.steps);
            res.signed_components[t][i] = c;
            total += c;
            sq += c * c;
        }
        res.token_scores[t] = std::sqrt(sq);
    }
    // Aspect suffix positions contribute too; the difference there is zero
    // by construction, so these terms vanish exactly.
    for (size_t t = 0; t < m; ++t)
        for (size_t i = 0; i < d; ++i)
            total += (input.aspect[t][i] - baseline.aspect[t][i]) * grad_sum_aspect[t][i] /
                     static_cast<double>(cfg.steps);

    res.input_prob = forward(params, input)[static_cast<size_t>(target_class)];
    res.baseline_prob = forward(params, baseline)[static_cast<size_t>(target_class)];
    res.completeness_gap = std::abs(total - (res.input_prob - res.baseline_prob));
    return res;
}

// Positions ordered by score descending; equal scores keep the earlier
// position first.
inline std::vector<std::pair<int, double>> rank_tokens(const AttributionResult& res) {
    std::vector<std::pair<int, double>> ranked;
    ranked.reserve(res.token_scores.size());
    for (size_t t = 0; t < res.token_scores.size(); ++t)
        ranked.emplace_back(static_cast<int>(t), res.token_scores[t]);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    return ranked;
}

}  // namespace cfaug
