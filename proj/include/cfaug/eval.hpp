#pragma once

#include <array>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfaug/classifier.hpp"
#include "cfaug/corpus.hpp"

namespace cfaug {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalMetrics {
    std::array<std::array<int, 3>, 3> confusion{};  // [gold][pred]
    double accuracy = 0.0;
    std::array<ClassMetrics, 3> per_class{};        // indexed by polarity code
    double macro_f1 = 0.0;
};

// Standard confusion-matrix metrics; every 0/0 ratio is defined as 0 and
// macro F1 is the unweighted mean over the three classes.
inline EvalMetrics evaluate_predictions(const std::vector<Polarity>& gold, const std::vector<Polarity>& pred) {
    if (gold.empty() || gold.size() != pred.size())
        throw std::invalid_argument("evaluate_predictions: empty or misaligned inputs");
    EvalMetrics m;
    for (size_t i = 0; i < gold.size(); ++i)
        ++m.confusion[static_cast<size_t>(code(gold[i]))][static_cast<size_t>(code(pred[i]))];
    int correct = 0;
    for (int c = 0; c < 3; ++c) correct += m.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    m.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
    double f1_sum = 0.0;
    for (size_t c = 0; c < 3; ++c) {
        int tp = m.confusion[c][c];
        int fp = 0, fn = 0;
        for (size_t o = 0; o < 3; ++o) {
            if (o == c) continue;
            fp += m.confusion[o][c];
            fn += m.confusion[c][o];
        }
        ClassMetrics& cm = m.per_class[c];
        cm.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        cm.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        cm.f1 = (cm.precision + cm.recall) > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        f1_sum += cm.f1;
    }
    m.macro_f1 = f1_sum / 3.0;
    return m;
}

inline Polarity predict_label(const ModelParams& params, const Vocab& vocab, const Sample& s) {
    std::array<double, 3> p = predict(params, vocab, s);
    int best = 0;
    for (int c = 1; c < 3; ++c)
        if (p[static_cast<size_t>(c)] > p[static_cast<size_t>(best)]) best = c;
    return polarity_from_code(best);
}

inline EvalMetrics evaluate_model(const ModelParams& params, const Vocab& vocab, const Dataset& test) {
    if (test.samples.empty()) throw std::invalid_argument("evaluate_model: empty test set");
    std::vector<Polarity> gold, pred;
    gold.reserve(test.samples.size());
    pred.reserve(test.samples.size());
    for (const Sample& s : test.samples) {
        gold.push_back(s.label);
        pred.push_back(predict_label(params, vocab, s));
    }
    return evaluate_predictions(gold, pred);
}

struct EvalRun {
    std::string corpus;
    std::uint64_t seed = 0;
    EvalMetrics metrics;
};

struct CorpusSummary {
    std::string corpus;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
};

struct EvalReport {
    std::vector<EvalRun> runs;
    std::vector<CorpusSummary> summaries;
};

// Trains one model per (corpus, seed) and evaluates each on the shared
// test set; reports per-run metrics and per-corpus means.
inline EvalReport run_eval(const std::vector<std::pair<std::string, Dataset>>& corpora, const Dataset& test,
                           const std::vector<std::uint64_t>& seeds, const TrainConfig& base) {
    if (corpora.empty() || seeds.empty()) throw std::invalid_argument("run_eval: nothing to evaluate");
    EvalReport report;
    for (const auto& [name, corpus] : corpora) {
        CorpusStats st = stats(corpus);
        for (int c = 0; c < 3; ++c)
            if (st.per_class[static_cast<size_t>(c)] == 0)
                throw Error("corpus \"" + name + "\" has no " + to_string(polarity_from_code(c)) + " samples");
        Vocab vocab = build_vocab(corpus);
        double acc = 0.0, f1 = 0.0;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            TrainResult tr = train(corpus, vocab, cfg);
            EvalRun run;
            run.corpus = name;
            run.seed = seed;
            run.metrics = evaluate_model(tr.params, vocab, test);
            acc += run.metrics.accuracy;
            f1 += run.metrics.macro_f1;
            report.runs.push_back(std::move(run));
        }
        report.summaries.push_back(
            {name, acc / static_cast<double>(seeds.size()), f1 / static_cast<double>(seeds.size())});
    }
    return report;
}

inline nlohmann::json to_json(const EvalMetrics& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
    j["confusion"] = m.confusion;
    nlohmann::json classes = nlohmann::json::object();
    for (int c = 0; c < 3; ++c) {
        const ClassMetrics& cm = m.per_class[static_cast<size_t>(c)];
        classes[to_string(polarity_from_code(c))] = {
            {"precision", cm.precision}, {"recall", cm.recall}, {"f1", cm.f1}};
    }
    j["per_class"] = classes;
    return j;
}

inline nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json j;
    j["runs"] = nlohmann::json::array();
    for (const EvalRun& run : report.runs) {
        nlohmann::json r;
        r["corpus"] = run.corpus;
        r["seed"] = run.seed;
        r["metrics"] = to_json(run.metrics);
        j["runs"].push_back(std::move(r));
    }
    j["summaries"] = nlohmann::json::array();
    for (const CorpusSummary& s : report.summaries) {
        j["summaries"].push_back(
            {{"corpus", s.corpus}, {"mean_accuracy", s.mean_accuracy}, {"mean_macro_f1", s.mean_macro_f1}});
    }
    return j;
}

inline std::string to_table(const EvalReport& report) {
    std::ostringstream out;
    size_t width = 8;
    for (const CorpusSummary& s : report.summaries) width = std::max(width, s.corpus.size());
    out << std::left << std::setw(static_cast<int>(width) + 2) << "corpus"
        << std::right << std::setw(10) << "mean_acc" << std::setw(12) << "mean_f1" << "\n";
    out << std::string(width + 2 + 22, '-') << "\n";
    out << std::fixed << std::setprecision(4);
    for (const CorpusSummary& s : report.summaries) {
        out << std::left << std::setw(static_cast<int>(width) + 2) << s.corpus
            << std::right << std::setw(10) << s.mean_accuracy << std::setw(12) << s.mean_macro_f1 << "\n";
    }
    return out.str();
}

}  // namespace cfaug
