#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfaug/attribution.hpp"
#include "cfaug/classifier.hpp"
#include "cfaug/corpus.hpp"
#include "cfaug/corruption.hpp"
#include "cfaug/error.hpp"
#include "cfaug/eval.hpp"
#include "cfaug/generation.hpp"
#include "cfaug/hashing.hpp"
#include "cfaug/parallel.hpp"
#include "cfaug/relabel.hpp"

namespace cfaug {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class PromptMode { Counterfactual, LabelPreserve };

inline const std::string& to_string(PromptMode m) {
    static const std::string cf = "counterfactual", lp = "label_preserve";
    return m == PromptMode::Counterfactual ? cf : lp;
}

inline PromptMode parse_prompt_mode(const std::string& s) {
    if (s == "counterfactual") return PromptMode::Counterfactual;
    if (s == "label_preserve") return PromptMode::LabelPreserve;
    throw std::invalid_argument("unknown prompt mode: \"" + s + "\"");
}

struct PipelineConfig {
    std::string train_path;
    std::string test_path;          // optional until eval
    std::string dataset_format = "jsonl";  // jsonl | semeval_xml
    std::uint64_t seed = 1;
    TrainConfig classifier;         // seed field mirrors the global seed
    int ig_steps = 64;
    MaskStrategy mask_strategy = MaskStrategy::IntegratedGradients;
    std::string mask_token = "<mask>";
    PromptMode prompt_mode = PromptMode::Counterfactual;
    std::string templates_path;     // empty -> built-in templates
    int n_per_template = 1;
    int max_words_per_mask = 3;
    std::string lexicon_path;       // empty -> built-in lexicon
    std::string backend_kind = "lexicon";  // lexicon | remote
    std::string backend_base_url;
    double backend_timeout_secs = 30.0;
    int backend_max_in_flight = 4;
    double prob_threshold = 0.7;
    std::string output_dir;
    int workers = 4;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& prefix,
                       std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) throw ConfigError("unknown config key: " + (prefix.empty() ? key : prefix + "." + key));
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& prefix) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key " + (prefix.empty() ? std::string(key) : prefix + "." + key) +
                          " has the wrong type: " + e.what());
    }
}

}  // namespace detail

// Strict parse: unknown keys anywhere are errors, enum values and numeric
// ranges are validated up front.
inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::get_or;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j, "", {"dataset", "seed", "classifier", "ig", "mask", "mask_token", "prompt", "lexicon",
                       "backend", "relabel", "output", "workers"});
    PipelineConfig cfg;

    if (!j.contains("dataset")) throw ConfigError("config is missing \"dataset\"");
    const auto& ds = j.at("dataset");
    check_keys(ds, "dataset", {"train", "test", "format"});
    if (!ds.contains("train")) throw ConfigError("config is missing \"dataset.train\"");
    cfg.train_path = get_or<std::string>(ds, "train", "", "dataset");
    cfg.test_path = get_or<std::string>(ds, "test", "", "dataset");
    cfg.dataset_format = get_or<std::string>(ds, "format", "jsonl", "dataset");
    if (cfg.dataset_format != "jsonl" && cfg.dataset_format != "semeval_xml")
        throw ConfigError("dataset.format must be \"jsonl\" or \"semeval_xml\"");

    if (!j.contains("seed")) throw ConfigError("config is missing \"seed\"");
    cfg.seed = get_or<std::uint64_t>(j, "seed", 1, "");

    if (j.contains("classifier")) {
        const auto& c = j.at("classifier");
        check_keys(c, "classifier", {"epochs", "batch_size", "learning_rate", "d", "h", "l2"});
        cfg.classifier.epochs = get_or<int>(c, "epochs", cfg.classifier.epochs, "classifier");
        cfg.classifier.batch_size = get_or<int>(c, "batch_size", cfg.classifier.batch_size, "classifier");
        cfg.classifier.learning_rate =
            get_or<double>(c, "learning_rate", cfg.classifier.learning_rate, "classifier");
        cfg.classifier.d = get_or<int>(c, "d", cfg.classifier.d, "classifier");
        cfg.classifier.h = get_or<int>(c, "h", cfg.classifier.h, "classifier");
        cfg.classifier.l2 = get_or<double>(c, "l2", cfg.classifier.l2, "classifier");
    }
    cfg.classifier.seed = cfg.seed;
    if (cfg.classifier.epochs < 1 || cfg.classifier.batch_size < 1 || cfg.classifier.d < 1 ||
        cfg.classifier.h < 1 || cfg.classifier.learning_rate <= 0.0 || cfg.classifier.l2 < 0.0)
        throw ConfigError("classifier settings out of range");

    if (j.contains("ig")) {
        const auto& ig = j.at("ig");
        check_keys(ig, "ig", {"steps"});
        cfg.ig_steps = get_or<int>(ig, "steps", cfg.ig_steps, "ig");
    }
    if (cfg.ig_steps < 1) throw ConfigError("ig.steps must be >= 1");

    if (j.contains("mask")) {
        const auto& m = j.at("mask");
        check_keys(m, "mask", {"strategy"});
        try {
            cfg.mask_strategy = parse_mask_strategy(
                get_or<std::string>(m, "strategy", to_string(cfg.mask_strategy), "mask"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    cfg.mask_token = get_or<std::string>(j, "mask_token", cfg.mask_token, "");
    if (cfg.mask_token.empty()) throw ConfigError("mask_token must be non-empty");

    if (j.contains("prompt")) {
        const auto& p = j.at("prompt");
        check_keys(p, "prompt", {"mode", "templates", "n_per_template", "max_words_per_mask"});
        try {
            cfg.prompt_mode =
                parse_prompt_mode(get_or<std::string>(p, "mode", to_string(cfg.prompt_mode), "prompt"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        cfg.templates_path = get_or<std::string>(p, "templates", "", "prompt");
        cfg.n_per_template = get_or<int>(p, "n_per_template", cfg.n_per_template, "prompt");
        cfg.max_words_per_mask = get_or<int>(p, "max_words_per_mask", cfg.max_words_per_mask, "prompt");
    }
    if (cfg.n_per_template < 1) throw ConfigError("prompt.n_per_template must be >= 1");
    if (cfg.max_words_per_mask < 1) throw ConfigError("prompt.max_words_per_mask must be >= 1");

    cfg.lexicon_path = get_or<std::string>(j, "lexicon", "", "");

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        check_keys(b, "backend", {"kind", "base_url", "timeout_secs", "max_in_flight"});
        cfg.backend_kind = get_or<std::string>(b, "kind", cfg.backend_kind, "backend");
        cfg.backend_base_url = get_or<std::string>(b, "base_url", "", "backend");
        cfg.backend_timeout_secs = get_or<double>(b, "timeout_secs", cfg.backend_timeout_secs, "backend");
        cfg.backend_max_in_flight = get_or<int>(b, "max_in_flight", cfg.backend_max_in_flight, "backend");
    }
    if (cfg.backend_kind != "lexicon" && cfg.backend_kind != "remote")
        throw ConfigError("backend.kind must be \"lexicon\" or \"remote\"");
    if (cfg.backend_kind == "remote" && cfg.backend_base_url.empty())
        throw ConfigError("backend.base_url is required for the remote backend");
    if (cfg.backend_timeout_secs <= 0.0 || cfg.backend_max_in_flight < 1)
        throw ConfigError("backend settings out of range");

    if (j.contains("relabel")) {
        const auto& r = j.at("relabel");
        check_keys(r, "relabel", {"prob_threshold"});
        cfg.prob_threshold = get_or<double>(r, "prob_threshold", cfg.prob_threshold, "relabel");
    }
    if (!(cfg.prob_threshold > 0.0 && cfg.prob_threshold < 1.0))
        throw ConfigError("relabel.prob_threshold must lie in (0, 1)");

    if (!j.contains("output")) throw ConfigError("config is missing \"output\"");
    const auto& o = j.at("output");
    check_keys(o, "output", {"dir"});
    if (!o.contains("dir")) throw ConfigError("config is missing \"output.dir\"");
    cfg.output_dir = get_or<std::string>(o, "dir", "", "output");
    if (cfg.output_dir.empty()) throw ConfigError("output.dir must be non-empty");

    cfg.workers = get_or<int>(j, "workers", cfg.workers, "");
    if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_pipeline_config(j);
}

// Canonical form used for hashing; excludes output.dir so the same run in
// two directories produces byte-identical artifacts.
inline nlohmann::json canonical_config(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["dataset"] = {{"train", cfg.train_path}, {"test", cfg.test_path}, {"format", cfg.dataset_format}};
    j["seed"] = cfg.seed;
    j["classifier"] = {{"epochs", cfg.classifier.epochs},       {"batch_size", cfg.classifier.batch_size},
                       {"learning_rate", cfg.classifier.learning_rate}, {"d", cfg.classifier.d},
                       {"h", cfg.classifier.h},                 {"l2", cfg.classifier.l2}};
    j["ig"] = {{"steps", cfg.ig_steps}};
    j["mask"] = {{"strategy", to_string(cfg.mask_strategy)}};
    j["mask_token"] = cfg.mask_token;
    j["prompt"] = {{"mode", to_string(cfg.prompt_mode)},
                   {"templates", cfg.templates_path},
                   {"n_per_template", cfg.n_per_template},
                   {"max_words_per_mask", cfg.max_words_per_mask}};
    j["lexicon"] = cfg.lexicon_path;
    j["backend"] = {{"kind", cfg.backend_kind},
                    {"base_url", cfg.backend_base_url},
                    {"timeout_secs", cfg.backend_timeout_secs},
                    {"max_in_flight", cfg.backend_max_in_flight}};
    j["relabel"] = {{"prob_threshold", cfg.prob_threshold}};
    j["workers"] = cfg.workers;
    return j;
}

struct AugmentOptions {
    bool best_only = false;
    bool verbose = false;
    // Stop after this stage ("train" or "attribute"); empty runs everything.
    std::string stop_after;
};

inline std::string config_hash(const PipelineConfig& cfg) {
    return to_hex64(fnv1a64(canonical_config(cfg).dump()));
}

inline Dataset load_dataset_file(const std::string& path, const std::string& format) {
    return format == "semeval_xml" ? load_semeval_xml(path) : load_jsonl(path);
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct StageRecord {
    std::string file;  // artifact name relative to the run dir
    std::string crc;   // CRC-32 of the artifact, hex

    bool operator==(const StageRecord&) const = default;
};

struct Manifest {
    std::string config_hash;
    std::string input_crc;   // CRC-32 of the training dataset file
    bool best_only = false;  // affects the relabel and merge stages only
    std::map<std::string, StageRecord> stages;
    std::map<std::string, std::int64_t> counts;
};

inline nlohmann::json to_json(const Manifest& m) {
    nlohmann::json j;
    j["config_hash"] = m.config_hash;
    j["input_crc"] = m.input_crc;
    j["best_only"] = m.best_only;
    j["stages"] = nlohmann::json::object();
    for (const auto& [name, rec] : m.stages) j["stages"][name] = {{"file", rec.file}, {"crc", rec.crc}};
    j["counts"] = m.counts;
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.input_crc = j.at("input_crc").get<std::string>();
    m.best_only = j.value("best_only", false);
    for (const auto& [name, rec] : j.at("stages").items())
        m.stages[name] = {rec.at("file").get<std::string>(), rec.at("crc").get<std::string>()};
    if (j.contains("counts"))
        m.counts = j.at("counts").get<std::map<std::string, std::int64_t>>();
    return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path.string());
    out << to_json(m).dump(2) << "\n";
}

inline std::optional<Manifest> try_load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        nlohmann::json j;
        in >> j;
        return manifest_from_json(j);
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Augmentation run
// ---------------------------------------------------------------------------

struct AugmentResult {
    Manifest manifest;
    std::filesystem::path dir;
};

namespace detail {

inline constexpr const char* kCheckpointFile = "checkpoint.cfaug";
inline constexpr const char* kAttributionsFile = "attributions.jsonl";
inline constexpr const char* kCorruptedFile = "corrupted.jsonl";
inline constexpr const char* kCandidatesFile = "candidates.jsonl";
inline constexpr const char* kAugmentedFile = "augmented.jsonl";
inline constexpr const char* kMergedFile = "merged.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";

struct AttrRecord {
    std::string id;
    Vec scores;
    double gap = 0.0;
};

struct StageContext {
    std::filesystem::path dir;
    const std::optional<Manifest>* prev;
    Manifest* fresh;
    bool chain_ok = true;
    bool verbose = false;

    // A stage may be skipped when every stage before it was skipped and
    // its artifact still matches the previous manifest. Stages whose output
    // depends on run options pass options_ok = false when those changed.
    bool reuse(const std::string& stage, const std::string& file, bool options_ok = true) {
        if (!chain_ok || !prev->has_value() || !options_ok) {
            chain_ok = false;
            return false;
        }
        auto it = (*prev)->stages.find(stage);
        if (it == (*prev)->stages.end() || it->second.file != file) {
            chain_ok = false;
            return false;
        }
        std::filesystem::path p = dir / file;
        if (!std::filesystem::exists(p) || to_hex32(crc32_file(p.string())) != it->second.crc) {
            chain_ok = false;
            return false;
        }
        return true;
    }

    void record(const std::string& stage, const std::string& file) {
        fresh->stages[stage] = {file, to_hex32(crc32_file((dir / file).string()))};
        save_manifest(*fresh, dir / kManifestFile);
    }

    void log(const std::string& msg) const {
        if (verbose) std::cerr << "[cfaug] " << msg << "\n";
    }
};

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open artifact: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write artifact: " + path.string());
    for (const std::string& l : lines) out << l << "\n";
    if (!out) throw Error("failed writing artifact: " + path.string());
}

inline std::vector<Polarity> targets_for(PromptMode mode, Polarity gold) {
    if (mode == PromptMode::LabelPreserve) return {gold};
    std::vector<Polarity> out;
    for (Polarity p : kAllPolarities)
        if (p != gold) out.push_back(p);
    return out;
}

inline std::unique_ptr<InfillBackend> make_backend(const PipelineConfig& cfg) {
    if (cfg.backend_kind == "remote")
        return std::make_unique<RemoteBackend>(cfg.backend_base_url, cfg.backend_timeout_secs,
                                               cfg.backend_max_in_flight);
    Lexicon lex = cfg.lexicon_path.empty() ? builtin_lexicon() : load_lexicon(cfg.lexicon_path);
    return std::make_unique<LexiconBackend>(std::move(lex));
}

inline std::vector<PromptTemplate> load_config_templates(const PipelineConfig& cfg) {
    return cfg.templates_path.empty() ? builtin_templates() : load_templates(cfg.templates_path);
}

}  // namespace detail

// Runs the full augmentation pipeline: train, attribute, corrupt,
// generate, relabel, merge. Every stage reads its inputs back from the
// previous stage's artifact file, so a resumed run and a fresh run write
// byte-identical outputs. Stages are skipped when the manifest in the
// output dir matches the config and their artifacts are intact.
inline AugmentResult run_augment(const PipelineConfig& cfg, const AugmentOptions& opts = {}) {
    namespace fs = std::filesystem;
    using namespace detail;
    fs::path dir(cfg.output_dir);
    fs::create_directories(dir);

    Dataset ds = load_dataset_file(cfg.train_path, cfg.dataset_format);
    if (ds.samples.empty()) throw Error("training dataset is empty: " + cfg.train_path);
    const size_t n = ds.samples.size();
    {
        std::set<std::string> ids;
        for (const Sample& s : ds.samples)
            if (!ids.insert(s.id).second)
                throw Error("duplicate sample id in training corpus: " + s.id);
    }

    Manifest man;
    man.config_hash = config_hash(cfg);
    man.input_crc = to_hex32(crc32_file(cfg.train_path));
    man.best_only = opts.best_only;

    std::optional<Manifest> prev = try_load_manifest(dir / kManifestFile);
    if (prev && (prev->config_hash != man.config_hash || prev->input_crc != man.input_crc)) prev.reset();
    const bool options_match = prev && prev->best_only == opts.best_only;

    StageContext ctx;
    ctx.dir = dir;
    ctx.prev = &prev;
    ctx.fresh = &man;
    ctx.verbose = opts.verbose;

    // --- stage: train ------------------------------------------------------
    if (!ctx.reuse("train", kCheckpointFile)) {
        ctx.log("training base classifier");
        Vocab vocab = build_vocab(ds);
        TrainConfig tc = cfg.classifier;
        tc.seed = cfg.seed;
        TrainResult tr = train(ds, vocab, tc);
        save_checkpoint((dir / kCheckpointFile).string(), tr.params, vocab, tc, tr.loss_history.back());
    } else {
        ctx.log("reusing checkpoint");
    }
    ctx.record("train", kCheckpointFile);
    if (opts.stop_after == "train") {
        man.counts["sources"] = static_cast<std::int64_t>(n);
        save_manifest(man, dir / kManifestFile);
        return {man, dir};
    }
    Checkpoint ck = load_checkpoint((dir / kCheckpointFile).string());

    std::vector<EncodedSample> encoded;
    encoded.reserve(n);
    for (const Sample& s : ds.samples) encoded.push_back(encode(s, ck.vocab));

    // --- stage: attribute ---------------------------------------------------
    if (!ctx.reuse("attribute", kAttributionsFile)) {
        ctx.log("computing attributions");
        std::vector<std::string> lines(n);
        IgConfig ig{cfg.ig_steps};
        parallel_for(n, cfg.workers, [&](size_t i) {
            const Sample& s = ds.samples[i];
            EmbeddedInput in = embed(ck.params, encoded[i]);
            EmbeddedInput base = make_baseline(ck.params, in);
            AttributionResult res = integrated_gradients(ck.params, in, base, code(s.label), ig);
            nlohmann::json j;
            j["id"] = s.id;
            j["tokens"] = s.tokens;
            j["target"] = to_string(s.label);
            j["scores"] = res.token_scores;
            j["completeness_gap"] = res.completeness_gap;
            lines[i] = j.dump();
        });
        write_lines(dir / kAttributionsFile, lines);
    } else {
        ctx.log("reusing attributions");
    }
    ctx.record("attribute", kAttributionsFile);
    if (opts.stop_after == "attribute") {
        man.counts["sources"] = static_cast<std::int64_t>(n);
        save_manifest(man, dir / kManifestFile);
        return {man, dir};
    }

    std::vector<AttrRecord> attrs;
    attrs.reserve(n);
    for (const std::string& line : read_lines(dir / kAttributionsFile)) {
        nlohmann::json j = nlohmann::json::parse(line);
        AttrRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.scores = j.at("scores").get<Vec>();
        rec.gap = j.at("completeness_gap").get<double>();
        attrs.push_back(std::move(rec));
    }
    if (attrs.size() != n) throw Error("attributions artifact does not match the dataset");

    // --- stage: corrupt ------------------------------------------------------
    if (!ctx.reuse("corrupt", kCorruptedFile)) {
        ctx.log("masking opinion spans");
        std::vector<std::string> lines(n);
        for (size_t i = 0; i < n; ++i) {
            const Sample& s = ds.samples[i];
            CorruptedSample c = mask_tokens(s.id, s.tokens, encoded[i].aspect_positions, attrs[i].scores,
                                            cfg.mask_strategy, cfg.seed);
            nlohmann::json j;
            j["id"] = c.sample_id;
            j["k"] = c.k;
            j["strategy"] = to_string(c.strategy);
            nlohmann::json spans = nlohmann::json::array();
            for (const MaskSpan& sp : c.spans) spans.push_back({sp.begin, sp.end});
            j["spans"] = spans;
            nlohmann::json masked = nlohmann::json::array();
            for (const MaskSpan& sp : c.spans)
                for (int t = sp.begin; t < sp.end; ++t) masked.push_back(c.tokens[static_cast<size_t>(t)]);
            j["masked"] = masked;
            j["rendered"] = render(c, cfg.mask_token);
            j["all_aspect"] = c.all_aspect;
            lines[i] = j.dump();
        }
        write_lines(dir / kCorruptedFile, lines);
    } else {
        ctx.log("reusing corrupted spans");
    }
    ctx.record("corrupt", kCorruptedFile);

    std::vector<CorruptedSample> corrupted;
    corrupted.reserve(n);
    {
        std::vector<std::string> lines = read_lines(dir / kCorruptedFile);
        if (lines.size() != n) throw Error("corrupted artifact does not match the dataset");
        for (size_t i = 0; i < n; ++i) {
            nlohmann::json j = nlohmann::json::parse(lines[i]);
            CorruptedSample c;
            c.sample_id = j.at("id").get<std::string>();
            c.tokens = ds.samples[i].tokens;
            c.k = j.at("k").get<int>();
            c.strategy = parse_mask_strategy(j.at("strategy").get<std::string>());
            for (const auto& sp : j.at("spans")) c.spans.push_back({sp.at(0).get<int>(), sp.at(1).get<int>()});
            c.all_aspect = j.at("all_aspect").get<bool>();
            corrupted.push_back(std::move(c));
        }
    }

    // --- stage: generate ------------------------------------------------------
    std::vector<PromptTemplate> templates = load_config_templates(cfg);
    {
        std::set<Polarity> needed;
        for (const Sample& s : ds.samples)
            for (Polarity t : targets_for(cfg.prompt_mode, s.label)) needed.insert(t);
        for (Polarity t : needed)
            if (templates_for(templates, t).empty())
                throw ConfigError("no prompt template for target polarity \"" + to_string(t) + "\"");
    }

    if (!ctx.reuse("generate", kCandidatesFile)) {
        ctx.log("generating candidates via " + cfg.backend_kind + " backend");
        std::unique_ptr<InfillBackend> backend = make_backend(cfg);
        std::vector<std::vector<std::string>> per_sample(n);
        parallel_for(n, cfg.workers, [&](size_t i) {
            const Sample& s = ds.samples[i];
            if (corrupted[i].spans.empty()) return;
            for (Polarity target : targets_for(cfg.prompt_mode, s.label)) {
                GenerationOutcome out =
                    generate_candidates(s.id, corrupted[i], target, templates_for(templates, target), *backend,
                                        cfg.n_per_template, cfg.mask_token, cfg.max_words_per_mask, cfg.seed);
                for (const GenerationCandidate& c : out.candidates) {
                    nlohmann::json j;
                    j["source_id"] = c.source_id;
                    j["target"] = to_string(c.target);
                    j["prompt_id"] = c.prompt_id;
                    j["rep"] = c.repeat;
                    j["text"] = c.text;
                    j["backend"] = c.backend;
                    per_sample[i].push_back(j.dump());
                }
                for (const DiscardRecord& d : out.discards) {
                    nlohmann::json j;
                    j["source_id"] = d.source_id;
                    j["target"] = to_string(d.target);
                    j["prompt_id"] = d.prompt_id;
                    j["rep"] = d.repeat;
                    j["discarded"] = true;
                    j["reason"] = d.reason;
                    per_sample[i].push_back(j.dump());
                }
            }
        });
        std::vector<std::string> lines;
        for (auto& chunk : per_sample)
            for (auto& l : chunk) lines.push_back(std::move(l));
        write_lines(dir / kCandidatesFile, lines);
    } else {
        ctx.log("reusing candidates");
    }
    ctx.record("generate", kCandidatesFile);

    std::map<std::pair<std::string, int>, std::vector<GenerationCandidate>> candidate_groups;
    std::int64_t candidate_count = 0, strip_discards = 0;
    for (const std::string& line : read_lines(dir / kCandidatesFile)) {
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.value("discarded", false)) {
            ++strip_discards;
            continue;
        }
        GenerationCandidate c;
        c.source_id = j.at("source_id").get<std::string>();
        c.target = parse_polarity(j.at("target").get<std::string>());
        c.prompt_id = j.at("prompt_id").get<std::string>();
        c.repeat = j.at("rep").get<int>();
        c.text = j.at("text").get<std::string>();
        c.backend = j.at("backend").get<std::string>();
        candidate_groups[{c.source_id, code(c.target)}].push_back(c);
        ++candidate_count;
    }

    // --- stage: relabel ------------------------------------------------------
    std::int64_t excluded = 0;
    bool relabel_ran = false;
    if (!ctx.reuse("relabel", kAugmentedFile, options_match)) {
        ctx.log("scoring candidates and assigning labels");
        relabel_ran = true;
        struct Pick {
            ScoredCandidate scored;
            RelabelDecision decision;
        };
        std::vector<std::string> lines;
        std::vector<std::vector<Pick>> picks(n);
        std::vector<std::int64_t> excluded_per(n, 0);
        parallel_for(n, cfg.workers, [&](size_t i) {
            const Sample& s = ds.samples[i];
            std::array<double, 3> src_probs = forward(ck.params, embed(ck.params, encoded[i]));
            for (Polarity target : targets_for(cfg.prompt_mode, s.label)) {
                auto it = candidate_groups.find({s.id, code(target)});
                if (it == candidate_groups.end()) continue;
                CandidateSelection sel =
                    select_candidate(ck.params, ck.vocab, s, it->second, src_probs, target);
                excluded_per[i] += sel.excluded;
                if (!sel.chosen) continue;
                RelabelDecision d = assign_label(sel.chosen->probs, target, cfg.prob_threshold);
                picks[i].push_back({std::move(*sel.chosen), d});
            }
        });
        for (size_t i = 0; i < n; ++i) {
            excluded += excluded_per[i];
            std::vector<Pick>& sample_picks = picks[i];
            if (sample_picks.empty()) continue;
            size_t keep_from = 0, keep_to = sample_picks.size();
            if (opts.best_only) {
                size_t best = 0;
                for (size_t k = 1; k < sample_picks.size(); ++k)
                    if (sample_picks[k].scored.fluctuation > sample_picks[best].scored.fluctuation) best = k;
                keep_from = best;
                keep_to = best + 1;
            }
            for (size_t k = keep_from; k < keep_to; ++k) {
                const Pick& pick = sample_picks[k];
                const Sample& as = pick.scored.as_sample;
                const AspectSpan& a = as.aspect();
                nlohmann::json j;
                j["id"] = "aug-" + ds.samples[i].id + "-" + to_string(pick.scored.candidate.target);
                j["text"] = as.text;
                j["aspect"] = as.text.substr(static_cast<size_t>(a.char_begin),
                                             static_cast<size_t>(a.char_end - a.char_begin));
                j["from"] = a.char_begin;
                j["to"] = a.char_end;
                j["polarity"] = to_string(pick.decision.label);
                j["provenance"] = {
                    {"source_id", ds.samples[i].id},
                    {"target", to_string(pick.scored.candidate.target)},
                    {"prompt_id", pick.scored.candidate.prompt_id},
                    {"prob_shift", pick.scored.fluctuation},
                    {"probs", pick.scored.probs},
                    {"rule", to_string(pick.decision.rule)},
                    {"backend", pick.scored.candidate.backend},
                };
                lines.push_back(j.dump());
            }
        }
        write_lines(dir / kAugmentedFile, lines);
    } else {
        ctx.log("reusing augmented samples");
    }
    ctx.record("relabel", kAugmentedFile);

    std::vector<std::string> augmented_lines = read_lines(dir / kAugmentedFile);
    std::int64_t kept_target = 0, overridden = 0;
    for (const std::string& line : augmented_lines) {
        nlohmann::json j = nlohmann::json::parse(line);
        RelabelRule rule = parse_relabel_rule(j.at("provenance").at("rule").get<std::string>());
        if (rule == RelabelRule::KeptTarget)
            ++kept_target;
        else
            ++overridden;
    }
    if (!relabel_ran && prev) {
        // the stage was skipped; its aspect-mismatch count is only known
        // from the previous run
        auto it = prev->counts.find("discards");
        if (it != prev->counts.end()) excluded = it->second - strip_discards;
    }

    // --- stage: merge ------------------------------------------------------
    if (!ctx.reuse("merge", kMergedFile)) {
        ctx.log("merging original and augmented corpora");
        std::vector<std::string> lines;
        lines.reserve(n + augmented_lines.size());
        for (const Sample& s : ds.samples) lines.push_back(to_json(s).dump());
        for (const std::string& l : augmented_lines) lines.push_back(l);
        write_lines(dir / kMergedFile, lines);
    } else {
        ctx.log("reusing merged corpus");
    }
    ctx.record("merge", kMergedFile);

    std::int64_t corrupted_count = 0;
    for (const CorruptedSample& c : corrupted)
        if (!c.spans.empty()) ++corrupted_count;

    man.counts["sources"] = static_cast<std::int64_t>(n);
    man.counts["corrupted"] = corrupted_count;
    man.counts["candidates"] = candidate_count;
    man.counts["discards"] = strip_discards + excluded;
    man.counts["augmented"] = static_cast<std::int64_t>(augmented_lines.size());
    man.counts["kept_target"] = kept_target;
    man.counts["overridden"] = overridden;
    save_manifest(man, dir / kManifestFile);

    return {man, dir};
}

// ---------------------------------------------------------------------------
// Evaluation command
// ---------------------------------------------------------------------------

struct EvalOutcome {
    EvalReport report;
    std::filesystem::path json_path;
    std::filesystem::path table_path;
};

inline std::vector<std::uint64_t> default_eval_seeds() { return {1, 2, 3}; }

// Trains on the original and the merged corpus over the default seeds and
// reports mean metrics on the held-out test set.
inline EvalOutcome run_eval_command(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.test_path.empty()) throw ConfigError("dataset.test is required for evaluation");
    fs::path dir(cfg.output_dir);
    fs::path merged = dir / detail::kMergedFile;
    if (!fs::exists(merged))
        throw Error("augmented corpus not found (run augment first): " + merged.string());
    Dataset original = load_dataset_file(cfg.train_path, cfg.dataset_format);
    Dataset augmented = load_jsonl(merged.string());
    Dataset test = load_dataset_file(cfg.test_path, cfg.dataset_format);

    std::vector<std::pair<std::string, Dataset>> corpora;
    corpora.emplace_back("original", std::move(original));
    corpora.emplace_back("augmented", std::move(augmented));
    EvalOutcome out;
    out.report = run_eval(corpora, test, default_eval_seeds(), cfg.classifier);
    fs::create_directories(dir);
    out.json_path = dir / "metrics.json";
    out.table_path = dir / "metrics.txt";
    std::ofstream js(out.json_path, std::ios::binary);
    js << to_json(out.report).dump(2) << "\n";
    std::ofstream tb(out.table_path, std::ios::binary);
    tb << to_table(out.report);
    return out;
}

// ---------------------------------------------------------------------------
// Ablation: all four (mask strategy x prompt mode) combinations
// ---------------------------------------------------------------------------

struct AblationEntry {
    std::string name;
    MaskStrategy strategy = MaskStrategy::IntegratedGradients;
    PromptMode mode = PromptMode::Counterfactual;
    Manifest manifest;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    double pct_target_equals_gold = 0.0;  // over augmented samples
};

struct AblationReport {
    double baseline_accuracy = 0.0;
    double baseline_macro_f1 = 0.0;
    std::vector<AblationEntry> entries;
    std::filesystem::path table_path;
};

// Runs augment+eval for every strategy/mode pair under
// output.dir/ablation/<name> and writes one comparison table.
inline AblationReport run_ablation(const PipelineConfig& cfg, const AugmentOptions& opts = {}) {
    namespace fs = std::filesystem;
    if (cfg.test_path.empty()) throw ConfigError("dataset.test is required for evaluation");
    Dataset original = load_dataset_file(cfg.train_path, cfg.dataset_format);
    Dataset test = load_dataset_file(cfg.test_path, cfg.dataset_format);
    std::map<std::string, Polarity> gold_by_id;
    for (const Sample& s : original.samples) gold_by_id[s.id] = s.label;

    AblationReport rep;
    {
        std::vector<std::pair<std::string, Dataset>> base;
        base.emplace_back("baseline", original);
        EvalReport r = run_eval(base, test, default_eval_seeds(), cfg.classifier);
        rep.baseline_accuracy = r.summaries[0].mean_accuracy;
        rep.baseline_macro_f1 = r.summaries[0].mean_macro_f1;
    }

    const std::array<std::pair<MaskStrategy, PromptMode>, 4> combos = {{
        {MaskStrategy::IntegratedGradients, PromptMode::Counterfactual},
        {MaskStrategy::IntegratedGradients, PromptMode::LabelPreserve},
        {MaskStrategy::Random, PromptMode::Counterfactual},
        {MaskStrategy::Random, PromptMode::LabelPreserve},
    }};
    for (const auto& [strategy, mode] : combos) {
        AblationEntry entry;
        entry.strategy = strategy;
        entry.mode = mode;
        entry.name = (strategy == MaskStrategy::IntegratedGradients ? std::string("ig") : std::string("random")) +
                     "_" + to_string(mode);
        PipelineConfig sub = cfg;
        sub.mask_strategy = strategy;
        sub.prompt_mode = mode;
        sub.output_dir = (fs::path(cfg.output_dir) / "ablation" / entry.name).string();
        AugmentResult run = run_augment(sub, opts);
        entry.manifest = run.manifest;

        int total = 0, equal = 0;
        for (const std::string& line : detail::read_lines(run.dir / detail::kAugmentedFile)) {
            nlohmann::json j = nlohmann::json::parse(line);
            std::string src = j.at("provenance").at("source_id").get<std::string>();
            Polarity target = parse_polarity(j.at("provenance").at("target").get<std::string>());
            ++total;
            auto it = gold_by_id.find(src);
            if (it != gold_by_id.end() && it->second == target) ++equal;
        }
        entry.pct_target_equals_gold = total > 0 ? 100.0 * equal / total : 0.0;

        Dataset merged = load_jsonl((run.dir / detail::kMergedFile).string());
        std::vector<std::pair<std::string, Dataset>> corpora;
        corpora.emplace_back(entry.name, std::move(merged));
        EvalReport r = run_eval(corpora, test, default_eval_seeds(), cfg.classifier);
        entry.mean_accuracy = r.summaries[0].mean_accuracy;
        entry.mean_macro_f1 = r.summaries[0].mean_macro_f1;
        rep.entries.push_back(std::move(entry));
    }

    std::ostringstream table;
    table << std::left << std::setw(26) << "config" << std::right << std::setw(10) << "mean_acc"
          << std::setw(12) << "mean_f1" << std::setw(12) << "augmented" << std::setw(14) << "target=gold%"
          << "\n";
    table << std::string(74, '-') << "\n";
    table << std::fixed << std::setprecision(4);
    table << std::left << std::setw(26) << "baseline" << std::right << std::setw(10) << rep.baseline_accuracy
          << std::setw(12) << rep.baseline_macro_f1 << std::setw(12) << "-" << std::setw(14) << "-" << "\n";
    for (const AblationEntry& e : rep.entries) {
        auto it = e.manifest.counts.find("augmented");
        std::int64_t aug = it == e.manifest.counts.end() ? 0 : it->second;
        table << std::left << std::setw(26) << e.name << std::right << std::setw(10) << e.mean_accuracy
              << std::setw(12) << e.mean_macro_f1 << std::setw(12) << aug << std::setw(14)
              << e.pct_target_equals_gold << "\n";
    }
    fs::path table_path = fs::path(cfg.output_dir) / "ablation.txt";
    fs::create_directories(cfg.output_dir);
    std::ofstream out(table_path, std::ios::binary);
    out << table.str();
    rep.table_path = table_path;
    return rep;
}

}  // namespace cfaug
