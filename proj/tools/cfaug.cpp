// cfaug: counterfactual data augmentation for aspect-based sentiment.
// Exit codes: 0 success, 1 usage/config problems, 2 runtime failures.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cfaug/corpus.hpp"
#include "cfaug/eval.hpp"
#include "cfaug/pipeline.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool verbose = false;
};

cfaug::PipelineConfig require_config(const GlobalArgs& g) {
    if (g.config_path.empty())
        throw cfaug::ConfigError("this command needs --config <file>");
    cfaug::PipelineConfig cfg = cfaug::load_pipeline_config(g.config_path);
    if (g.seed_given) {
        cfg.seed = g.seed;
        cfg.classifier.seed = g.seed;
    }
    return cfg;
}

void print_stats(const std::string& name, const cfaug::CorpusStats& st) {
    std::cout << name << ": total=" << st.total
              << " positive=" << st.per_class[cfaug::code(cfaug::Polarity::Positive)]
              << " neutral=" << st.per_class[cfaug::code(cfaug::Polarity::Neutral)]
              << " negative=" << st.per_class[cfaug::code(cfaug::Polarity::Negative)]
              << " skipped_conflicts=" << st.skipped_conflicts << "\n";
}

void print_counts(const cfaug::Manifest& man) {
    for (const auto& [key, value] : man.counts) std::cout << key << "=" << value << " ";
    std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage counterfactual data augmentation for aspect-based sentiment analysis"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--config", g.config_path, "run configuration file (JSON)");
    auto* seed_opt = app.add_option("--seed", g.seed, "override the configured seed");
    app.add_flag("--verbose", g.verbose, "print stage progress to stderr");

    CLI::App* cmd_stats = app.add_subcommand("stats", "print class counts for the configured datasets");
    CLI::App* cmd_train = app.add_subcommand("train-base", "train the base classifier and write its checkpoint");
    CLI::App* cmd_attr = app.add_subcommand("attribute", "write per-token attributions for the training corpus");
    CLI::App* cmd_aug = app.add_subcommand("augment", "run the full augmentation pipeline");
    bool best_only = false;
    cmd_aug->add_flag("--best-only", best_only, "keep only the strongest augmented sample per source");
    CLI::App* cmd_eval = app.add_subcommand("eval", "compare classifiers trained on original vs merged corpora");
    bool ablation = false;
    cmd_eval->add_flag("--ablation", ablation, "run every mask-strategy/prompt-mode combination");
    CLI::App* cmd_synth = app.add_subcommand("synth", "write a synthetic corpus");
    int synth_n = 500;
    std::string synth_out;
    cmd_synth->add_option("--n", synth_n, "number of samples")->check(CLI::PositiveNumber);
    cmd_synth->add_option("--out", synth_out, "output JSONL path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    g.seed_given = seed_opt->count() > 0;

    // Configuration problems are usage errors. synth runs without a config.
    cfaug::PipelineConfig cfg;
    bool have_cfg = false;
    if (!cmd_synth->parsed() || !g.config_path.empty()) {
        try {
            cfg = require_config(g);
            have_cfg = true;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }

    try {
        if (cmd_synth->parsed()) {
            std::uint64_t seed = g.seed_given ? g.seed : (have_cfg ? cfg.seed : 1);
            cfaug::Dataset ds = cfaug::generate_synthetic(synth_n, seed);
            cfaug::dump_jsonl(ds, synth_out);
            std::cout << "wrote " << ds.samples.size() << " samples to " << synth_out << "\n";
            return 0;
        }
        if (cmd_stats->parsed()) {
            cfaug::Dataset train = cfaug::load_dataset_file(cfg.train_path, cfg.dataset_format);
            print_stats("train", cfaug::stats(train));
            if (!cfg.test_path.empty()) {
                cfaug::Dataset test = cfaug::load_dataset_file(cfg.test_path, cfg.dataset_format);
                print_stats("test", cfaug::stats(test));
            }
            return 0;
        }
        if (cmd_train->parsed()) {
            cfaug::AugmentOptions opts;
            opts.verbose = g.verbose;
            opts.stop_after = "train";
            cfaug::AugmentResult res = cfaug::run_augment(cfg, opts);
            cfaug::Checkpoint ck = cfaug::load_checkpoint((res.dir / "checkpoint.cfaug").string());
            std::cout << "checkpoint: " << (res.dir / "checkpoint.cfaug").string()
                      << " final_loss=" << ck.final_loss << "\n";
            return 0;
        }
        if (cmd_attr->parsed()) {
            cfaug::AugmentOptions opts;
            opts.verbose = g.verbose;
            opts.stop_after = "attribute";
            cfaug::AugmentResult res = cfaug::run_augment(cfg, opts);
            std::cout << "attributions: " << (res.dir / "attributions.jsonl").string() << "\n";
            return 0;
        }
        if (cmd_aug->parsed()) {
            cfaug::AugmentOptions opts;
            opts.best_only = best_only;
            opts.verbose = g.verbose;
            cfaug::AugmentResult res = cfaug::run_augment(cfg, opts);
            std::cout << "augmented corpus: " << (res.dir / "merged.jsonl").string() << "\n";
            print_counts(res.manifest);
            return 0;
        }
        if (cmd_eval->parsed()) {
            if (ablation) {
                cfaug::AblationReport rep = cfaug::run_ablation(cfg);
                std::ifstream table(rep.table_path);
                std::cout << table.rdbuf();
                std::cout << "table: " << rep.table_path.string() << "\n";
            } else {
                cfaug::EvalOutcome out = cfaug::run_eval_command(cfg);
                std::cout << cfaug::to_table(out.report);
                std::cout << "metrics: " << out.json_path.string() << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << "error: no command\n";
    return 1;
}
