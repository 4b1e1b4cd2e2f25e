// Experiment runner: synthetic multilingual data, pretraining, continual
// adaptation strategies, decoding pipelines and metric reports.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "lingo/errors.hpp"
#include "lingo/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string seed;
    bool quick = false;
    bool asr_score_include_lid = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key = value configuration file");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "root seed (overrides config)");
    cmd->add_flag("--quick", args.quick, "reduced sizes for a fast desk-scale run");
    cmd->add_flag("--asr-score-include-lid", args.asr_score_include_lid,
                  "count the language-id token's log-probability into asr scores");
}

lingo::ExperimentConfig resolve(const CommonArgs& args) {
    lingo::KvConfig kv;
    if (!args.config_path.empty()) kv = lingo::KvConfig::parse_file(args.config_path);
    if (!args.seed.empty()) kv.set("seed", args.seed);
    if (!args.out_dir.empty()) kv.set("out", args.out_dir);
    if (args.quick) kv.set("quick", "true");
    if (args.asr_score_include_lid) kv.set("decode.asr_score_include_lid", "true");
    return lingo::ExperimentConfig::from_kv(kv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning workbench for multilingual transcription"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string strategy = "er";
    std::string method = "er-e";

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic corpora and vocabulary");
    add_common(gen, args);
    CLI::App* pre = app.add_subcommand("pretrain", "train the base model on the old languages");
    add_common(pre, args);
    CLI::App* adapt = app.add_subcommand("adapt", "adapt to the new languages sequentially");
    add_common(adapt, args);
    adapt->add_option("--strategy", strategy, "ft|er|avg|er-e|er-e-part|er-e-b")->required();
    CLI::App* dec = app.add_subcommand("decode", "decode the test splits with a trained method");
    add_common(dec, args);
    dec->add_option("--method,--strategy", method, "unadapted or a strategy name")->required();
    CLI::App* ev = app.add_subcommand("eval", "compute metrics from decode outputs");
    add_common(ev, args);
    CLI::App* rep = app.add_subcommand("reproduce", "run the full experiment end to end");
    add_common(rep, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const lingo::ExperimentConfig cfg = resolve(args);
        if (gen->parsed()) {
            lingo::run_gen_data(cfg);
        } else if (pre->parsed()) {
            lingo::run_pretrain(cfg);
        } else if (adapt->parsed()) {
            lingo::run_adapt(cfg, lingo::strategy_from_string(strategy));
        } else if (dec->parsed()) {
            lingo::run_decode(cfg, method);
        } else if (ev->parsed()) {
            lingo::run_eval(cfg);
        } else if (rep->parsed()) {
            lingo::run_reproduce(cfg);
        }
        return 0;
    } catch (const lingo::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const lingo::InvariantError& e) {
        std::fprintf(stderr, "invariant violation: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
