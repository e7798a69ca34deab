// qimb: command-line front end for the imbalanced-classification toolkit.
//
//   qimb <generate|train|tune-threshold|evaluate|compare>
//        [--config FILE] [--set key=value]... [--seed N] --out DIR [--verbose]
//
// Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numerical failure.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qimb/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "experiment config file");
    cmd->add_option("--set", o.sets, "override a config key (section.key=value), repeatable");
    cmd->add_option("--seed", o.seed, "seed override");
    cmd->add_option("--out", o.out, "output directory")->required();
    cmd->add_flag("--verbose", o.verbose, "log training progress to stderr");
}

qimb::CommandContext make_context(const Options& o) {
    qimb::CommandContext ctx;
    if (!o.config.empty()) ctx.config = qimb::Config::load(o.config);
    for (const auto& kv : o.sets) ctx.config.apply_override(kv);
    if (o.seed) ctx.config.set("seed", std::to_string(*o.seed));
    ctx.out = o.out;
    ctx.log = o.verbose ? &std::cerr : nullptr;
    ctx.console = &std::cout;
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward-shaped dueling double deep Q-learning for imbalanced classification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", qimb::kVersion);

    Options o;
    CLI::App* gen = app.add_subcommand("generate", "synthesize or split a dataset");
    CLI::App* train = app.add_subcommand("train", "train q-imb, ddqn or an mlp baseline");
    CLI::App* tune = app.add_subcommand("tune-threshold", "tune a decision threshold to a target sensitivity");
    CLI::App* eval = app.add_subcommand("evaluate", "score a model on test data and write metrics");
    CLI::App* cmp = app.add_subcommand("compare", "compare two evaluation directories");
    for (CLI::App* c : {gen, train, tune, eval, cmp}) add_common(c, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const qimb::CommandContext ctx = make_context(o);
        if (gen->parsed()) qimb::cmd_generate(ctx);
        else if (train->parsed()) qimb::cmd_train(ctx);
        else if (tune->parsed()) qimb::cmd_tune_threshold(ctx);
        else if (eval->parsed()) qimb::cmd_evaluate(ctx);
        else if (cmp->parsed()) qimb::cmd_compare(ctx);
        return 0;
    } catch (const qimb::Error& e) {
        std::cerr << "qimb: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "qimb: internal error: " << e.what() << '\n';
        return 1;
    }
}
