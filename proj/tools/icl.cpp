// Command-line runner for the linear-attention in-context learning
// experiments: theory curves, theory-vs-Monte-Carlo validation, figure/table
// reproduction, training and ad-hoc Monte Carlo evaluation.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "icl/cli.hpp"
#include "icl/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"In-context learning under fine-tuning: linear-attention experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> samples;
    std::string out = "out";
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--out", out, "Output directory for CSV files")->capture_default_str();
        sub->add_option("--samples", samples, "Monte Carlo samples per estimate (overrides the config)");
    };

    auto* theory = app.add_subcommand("theory", "Closed-form curves for Figures 1-3");
    add_common(theory);

    auto* validate = app.add_subcommand("validate", "Check closed forms against Monte Carlo");
    int settings = 20;
    int instances = 10;
    add_common(validate);
    validate->add_option("--settings", settings, "Random settings for the error check")->capture_default_str();
    validate->add_option("--instances", instances, "Random instances per moment identity")->capture_default_str();

    auto* reproduce = app.add_subcommand("reproduce", "Reproduce a figure or table");
    std::string figure;
    add_common(reproduce);
    reproduce->add_option("figure", figure, "1, 2, 3, 4, 5 or table1")->required();

    auto* train = app.add_subcommand("train", "Pretrain and fine-tune, then evaluate one regime");
    std::string regime = "value_zs";
    add_common(train);
    train->add_option("--regime", regime, "pretrain, full_zs, value_zs, value_zs_fs or qk_zs")->capture_default_str();

    auto* mc = app.add_subcommand("mc", "Monte Carlo test error of a parameter file vs the closed form");
    std::string params_path;
    add_common(mc);
    mc->add_option("--params", params_path, "Parameter JSON (default: m-shot pretraining optimum)");

    CLI11_PARSE(app, argc, argv);

    try {
        const icl::ExperimentConfig cfg = icl::load_config(config_path, seed, samples);
        if (*theory) return icl::cmd_theory(cfg, out, std::cout);
        if (*validate) return icl::cmd_validate(cfg, out, std::cout, settings, instances);
        if (*reproduce) return icl::cmd_reproduce(figure, cfg, out, std::cout);
        if (*train) return icl::cmd_train(regime, cfg, out, std::cout);
        if (*mc) return icl::cmd_mc(params_path, cfg, out, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
