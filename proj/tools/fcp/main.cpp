#include <CLI11.hpp>

#include <iostream>

#include "fcp/app.hpp"

int main(int argc, char** argv) {
    using namespace fcp::cli;
    CLI::App app{"Folded concave penalized estimation via local linear approximation"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    CliInvocation inv;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> scale;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", inv.config_path, "INI configuration file")->check(CLI::ExistingFile);
        sub->add_option("--from-manifest", inv.from_manifest, "reuse the resolved configuration of a manifest")
            ->check(CLI::ExistingFile);
        sub->add_option("--set", inv.overrides, "override a key, e.g. --set experiment.reps=10")
            ->type_name("SECTION.KEY=VALUE");
        sub->add_option("--out", inv.output_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "master seed (experiment.seed)");
        sub->add_option("--threads", threads, "worker threads; default: hardware concurrency")
            ->check(CLI::PositiveNumber);
        sub->add_option("--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    };

    CLI::App* fit = app.add_subcommand("fit", "fit one dataset at one lambda");
    common(fit);
    std::string data;
    fit->add_option("data", data, "dataset file (overrides fit.data)");

    CLI::App* sim = app.add_subcommand("simulate", "tuned Monte Carlo comparison of methods");
    common(sim);
    CLI::App* diag = app.add_subcommand("diagnose", "estimate the event probabilities at a fixed lambda");
    common(diag);
    CLI::App* rep = app.add_subcommand("reproduce", "run a table preset (" + preset_list() + ")");
    common(rep);
    rep->add_option("preset", inv.preset, "preset name");
    CLI::App* keys = app.add_subcommand("keys", "print every configuration key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kInputError;
    }
    if (keys->parsed()) {
        std::cout << config_reference();
        return kSuccess;
    }
    inv.subcommand = app.get_subcommands().front()->get_name();
    inv.seed = seed;
    inv.threads = threads;
    inv.scale = scale;
    if (!data.empty()) inv.overrides.push_back("fit.data=" + data);
    return run(inv);
}
