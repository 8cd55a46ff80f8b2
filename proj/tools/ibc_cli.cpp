// Command-line front end: check | identity | converge | regularity | bounds.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ibc/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Interior-boundary-condition Hamiltonians on momentum lattices"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    bool override_conditions = false;
    double theta_sign = 1.0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
        sub->add_option("--seed", seed, "random seed (overrides study.seed)");
        sub->add_option("--tol", tol, "identity tolerance (overrides study.tol)");
        sub->add_flag("--override-conditions", override_conditions, "run assembly even if the condition gate fails");
    };

    add_common(app.add_subcommand("check", "run the model condition checkers"));
    auto* identity = app.add_subcommand("identity", "compare direct and IBC assemblies");
    add_common(identity);
    identity->add_option("--theta-sign", theta_sign, "sign applied to the theta terms (negative control)")
        ->group("");
    add_common(app.add_subcommand("converge", "cutoff convergence study"));
    add_common(app.add_subcommand("regularity", "regularity diagnostic over a refinement ladder"));
    add_common(app.add_subcommand("bounds", "analytic inequality sweeps"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ibc::cli::kConfigError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    ibc::cli::RunConfig cfg;
    try {
        cfg = ibc::cli::load_config(config_path);
    } catch (const ibc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ibc::cli::kConfigError;
    }
    if (seed) cfg.study.seed = *seed;
    if (tol) cfg.study.tol = *tol;
    if (out_dir) cfg.output.directory = *out_dir;

    ibc::cli::RunContext ctx(cfg, command, cfg.output.directory, override_conditions);
    ctx.theta_sign = theta_sign;
    ctx.log = &std::cout;
    std::cout << command << " run " << ctx.run_id << " (config " << ctx.config_hash << ")\n";
    const int code = ibc::cli::run_command(ctx);
    std::cout << "exit " << code << ", outputs in " << ctx.out_dir.string() << "\n";
    return code;
}
