// Command-line driver: normalize | portrait | return-map | hunt | check.
#include "cli_impl.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"0^2 i omega resonance toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int jobs = 1;
    unsigned long seed = 0;
    app.add_option("--config", config_path, "path to the run configuration (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    app.add_option("--jobs", jobs, "worker threads for parameter sweeps");
    app.add_option("--seed", seed, "seed recorded in the manifest; fixed seed + fixed config "
                                   "reproduces outputs byte for byte");

    for (const char* name : {"normalize", "portrait", "return-map", "hunt", "check"})
        app.add_subcommand(name)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    return oiw::cli::run_cli(command, config_path, out_dir, jobs, seed, std::cout);
}
