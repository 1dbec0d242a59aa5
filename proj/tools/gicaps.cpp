#include "gicaps/cli/commands.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

using namespace gicaps;

int main(int argc, char** argv) {
    CLI::App app{"gicaps: geometric resampling for imbalanced classification"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;

    using Command = std::function<int(const cli::RunConfig&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands{
        {"generate", "Draw a dataset from a preset or explicit Gaussian blobs", cli::cmd_generate},
        {"resample", "Resample one dataset with one method", cli::cmd_resample},
        {"benchmark", "Cross-validate methods on datasets with a GMR classifier", cli::cmd_benchmark},
        {"margin", "PCA nearest-pair margin between two classes after resampling", cli::cmd_margin},
        {"dump-points", "Write original, synthetic and rejected points for plotting", cli::cmd_dump_points},
    };
    std::map<CLI::App*, Command> dispatch;
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON run configuration (schema 1)")->required();
        sub->add_option("--seed", seed, "Run seed (overrides the config)");
        sub->add_option("--out", out, "Output directory (overrides the config)");
        sub->add_option("--threads", threads, "Worker threads for cross-validation (overrides the config)");
        dispatch[sub] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const auto cfg = cli::parse_config(cli::read_config_file(config_path), {seed, out, threads});
        for (auto& [sub, fn] : dispatch)
            if (sub->parsed()) return fn(cfg);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
