// Command-line entry point: simulate synthetic scenes, preprocess raw
// streams, train forecasters, evaluate against the reference baselines,
// sweep the image-loss weight and merge reports.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "heliocast/error.hpp"
#include "heliocast/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"solar nowcasting toolkit"};
    app.require_subcommand(1);

    std::string config, out;
    std::optional<std::uint64_t> seed;
    int jobs = 1;

    auto add_common = [&](CLI::App* cmd, bool with_jobs = false) {
        cmd->add_option("--config", config, "configuration file (JSON)")->required();
        cmd->add_option("--out", out, "output directory")->required();
        cmd->add_option("--seed", seed, "override the configured seed");
        if (with_jobs) cmd->add_option("--jobs", jobs, "parallel worker threads");
        return cmd;
    };

    CLI::App* c_sim = add_common(app.add_subcommand("simulate", "render a synthetic scene"));
    CLI::App* c_pre =
        add_common(app.add_subcommand("preprocess", "build training-ready frame stores"));
    CLI::App* c_train = add_common(app.add_subcommand("train", "train forecast models"));
    CLI::App* c_eval =
        add_common(app.add_subcommand("evaluate", "score a checkpoint and the baselines"));
    CLI::App* c_sweep = add_common(
        app.add_subcommand("sweep-alpha", "train across image-loss weights"), true);
    CLI::App* c_rep = add_common(app.add_subcommand("report", "merge metric tables"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        // bad command line is a configuration error like any other
        app.exit(e);
        return 2;
    }

    try {
        if (c_sim->parsed()) {
            heliocast::cmd_simulate(config, out, seed);
        } else if (c_pre->parsed()) {
            heliocast::cmd_preprocess(config, out);
        } else if (c_train->parsed()) {
            heliocast::cmd_train(config, out, seed);
        } else if (c_eval->parsed()) {
            heliocast::cmd_evaluate(config, out);
        } else if (c_sweep->parsed()) {
            heliocast::cmd_sweep_alpha(config, out, jobs, seed);
        } else if (c_rep->parsed()) {
            heliocast::cmd_report(config, out);
        }
    } catch (const heliocast::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const heliocast::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const heliocast::DomainError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const heliocast::TrainingFault& e) {
        std::cerr << "training fault: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
