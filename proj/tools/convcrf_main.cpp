#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "convcrf/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ConvCRF: truncated Gaussian CRF inference, training, and benchmarks"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset_dir, pred_dir;
    int jobs = 0;
    long long seed = -1;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        if (needs_config)
            cmd->add_option("--config", config_path, "run-config JSON")->required();
        cmd->add_option("--out", out_dir, "output directory (default: paths.out or ./out)");
        cmd->add_option("--jobs", jobs, "worker threads (CONVCRF_THREADS overrides)");
        cmd->add_option("--seed", seed, "override the config seeds");
    };

    CLI::App* synth = app.add_subcommand("synthesize", "generate a synthetic denoising dataset");
    add_common(synth);

    CLI::App* infer = app.add_subcommand("infer", "run CRF inference over a dataset");
    add_common(infer);
    infer->add_option("--dataset", dataset_dir, "dataset directory (default: paths.dataset)");

    CLI::App* train = app.add_subcommand("train", "fit the internal CRF parameters");
    add_common(train);
    train->add_option("--dataset", dataset_dir, "dataset directory (default: paths.dataset)");

    CLI::App* bench = app.add_subcommand("bench", "timing benchmark over sizes and filter sizes");
    add_common(bench);

    CLI::App* eval = app.add_subcommand("eval", "score a prediction directory against labels");
    eval->add_option("--config", config_path, "run-config JSON (optional, for paths)");
    eval->add_option("--out", out_dir, "output directory (default: paths.out or ./out)");
    eval->add_option("--pred", pred_dir, "prediction directory (default: paths.pred)");
    eval->add_option("--dataset", dataset_dir, "dataset directory (default: paths.dataset)");

    CLI11_PARSE(app, argc, argv);

    try {
        convcrf::RunConfig rc;
        if (!config_path.empty()) rc = convcrf::RunConfig::load(config_path);
        if (seed >= 0) {
            rc.noise.seed = static_cast<std::uint64_t>(seed);
            rc.train.seed = static_cast<std::uint64_t>(seed);
        }
        if (const char* env = std::getenv("CONVCRF_THREADS")) jobs = std::atoi(env);

        // command-line paths override the config's paths section
        if (dataset_dir.empty()) dataset_dir = rc.dataset_dir;
        if (pred_dir.empty()) pred_dir = rc.pred_dir;
        if (out_dir.empty()) out_dir = rc.out_dir.empty() ? "out" : rc.out_dir;

        auto require_path = [](const std::string& value, const char* what) {
            if (value.empty())
                throw convcrf::ConfigError(std::string(what) +
                                           " required (flag or config paths section)");
        };

        if (synth->parsed()) return convcrf::cmd_synthesize(rc, out_dir);
        if (infer->parsed() || train->parsed()) {
            require_path(dataset_dir, "--dataset");
            if (infer->parsed()) return convcrf::cmd_infer(rc, dataset_dir, out_dir, jobs);
            return convcrf::cmd_train(rc, dataset_dir, out_dir);
        }
        if (bench->parsed()) return convcrf::cmd_bench(rc, out_dir);
        if (eval->parsed()) {
            require_path(pred_dir, "--pred");
            require_path(dataset_dir, "--dataset");
            return convcrf::cmd_eval(pred_dir, dataset_dir, out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
