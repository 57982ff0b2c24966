#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "seg/harness.hpp"

namespace {

// exit codes: 0 success, 1 usage/config error, 2 runtime failure, 3 grid partial failure
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kPartial = 3;

seg::FullConfig load_config(const std::string& path, bool seed_set, std::uint64_t seed) {
    seg::FullConfig cfg = path.empty() ? seg::parse_config_text("") : seg::parse_config(path);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
    if (seed_set) {
        cfg.train.seed = seed;
        cfg.grid.seeds = {seed};
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"2D lesion segmentation engine: phantom data, UNet/UNet++ training, "
                 "loss comparison grids"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir = "out", params_path;
    bool force = false;
    int threads = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double threshold = 0.5;

    auto add_common = [&](CLI::App* cmd, bool with_data) {
        cmd->add_option("--config", config_path, "config file (key = value sections)");
        cmd->add_option("--out", out_dir, "output directory");
        if (with_data) cmd->add_option("--data", data_dir, "dataset directory")->required();
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; },
            "override config seeds");
    };

    auto* gen = app.add_subcommand("generate", "write a synthetic phantom dataset");
    add_common(gen, false);
    gen->add_flag("--force", force, "overwrite a nonempty output directory");

    auto* tr = app.add_subcommand("train", "train one (architecture, loss) pair");
    add_common(tr, true);

    auto* ev = app.add_subcommand("eval", "evaluate saved parameters on a dataset");
    ev->add_option("--params", params_path, "trained parameter file")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--out", out_dir, "optional output directory");
    ev->add_option("--threshold", threshold, "binarization threshold");

    auto* mx = app.add_subcommand("matrix", "run the architecture x loss x seed grid");
    add_common(mx, false);
    mx->add_option("--threads", threads, "parallel grid cells");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) {
            auto cfg = load_config(config_path, seed_set, seed);
            seg::cmd_generate(cfg, out_dir, force);
            std::cout << "wrote dataset to " << out_dir << "\n";
        } else if (tr->parsed()) {
            auto cfg = load_config(config_path, seed_set, seed);
            seg::cmd_train(cfg, data_dir, out_dir);
            std::cout << "wrote params and log to " << out_dir << "\n";
        } else if (ev->parsed()) {
            seg::cmd_eval(params_path, data_dir, threshold, std::cout);
        } else if (mx->parsed()) {
            auto cfg = load_config(config_path, seed_set, seed);
            auto result = seg::run_matrix(cfg, out_dir, threads, &std::cout);
            std::cout << "results written to " << out_dir << "/results.csv\n";
            if (result.any_failed) {
                std::cerr << "some grid cells failed\n";
                return kPartial;
            }
        } else if (gc->parsed()) {
            auto report = seg::run_gradcheck(std::cout);
            if (!report.ok()) {
                std::cerr << "gradient check FAILED\n";
                return kRuntime;
            }
            std::cout << "all gradient checks passed\n";
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
