#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lvse/errors.hpp"
#include "lvse/experiment.hpp"

namespace ex = lvse::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic low-voltage state estimation experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, cells;
    std::optional<std::uint64_t> seed;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON experiment config (defaults when omitted)")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "sets both the data and the model seed");
    };
    auto* gen = app.add_subcommand("generate", "synthesize scenarios S1-S3 and their power-flow ground truth");
    auto* matrix = app.add_subcommand("run-matrix", "train and evaluate BNN and QR over scenarios x feature sets");
    auto* study = app.add_subcommand("uncertainty-study", "train on the first segment and track uncertainty afterwards");
    auto* report = app.add_subcommand("report", "write plot-ready CSVs from a completed run");
    for (auto* sub : {gen, matrix, study, report}) add_common(sub);
    matrix->add_option("--cells", cells, "cell filter, e.g. 'S3:FS2,qr'");

    CLI11_PARSE(app, argc, argv);

    try {
        auto config = config_path.empty() ? ex::ExperimentConfig{} : ex::load_config(config_path);
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (seed) config.data_seed = config.model_seed = *seed;
        std::cout << "config hash " << ex::config_hash(config) << ", output " << config.output_dir.string() << std::endl;

        if (gen->parsed()) {
            ex::cmd_generate(config);
        } else if (matrix->parsed()) {
            const auto ledger = ex::cmd_run_matrix(config, cells);
            const auto failed = static_cast<int>(ledger.cells.size()) - ledger.completed();
            std::cout << ledger.completed() << " cells completed, " << failed << " failed" << std::endl;
            if (failed > 0) return 2;
        } else if (study->parsed()) {
            const auto r = ex::cmd_uncertainty_study(config);
            std::cout << "mean PI half-widths (epistemic / aleatoric):\n"
                      << "  last training week " << r.last_training_week.epistemic_half << " / "
                      << r.last_training_week.aleatoric_half << "\n"
                      << "  validation         " << r.validation.epistemic_half << " / " << r.validation.aleatoric_half << "\n"
                      << "  forecast           " << r.forecast.epistemic_half << " / " << r.forecast.aleatoric_half << "\n";
        } else if (report->parsed()) {
            ex::cmd_report(config);
        }
    } catch (const lvse::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
