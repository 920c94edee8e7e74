/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kroma/cli/commands.hpp"
#include "kroma/error.hpp"

namespace {

using namespace kroma;
using namespace kroma::cli;

struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> overrides;
    std::string data;
    std::string models;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "Experiment config (JSON)")->required();
    cmd->add_option("--out", c.out, "Output directory (overrides output_dir)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "Random seed");
    cmd->add_option("--set", c.overrides, "Override a config field: dotted.path=value")
        ->take_all();
}

ExperimentConfig resolve(const Common& c)
{
    std::vector<std::string> overrides = c.overrides;
    if (!c.out.empty())
        overrides.push_back("output_dir=\"" + c.out + "\"");
    if (c.seed_set)
        overrides.push_back("seed=" + std::to_string(c.seed));
    return load_config(c.config, overrides);
}

std::filesystem::path models_of(const Common& c, const ExperimentConfig& cfg)
{
    return c.models.empty() ? models_path(cfg) : std::filesystem::path(c.models);
}

int run(int argc, char** argv)
{
    CLI::App app{"kroma: Koopman reduced-order models and MPC"};
    app.require_subcommand(1);
    Common c;

    auto* collect = app.add_subcommand("collect", "Simulate the data protocol into snapshot CSVs");
    add_common(collect, c);
    auto* fit_cmd = app.add_subcommand("fit", "Fit one Koopman matrix per control label");
    add_common(fit_cmd, c);
    fit_cmd->add_option("--data", c.data, "Snapshot CSV file or directory");
    auto* predict = app.add_subcommand("predict", "Compare model rollouts against the plant");
    add_common(predict, c);
    predict->add_option("--models", c.models, "Model file");
    auto* mpc = app.add_subcommand("mpc", "Run the receding-horizon loop");
    add_common(mpc, c);
    mpc->add_option("--models", c.models, "Model file");
    auto* bench = app.add_subcommand("bench", "Time plant steps against model steps");
    add_common(bench, c);
    bench->add_option("--models", c.models, "Model file");
    auto* show = app.add_subcommand("config", "Print the resolved config");
    add_common(show, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const ExperimentConfig cfg = resolve(c);
    std::cout << std::setprecision(6);
    if (show->parsed()) {
        std::cout << emit_config(cfg);
    } else if (collect->parsed()) {
        const CollectResult r = cmd_collect(cfg);
        std::cout << "wrote " << r.files.size() << " episodes";
        if (!r.holdout_files.empty())
            std::cout << " and " << r.holdout_files.size() << " held-out episodes";
        std::cout << " to " << cfg.output_dir.string() << "\n";
        for (const auto& [label, pairs] : r.pairs_per_label)
            std::cout << "  u=" << label << ": " << pairs << " pairs\n";
    } else if (fit_cmd->parsed()) {
        const auto data = c.data.empty() ? data_dir(cfg) : std::filesystem::path(c.data);
        const FitResult r = cmd_fit(cfg, data);
        std::cout << "label        k     m  fit_residual  heldout_error  spectral_radius\n";
        for (const FitRow& row : r.rows)
            std::cout << std::setw(8) << row.label << std::setw(6) << row.k << std::setw(6) << row.m
                      << std::setw(14) << row.fit_residual << std::setw(15) << row.heldout_error
                      << std::setw(17) << row.spectral_radius << "\n";
        std::cout << "models: " << r.model_file.string() << "\n";
    } else if (predict->parsed()) {
        const PredictResult r = cmd_predict(cfg, models_of(c, cfg));
        for (const PredictRow& row : r.rows) {
            std::cout << row.signal << ": steps=" << row.steps << " rel_l2=" << row.relative_l2
                      << " one_step_rel_l2=" << row.one_step_relative_l2;
            for (std::size_t i = 0; i < row.eps_max.size(); ++i)
                std::cout << " eps_max[" << i << "]=" << row.eps_max[i];
            std::cout << "\n";
        }
    } else if (mpc->parsed()) {
        const MpcResult r = cmd_mpc(cfg, models_of(c, cfg));
        std::cout << "mean tracking error " << r.summary.mean_tracking_error << ", max "
                  << r.summary.max_tracking_error << ", terminal " << r.terminal_tracking_error
                  << ", saturation " << r.summary.saturation_fraction << ", solver failures "
                  << r.summary.solver_failures << "\nrecord: " << r.csv.string() << "\n";
    } else if (bench->parsed()) {
        const BenchResult r = cmd_bench(cfg, models_of(c, cfg));
        std::cout << "steps " << r.steps << "\nplant median " << r.plant_median_seconds * 1e6
                  << " us\nmodel median " << r.krom_median_seconds * 1e6 << " us\nratio "
                  << r.ratio << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const kroma::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const kroma::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const kroma::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
