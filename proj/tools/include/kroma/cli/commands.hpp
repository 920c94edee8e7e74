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
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kroma/cli/config.hpp"
#include "kroma/control.hpp"
#include "kroma/model_io.hpp"

namespace kroma::cli {

std::unique_ptr<Plant> make_plant(const PlantSpec& spec);

/// Plant state for an initial condition; "random" draws from `rng`.
Eigen::VectorXd initial_state(const PlantSpec& spec, const Plant& plant,
                              const InitialCondition& ic, std::mt19937_64& rng);

/// Number of sample steps in `duration` seconds; must be a whole multiple of h.
std::size_t step_count(double duration, double h, const std::string& field);

/// Default artifact locations below the output directory.
std::filesystem::path data_dir(const ExperimentConfig& config);
std::filesystem::path holdout_dir(const ExperimentConfig& config);
std::filesystem::path models_path(const ExperimentConfig& config);

struct CollectResult {
    std::vector<std::filesystem::path> files;
    std::vector<std::filesystem::path> holdout_files;
    std::map<double, std::size_t> pairs_per_label;
};

/// Simulates the data protocol and writes one snapshot CSV per episode.
CollectResult cmd_collect(const ExperimentConfig& config);

struct FitRow {
    double label = 0.0;
    std::size_t k = 0;
    std::size_t m = 0;
    double fit_residual = 0.0;
    /// One-step RMS error of a refit on the leading pairs, evaluated on the held-out tail.
    double heldout_error = 0.0;
    double spectral_radius = 0.0;
};

struct FitResult {
    ModelBundle bundle;
    std::vector<FitRow> rows;
    std::filesystem::path model_file;
};

/// Fits one Koopman matrix per control label found in `data`.
FitResult cmd_fit(const ExperimentConfig& config, const std::filesystem::path& data);

struct PredictRow {
    std::string signal;
    std::filesystem::path csv;
    std::size_t steps = 0;
    /// ||Z_ref - Z_model||_F / ||Z_ref||_F over the whole trajectory.
    double relative_l2 = 0.0;
    /// Same norm ratio for one-step predictions started from every reference sample.
    double one_step_relative_l2 = 0.0;
    /// Per reported component: max and mean pointwise relative error.
    std::vector<double> eps_max;
    std::vector<double> eps_mean;
    Eigen::MatrixXd reference;
    Eigen::MatrixXd model;
};

struct PredictResult {
    std::vector<PredictRow> rows;
};

/// Rolls the stored model out against the plant (or a replayed archive) for every configured signal.
PredictResult cmd_predict(const ExperimentConfig& config, const std::filesystem::path& models);

struct MpcResult {
    ClosedLoopRecord record;
    ClosedLoopSummary summary;
    double terminal_tracking_error = 0.0;
    double wall_seconds = 0.0;
    std::filesystem::path csv;
};

/// Receding-horizon loop against the configured plant or the model itself.
MpcResult cmd_mpc(const ExperimentConfig& config, const std::filesystem::path& models);

struct BenchResult {
    std::size_t steps = 0;
    double plant_median_seconds = 0.0;
    double krom_median_seconds = 0.0;
    double ratio = 0.0;
};

inline constexpr std::size_t min_bench_steps = 1000;

/// Median wall time per sample step of the plant and of the lifted model step.
BenchResult cmd_bench(const ExperimentConfig& config, const std::filesystem::path& models);

} // namespace kroma::cli
