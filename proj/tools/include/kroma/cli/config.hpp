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
#include <string>
#include <utility>
#include <vector>

#include "kroma/plants.hpp"

namespace kroma::cli {

enum class PlantKind { ode, burgers, wake };

struct PlantSpec {
    PlantKind kind = PlantKind::ode;
    OdeParams ode;
    BurgersParams burgers;
    WakeParams wake;

    bool operator==(const PlantSpec&) const = default;
};

/// Initial condition of one run.
///  - "state": explicit plant state `values`
///  - "random": each component uniform in [lo, hi]
///  - "sine", "gaussian": Burgers profiles scaled by `amplitude`
struct InitialCondition {
    std::string kind = "state";
    std::vector<double> values;
    double lo = -1.0;
    double hi = 1.0;
    double amplitude = 0.5;

    bool operator==(const InitialCondition&) const = default;
};

enum class ScheduleKind { constant, fixed_switching, random_switching };

struct DataProtocol {
    std::vector<double> labels;
    ScheduleKind schedule = ScheduleKind::constant;
    /// Seconds per episode.
    double duration = 0.0;
    /// Constant schedule: episodes per label. Switching schedules: one per initial condition.
    std::size_t episodes_per_label = 1;
    std::vector<InitialCondition> initial_conditions;
    /// Fixed switching: steps per label. Random switching: hold range.
    std::size_t hold = 1;
    std::size_t min_hold = 1;
    std::size_t max_hold = 1;
    /// Constant-control validation episodes written next to the training data.
    double holdout_duration = 0.0;
    std::vector<InitialCondition> holdout_initial_conditions;

    bool operator==(const DataProtocol&) const = default;
};

struct DictionarySpec {
    std::size_t q = 0;
    std::size_t max_order = 2;

    bool operator==(const DictionarySpec&) const = default;
};

struct ModelSpec {
    /// "switched", "bilinear" or "localized".
    std::string kind = "localized";
    /// Labels used as interpolation knots; empty means all data labels.
    std::vector<double> knots;
    double svd_tol = 1e-10;
    double ridge = 0.0;
    double holdout_fraction = 0.2;

    bool operator==(const ModelSpec&) const = default;
};

/// Control signal for prediction runs.
///  - "constant": value
///  - "fixed_switching": pattern of (value, steps)
///  - "sinusoid": offset + amplitude sin(omega t)
///  - "replay": every episode of the archive at `path` (relative to the output directory)
struct SignalSpec {
    std::string name;
    std::string kind = "constant";
    double value = 0.0;
    std::vector<std::pair<double, std::size_t>> pattern;
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 1.0;
    std::string path;

    bool operator==(const SignalSpec&) const = default;
};

struct PredictSpec {
    double duration = 10.0;
    InitialCondition initial;
    std::vector<SignalSpec> signals;
    /// Zero-based observable components reported with the relative error.
    std::vector<std::size_t> components;

    bool operator==(const PredictSpec&) const = default;
};

struct ReferenceSpec {
    /// "constant" or "sinusoid".
    std::string kind = "constant";
    double value = 0.0;
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 1.0;

    bool operator==(const ReferenceSpec&) const = default;
};

struct MpcSpec {
    /// "continuous" (bilinear solver) or "switched" (label enumeration).
    std::string mode = "continuous";
    /// "plant" runs the configured simulator, "model" closes the loop on the K-ROM itself.
    std::string plant = "plant";
    std::size_t horizon = 10;
    std::size_t steps = 100;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> labels;
    std::vector<std::size_t> components{0};
    std::vector<double> weights{1.0};
    std::vector<ReferenceSpec> references;
    InitialCondition initial;
    bool latency_compensation = true;
    double initial_control = 0.0;
    double gtol = 1e-8;
    std::size_t max_iterations = 500;
    /// Per-step solve times make the record CSV differ between reruns.
    bool record_timing = false;
    /// Keep the previous control after a failed solve instead of aborting.
    bool hold_on_failure = true;

    bool operator==(const MpcSpec&) const = default;
};

struct BenchSpec {
    std::size_t steps = 1000;
    InitialCondition initial;

    bool operator==(const BenchSpec&) const = default;
};

/// One experiment: plant, data protocol, model, prediction, MPC and timing runs.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    PlantSpec plant;
    DictionarySpec dictionary;
    DataProtocol data;
    ModelSpec model;
    PredictSpec predict;
    MpcSpec mpc;
    BenchSpec bench;

    bool operator==(const ExperimentConfig&) const = default;

    /// Throws ConfigError naming the offending field path.
    void validate() const;
};

std::string to_string(PlantKind kind);
std::string to_string(ScheduleKind kind);

/// Parses JSON text; unknown keys and type mismatches raise ConfigError with the field path.
ExperimentConfig parse_config(const std::string& text);
/// Pretty-printed JSON that parses back to an equal config.
std::string emit_config(const ExperimentConfig& config);

/// Applies `path=value` overrides to the JSON text before parsing. `value` is
/// read as JSON when possible and as a plain string otherwise.
std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides);

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

} // namespace kroma::cli
