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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "kroma/krom.hpp"
#include "kroma/plants.hpp"

namespace kroma {

/**
 * Quadratic tracking cost sum_c w_c (z_c - r_c(i))^2 over selected
 * observable components. Reference rows are absolute step indices; steps
 * past the end of the table reuse the last row.
 */
struct StageCost {
    std::vector<std::size_t> components;
    std::vector<double> weights;
    /// rows = steps, cols = tracked components
    Eigen::MatrixXd reference;

    void validate(std::size_t q) const;
    double target(std::size_t step, std::size_t slot) const;
    double evaluate(std::size_t step, const Eigen::Ref<const Eigen::VectorXd>& z) const;
    /// d(stage cost)/d(psi), nonzero only at coordinate positions.
    void add_lifted_gradient(std::size_t step, const Eigen::Ref<const Eigen::VectorXd>& z,
                             const Dictionary& dict, Eigen::Ref<Eigen::VectorXd> grad) const;
};

/// Reference table with `components.size()` columns, all set to `value`.
Eigen::MatrixXd constant_reference(double value, std::size_t steps);
/// offset + amplitude * sin(omega * i * h) for i = 0..steps-1.
Eigen::MatrixXd sinusoid_reference(double offset, double amplitude, double omega, double h,
                                   std::size_t steps);

struct LabelSet {
    std::vector<double> labels;
};

struct ControlBox {
    double lo = 0.0;
    double hi = 0.0;
};

struct MpcProblem {
    std::size_t horizon = 10;
    StageCost cost;
    std::variant<LabelSet, ControlBox> admissible;
    double h = 0.0;

    void validate(std::size_t q) const;
};

/// Horizon cost sum_{j=1..p} L(z_{s+j}) of a lifted trajectory starting at `start`.
double trajectory_cost(const StageCost& cost, const Dictionary& dict,
                       const Eigen::Ref<const Eigen::MatrixXd>& lifted, std::size_t start);

// --- switched (combinatorial) problems ------------------------------------------

struct SwitchedOptions {
    /// Maximal number of enumerated sequences n_c^p.
    std::uint64_t budget = std::uint64_t{1} << 22;
};

struct SwitchedSolution {
    std::vector<std::size_t> indices;
    std::vector<double> labels;
    double cost = 0.0;
    std::uint64_t leaves = 0;
};

/**
 * Globally optimal label sequence by depth-first enumeration of all n_c^p
 * sequences. Ties go to the lexicographically smallest index sequence.
 * `start` is the absolute step index of `z_init` in the reference table.
 */
SwitchedSolution solve_switched(const SwitchedKROM& model,
                                const Eigen::Ref<const Eigen::VectorXd>& z_init,
                                const MpcProblem& problem, std::size_t start = 0,
                                const SwitchedOptions& options = {});

// --- continuous (bilinear) problems ------------------------------------------------

struct ContinuousOptions {
    double gtol = 1e-8;
    std::size_t max_iterations = 500;
    double backtrack = 0.5;
    /// Trial step of the first iteration; later iterations start from a Barzilai-Borwein step.
    double initial_step = 1.0;
    double armijo = 1e-4;
    std::size_t max_backtracks = 60;
};

struct ContinuousSolution {
    std::vector<double> u;
    double cost = 0.0;
    std::size_t iterations = 0;
    double projected_gradient_norm = 0.0;
    bool converged = false;
    std::vector<double> cost_history;
};

/// Horizon cost of a control sequence under the lifted bilinear dynamics.
double horizon_cost(const LocalizedKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z_init,
                    std::span<const double> u, const StageCost& cost, std::size_t start = 0);

/**
 * Gradient of `horizon_cost` with respect to u by backward accumulation of
 * the lifted adjoint. At an interior knot the upper piece is differentiated,
 * matching rollout dispatch.
 */
Eigen::VectorXd horizon_gradient(const LocalizedKROM& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& z_init,
                                 std::span<const double> u, const StageCost& cost,
                                 std::size_t start = 0, double* cost_out = nullptr);

/**
 * Box-constrained single shooting by projected gradient descent with
 * backtracking. Iterates have non-increasing cost; the returned cost never
 * exceeds the cost of the (clamped) warm start.
 */
ContinuousSolution solve_continuous(const LocalizedKROM& model,
                                    const Eigen::Ref<const Eigen::VectorXd>& z_init,
                                    const MpcProblem& problem, std::span<const double> warm_start,
                                    std::size_t start = 0, const ContinuousOptions& options = {});

// --- closed loop -------------------------------------------------------------------

/// Uses a bilinear model as its own plant: the state is the lifted vector.
class ModelPlant final : public Plant {
public:
    explicit ModelPlant(LocalizedKROM model);

    const LocalizedKROM& model() const noexcept { return model_; }
    Eigen::VectorXd initial_state(const Eigen::Ref<const Eigen::VectorXd>& z0) const;

    std::size_t state_dim() const override { return model_.dictionary().size(); }
    std::size_t observable_dim() const override { return model_.dictionary().q(); }
    double h() const override { return model_.h(); }
    ControlInterval admissible() const override { return {model_.lo(), model_.hi()}; }
    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const override;
    Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& y) const override;

private:
    LocalizedKROM model_;
};

struct ClosedLoopOptions {
    /// Solve from the model-predicted next observable instead of the current one.
    bool latency_compensation = true;
    /// Control applied before the first solve takes effect.
    std::optional<double> initial_control;
    /// Keep the previous control when a solve fails instead of rethrowing.
    bool hold_on_failure = true;
    bool record_timing = true;
    ContinuousOptions continuous;
    SwitchedOptions switched;
    /// Receives one line per solver failure.
    std::function<void(const std::string&)> log;
};

struct ClosedLoopStep {
    std::size_t step = 0;
    double t = 0.0;
    /// First entry of this step's horizon solution.
    double u_applied = 0.0;
    /// Control the plant actually ran with on [t, t + h).
    double u_plant = 0.0;
    double stage_cost = 0.0;
    double solve_ms = 0.0;
    Eigen::VectorXd z;
    Eigen::VectorXd z_predicted;
    std::vector<double> horizon_solution;
    bool solver_failed = false;
};

struct ClosedLoopSummary {
    double mean_tracking_error = 0.0;
    double max_tracking_error = 0.0;
    double saturation_fraction = 0.0;
    std::size_t solver_failures = 0;
};

struct ClosedLoopRecord {
    std::vector<ClosedLoopStep> steps;
    /// z_{n} after the last plant step.
    Eigen::VectorXd final_z;

    ClosedLoopSummary summarize(const MpcProblem& problem) const;
    /// Columns: step,t,u_applied,cost_stage,solve_ms,z1..zq,zhat1..zhatq.
    void write_csv(const std::filesystem::path& path) const;
};

/// Receding-horizon loop with the switched (label enumeration) solver.
ClosedLoopRecord run_closed_loop(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                                 const SwitchedKROM& model, const MpcProblem& problem,
                                 std::size_t steps, const ClosedLoopOptions& options = {});

/// Receding-horizon loop with the continuous bilinear solver.
ClosedLoopRecord run_closed_loop(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                                 const LocalizedKROM& model, const MpcProblem& problem,
                                 std::size_t steps, const ClosedLoopOptions& options = {});

} // namespace kroma
