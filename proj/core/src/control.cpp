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
#include "kroma/control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <charconv>

#include "kroma/error.hpp"

namespace kroma {

// --- cost ------------------------------------------------------------------------

void StageCost::validate(std::size_t q) const
{
    if (components.empty())
        throw ConfigError("cost: at least one tracked component is required");
    if (weights.size() != components.size())
        throw ConfigError("cost: one weight per tracked component is required");
    for (const std::size_t c : components)
        if (c >= q)
            throw ConfigError("cost: tracked component " + std::to_string(c)
                              + " exceeds observable dimension " + std::to_string(q));
    for (const double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ConfigError("cost: weights must be finite and non-negative");
    if (reference.rows() == 0
        || reference.cols() != static_cast<Eigen::Index>(components.size()))
        throw ConfigError("cost: reference table needs one column per tracked component");
    if (!reference.allFinite())
        throw ConfigError("cost: reference table has non-finite entries");
}

double StageCost::target(std::size_t step, std::size_t slot) const
{
    const auto last = static_cast<std::size_t>(reference.rows()) - 1;
    return reference(static_cast<Eigen::Index>(std::min(step, last)),
                     static_cast<Eigen::Index>(slot));
}

double StageCost::evaluate(std::size_t step, const Eigen::Ref<const Eigen::VectorXd>& z) const
{
    double sum = 0.0;
    for (std::size_t s = 0; s < components.size(); ++s) {
        const double e = z(static_cast<Eigen::Index>(components[s])) - target(step, s);
        sum += weights[s] * e * e;
    }
    return sum;
}

void StageCost::add_lifted_gradient(std::size_t step, const Eigen::Ref<const Eigen::VectorXd>& z,
                                    const Dictionary& dict, Eigen::Ref<Eigen::VectorXd> grad) const
{
    for (std::size_t s = 0; s < components.size(); ++s) {
        const double e = z(static_cast<Eigen::Index>(components[s])) - target(step, s);
        grad(static_cast<Eigen::Index>(dict.coordinate_index(components[s]))) +=
            2.0 * weights[s] * e;
    }
}

Eigen::MatrixXd constant_reference(double value, std::size_t steps)
{
    return Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(std::max<std::size_t>(steps, 1)), 1,
                                     value);
}

Eigen::MatrixXd sinusoid_reference(double offset, double amplitude, double omega, double h,
                                   std::size_t steps)
{
    Eigen::MatrixXd r(static_cast<Eigen::Index>(std::max<std::size_t>(steps, 1)), 1);
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        r(i, 0) = offset + amplitude * std::sin(omega * static_cast<double>(i) * h);
    return r;
}

void MpcProblem::validate(std::size_t q) const
{
    if (horizon == 0)
        throw ConfigError("mpc: horizon must be at least 1");
    cost.validate(q);
    if (const auto* set = std::get_if<LabelSet>(&admissible)) {
        if (set->labels.empty())
            throw ConfigError("mpc: admissible label set is empty");
    } else {
        const auto& box = std::get<ControlBox>(admissible);
        if (!(box.lo <= box.hi))
            throw ConfigError("mpc: control bounds must satisfy lo <= hi");
    }
}

double trajectory_cost(const StageCost& cost, const Dictionary& dict,
                       const Eigen::Ref<const Eigen::MatrixXd>& lifted, std::size_t start)
{
    double sum = 0.0;
    for (Eigen::Index j = 1; j < lifted.cols(); ++j)
        sum += cost.evaluate(start + static_cast<std::size_t>(j), dict.project(lifted.col(j)));
    return sum;
}

// --- switched -------------------------------------------------------------------------

SwitchedSolution solve_switched(const SwitchedKROM& model,
                                const Eigen::Ref<const Eigen::VectorXd>& z_init,
                                const MpcProblem& problem, std::size_t start,
                                const SwitchedOptions& options)
{
    const Dictionary& dict = model.dictionary();
    problem.validate(dict.q());
    const auto* set = std::get_if<LabelSet>(&problem.admissible);
    if (set == nullptr)
        throw ConfigError("solve_switched: problem must use a discrete label set");
    if (set->labels != model.labels())
        throw ConfigError("solve_switched: admissible labels do not match the model family");

    const std::size_t n = model.size();
    const std::size_t p = problem.horizon;
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < p; ++i) {
        if (count > options.budget / n)
            throw SolverError("solve_switched: n_c^p = " + std::to_string(n) + "^"
                              + std::to_string(p) + " exceeds the enumeration budget of "
                              + std::to_string(options.budget) + " sequences");
        count *= n;
    }

    std::vector<Eigen::VectorXd> state(p + 1);
    state[0] = dict.lift(z_init);
    std::vector<std::size_t> current(p, 0);
    SwitchedSolution best;
    best.cost = std::numeric_limits<double>::infinity();

    // depth-first with children in label order; strict improvement keeps the
    // lexicographically first optimum
    const auto dfs = [&](const auto& self, std::size_t depth, double acc) -> void {
        if (depth == p) {
            ++best.leaves;
            if (acc < best.cost) {
                best.cost = acc;
                best.indices = current;
            }
            return;
        }
        for (std::size_t c = 0; c < n; ++c) {
            current[depth] = c;
            state[depth + 1] = model.model(c).transition() * state[depth];
            const double stage =
                problem.cost.evaluate(start + depth + 1, dict.project(state[depth + 1]));
            self(self, depth + 1, acc + stage);
        }
    };
    dfs(dfs, 0, 0.0);

    if (!std::isfinite(best.cost))
        throw SolverError("solve_switched: no finite-cost sequence");
    for (const std::size_t i : best.indices)
        best.labels.push_back(model.labels()[i]);
    return best;
}

// --- continuous --------------------------------------------------------------------------

namespace {

struct Forward {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> lower;
    std::vector<Eigen::VectorXd> upper;
    std::vector<const BilinearKROM*> pieces;
    double cost = 0.0;
};

Forward forward_pass(const LocalizedKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z_init,
                     std::span<const double> u, const StageCost& cost, std::size_t start)
{
    const Dictionary& dict = model.dictionary();
    Forward f;
    f.states.reserve(u.size() + 1);
    f.states.push_back(dict.lift(z_init));
    for (std::size_t i = 0; i < u.size(); ++i) {
        const BilinearKROM& piece = model.piece(u[i]);
        const Eigen::VectorXd& g = f.states.back();
        Eigen::VectorXd lo = piece.a() * g;
        Eigen::VectorXd hi = piece.upper() * g;
        const double w = piece.weight(u[i]);
        f.states.push_back((1.0 - w) * lo + w * hi);
        f.lower.push_back(std::move(lo));
        f.upper.push_back(std::move(hi));
        f.pieces.push_back(&piece);
        f.cost += cost.evaluate(start + i + 1, dict.project(f.states.back()));
    }
    return f;
}

} // namespace

double horizon_cost(const LocalizedKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z_init,
                    std::span<const double> u, const StageCost& cost, std::size_t start)
{
    return forward_pass(model, z_init, u, cost, start).cost;
}

Eigen::VectorXd horizon_gradient(const LocalizedKROM& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& z_init,
                                 std::span<const double> u, const StageCost& cost,
                                 std::size_t start, double* cost_out)
{
    const Dictionary& dict = model.dictionary();
    const Forward f = forward_pass(model, z_init, u, cost, start);
    if (cost_out != nullptr)
        *cost_out = f.cost;
    const std::size_t p = u.size();
    Eigen::VectorXd grad(static_cast<Eigen::Index>(p));
    Eigen::VectorXd adjoint = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dict.size()));
    for (std::size_t i = p; i-- > 0;) {
        const Eigen::VectorXd& g = f.states[i + 1];
        cost.add_lifted_gradient(start + i + 1, dict.project(g), dict, adjoint);
        const BilinearKROM& piece = *f.pieces[i];
        grad(static_cast<Eigen::Index>(i)) =
            adjoint.dot(f.upper[i] - f.lower[i]) / (piece.u_b() - piece.u_a());
        const double w = piece.weight(u[i]);
        adjoint = (1.0 - w) * (piece.a().transpose() * adjoint)
                  + w * (piece.upper().transpose() * adjoint);
    }
    return grad;
}

ContinuousSolution solve_continuous(const LocalizedKROM& model,
                                    const Eigen::Ref<const Eigen::VectorXd>& z_init,
                                    const MpcProblem& problem, std::span<const double> warm_start,
                                    std::size_t start, const ContinuousOptions& options)
{
    const Dictionary& dict = model.dictionary();
    problem.validate(dict.q());
    const auto* box = std::get_if<ControlBox>(&problem.admissible);
    if (box == nullptr)
        throw ConfigError("solve_continuous: problem must use a control box");
    if (!model.covers(box->lo) || !model.covers(box->hi))
        throw ConfigError("solve_continuous: control bounds [" + std::to_string(box->lo) + ", "
                          + std::to_string(box->hi) + "] leave the model's covered interval ["
                          + std::to_string(model.lo()) + ", " + std::to_string(model.hi()) + "]");
    const std::size_t p = problem.horizon;

    const auto project_box = [&](double v) { return std::clamp(v, box->lo, box->hi); };
    ContinuousSolution sol;
    sol.u.assign(p, 0.5 * (box->lo + box->hi));
    for (std::size_t i = 0; i < std::min(p, warm_start.size()); ++i)
        sol.u[i] = std::isfinite(warm_start[i]) ? project_box(warm_start[i]) : sol.u[i];

    Eigen::VectorXd grad = horizon_gradient(model, z_init, sol.u, problem.cost, start, &sol.cost);
    if (!std::isfinite(sol.cost))
        throw SolverError("solve_continuous: warm start has non-finite cost");
    sol.cost_history.push_back(sol.cost);

    std::vector<double> trial(p);
    double bb_step = options.initial_step;
    const auto dump = [](std::span<const double> v) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < v.size(); ++i)
            os << (i ? ", " : "") << v[i];
        os << ']';
        return os.str();
    };

    for (;;) {
        double pg = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            const double d = sol.u[i] - project_box(sol.u[i] - grad(static_cast<Eigen::Index>(i)));
            pg += d * d;
        }
        sol.projected_gradient_norm = std::sqrt(pg);
        if (sol.projected_gradient_norm <= options.gtol) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= options.max_iterations)
            break;

        double step = bb_step;
        bool accepted = false;
        double trial_cost = 0.0;
        for (std::size_t bt = 0; bt < options.max_backtracks; ++bt, step *= options.backtrack) {
            double moved = 0.0;
            for (std::size_t i = 0; i < p; ++i) {
                trial[i] = project_box(sol.u[i] - step * grad(static_cast<Eigen::Index>(i)));
                moved += (trial[i] - sol.u[i]) * (trial[i] - sol.u[i]);
            }
            trial_cost = horizon_cost(model, z_init, trial, problem.cost, start);
            if (!std::isfinite(trial_cost))
                throw SolverError("solve_continuous: non-finite cost in line search at iterate "
                                  + dump(trial));
            if (trial_cost <= sol.cost - options.armijo / step * moved) {
                accepted = true;
                break;
            }
        }
        if (!accepted)
            break; // no descent representable at this precision
        const Eigen::VectorXd grad_old = grad;
        Eigen::VectorXd s_vec(static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < p; ++i)
            s_vec(static_cast<Eigen::Index>(i)) = trial[i] - sol.u[i];
        sol.u = trial;
        ++sol.iterations;
        grad = horizon_gradient(model, z_init, sol.u, problem.cost, start, &sol.cost);
        sol.cost_history.push_back(sol.cost);
        // Barzilai-Borwein trial step for the next iteration
        const double ss = s_vec.squaredNorm();
        const double sy = s_vec.dot(grad - grad_old);
        bb_step = (sy > 0.0 && std::isfinite(ss / sy))
                      ? std::clamp(ss / sy, 1e-12, 1e12)
                      : options.initial_step;
    }
    return sol;
}

// --- closed loop ----------------------------------------------------------------------------

ModelPlant::ModelPlant(LocalizedKROM model) : model_(std::move(model)) {}

Eigen::VectorXd ModelPlant::initial_state(const Eigen::Ref<const Eigen::VectorXd>& z0) const
{
    return model_.dictionary().lift(z0);
}

Eigen::VectorXd ModelPlant::step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const
{
    return model_.step(y, u);
}

Eigen::VectorXd ModelPlant::observe(const Eigen::Ref<const Eigen::VectorXd>& y) const
{
    return model_.dictionary().project(y);
}

namespace {

using PredictFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& z, double u)>;
using SolveFn = std::function<std::vector<double>(const Eigen::VectorXd& z, std::size_t start,
                                                  const std::vector<double>& warm)>;

ClosedLoopRecord closed_loop(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                             const MpcProblem& problem, std::size_t steps, double initial_control,
                             const ClosedLoopOptions& options, const PredictFn& predict,
                             const SolveFn& solve)
{
    if (plant.observable_dim() == 0)
        throw ConfigError("closed loop: plant has no observables");
    ClosedLoopRecord record;
    record.steps.reserve(steps);
    Eigen::VectorXd y = y0;
    double current = initial_control;
    std::vector<double> warm(problem.horizon, current);

    for (std::size_t i = 0; i < steps; ++i) {
        ClosedLoopStep row;
        row.step = i;
        row.t = static_cast<double>(i) * plant.h();
        row.z = plant.observe(y);
        row.stage_cost = problem.cost.evaluate(i, row.z);

        Eigen::VectorXd z_solve = row.z;
        std::size_t solve_start = i;
        if (options.latency_compensation) {
            z_solve = predict(row.z, current);
            solve_start = i + 1;
        }

        const auto t0 = std::chrono::steady_clock::now();
        try {
            row.horizon_solution = solve(z_solve, solve_start, warm);
            row.u_applied = row.horizon_solution.front();
        } catch (const Error& e) {
            if (!options.hold_on_failure)
                throw;
            row.solver_failed = true;
            row.u_applied = current;
            row.horizon_solution.assign(problem.horizon, current);
            if (options.log)
                options.log("step " + std::to_string(i) + ": solver failed, holding control "
                            + std::to_string(current) + ": " + e.what());
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.solve_ms = options.record_timing
                           ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                           : 0.0;

        // with latency compensation the new control takes effect at t_{i+1}
        row.u_plant = options.latency_compensation ? current : row.u_applied;
        row.z_predicted = options.latency_compensation ? z_solve : predict(row.z, row.u_plant);
        y = plant.step(y, row.u_plant);
        current = row.u_applied;

        // shift the horizon by one and repeat the last entry
        warm.assign(row.horizon_solution.begin() + 1, row.horizon_solution.end());
        warm.push_back(row.horizon_solution.back());
        record.steps.push_back(std::move(row));
    }
    record.final_z = plant.observe(y);
    return record;
}

} // namespace

ClosedLoopRecord run_closed_loop(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                                 const SwitchedKROM& model, const MpcProblem& problem,
                                 std::size_t steps, const ClosedLoopOptions& options)
{
    if (plant.h() != model.h() || plant.observable_dim() != model.dictionary().q())
        throw ConfigError("closed loop: plant and model disagree on h or observable layout");
    problem.validate(model.dictionary().q());
    const double initial = options.initial_control.value_or(model.labels().front());
    model.index_of(initial);
    const Dictionary& dict = model.dictionary();
    const PredictFn predict = [&](const Eigen::VectorXd& z, double u) {
        return Eigen::VectorXd(dict.project(model.model(model.index_of(u)).transition() * dict.lift(z)));
    };
    const SolveFn solve = [&](const Eigen::VectorXd& z, std::size_t start,
                              const std::vector<double>&) {
        return solve_switched(model, z, problem, start, options.switched).labels;
    };
    return closed_loop(plant, y0, problem, steps, initial, options, predict, solve);
}

ClosedLoopRecord run_closed_loop(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                                 const LocalizedKROM& model, const MpcProblem& problem,
                                 std::size_t steps, const ClosedLoopOptions& options)
{
    if (plant.h() != model.h() || plant.observable_dim() != model.dictionary().q())
        throw ConfigError("closed loop: plant and model disagree on h or observable layout");
    problem.validate(model.dictionary().q());
    const auto* box = std::get_if<ControlBox>(&problem.admissible);
    if (box == nullptr)
        throw ConfigError("closed loop: continuous mode needs a control box");
    if (!model.covers(box->lo) || !model.covers(box->hi))
        throw ConfigError("closed loop: control bounds leave the model's covered interval");
    const double initial =
        std::clamp(options.initial_control.value_or(0.5 * (box->lo + box->hi)), box->lo, box->hi);
    const Dictionary& dict = model.dictionary();
    const PredictFn predict = [&](const Eigen::VectorXd& z, double u) {
        return Eigen::VectorXd(dict.project(model.step(dict.lift(z), u, OutOfRange::clamp)));
    };
    const SolveFn solve = [&](const Eigen::VectorXd& z, std::size_t start,
                              const std::vector<double>& warm) {
        return solve_continuous(model, z, problem, warm, start, options.continuous).u;
    };
    return closed_loop(plant, y0, problem, steps, initial, options, predict, solve);
}

// --- record ----------------------------------------------------------------------------------

ClosedLoopSummary ClosedLoopRecord::summarize(const MpcProblem& problem) const
{
    ClosedLoopSummary s;
    if (steps.empty())
        return s;
    double lo = 0.0;
    double hi = 0.0;
    if (const auto* box = std::get_if<ControlBox>(&problem.admissible)) {
        lo = box->lo;
        hi = box->hi;
    } else {
        const auto& labels = std::get<LabelSet>(problem.admissible).labels;
        lo = *std::min_element(labels.begin(), labels.end());
        hi = *std::max_element(labels.begin(), labels.end());
    }
    const double tol = 1e-9 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    double sum = 0.0;
    std::size_t saturated = 0;
    for (const ClosedLoopStep& row : steps) {
        double e2 = 0.0;
        for (std::size_t slot = 0; slot < problem.cost.components.size(); ++slot) {
            const double e = row.z(static_cast<Eigen::Index>(problem.cost.components[slot]))
                             - problem.cost.target(row.step, slot);
            e2 += e * e;
        }
        const double e = std::sqrt(e2);
        sum += e;
        s.max_tracking_error = std::max(s.max_tracking_error, e);
        if (std::abs(row.u_applied - lo) <= tol || std::abs(row.u_applied - hi) <= tol)
            ++saturated;
        if (row.solver_failed)
            ++s.solver_failures;
    }
    s.mean_tracking_error = sum / static_cast<double>(steps.size());
    s.saturation_fraction = static_cast<double>(saturated) / static_cast<double>(steps.size());
    return s;
}

void ClosedLoopRecord::write_csv(const std::filesystem::path& path) const
{
    const auto fmt = [](double v) {
        char buf[64];
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    const std::size_t q = steps.empty() ? 0 : static_cast<std::size_t>(steps.front().z.size());
    std::ostringstream os;
    os << "step,t,u_applied,cost_stage,solve_ms";
    for (std::size_t i = 1; i <= q; ++i)
        os << ",z" << i;
    for (std::size_t i = 1; i <= q; ++i)
        os << ",zhat" << i;
    os << '\n';
    for (const ClosedLoopStep& row : steps) {
        os << row.step << ',' << fmt(row.t) << ',' << fmt(row.u_applied) << ','
           << fmt(row.stage_cost) << ',' << fmt(row.solve_ms);
        for (Eigen::Index i = 0; i < row.z.size(); ++i)
            os << ',' << fmt(row.z(i));
        for (Eigen::Index i = 0; i < row.z_predicted.size(); ++i)
            os << ',' << fmt(row.z_predicted(i));
        os << '\n';
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw DataError("closed loop: cannot write " + tmp.string());
        out << os.str();
    }
    std::filesystem::rename(tmp, path);
}

} // namespace kroma
