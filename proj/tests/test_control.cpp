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
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "kroma/control.hpp"
#include "kroma/error.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace kroma;

namespace {

KoopmanModel model_from_transition(const Dictionary& dict, const Eigen::MatrixXd& transition,
                                   double label, double h = 0.1)
{
    return KoopmanModel(dict, transition.transpose(), label, h, 0.0);
}

SwitchedKROM random_switched(std::mt19937_64& rng, const Dictionary& dict,
                             const std::vector<double>& labels)
{
    const auto k = static_cast<Eigen::Index>(dict.size());
    std::vector<KoopmanModel> models;
    for (double label : labels) {
        Eigen::MatrixXd t = 0.6 * oracle::random_matrix(rng, k, k);
        t.row(0).setZero();
        t(0, 0) = 1.0;
        models.push_back(model_from_transition(dict, t, label));
    }
    return SwitchedKROM(std::move(models));
}

MpcProblem tracking_problem(std::size_t q, std::size_t horizon, Eigen::MatrixXd reference,
                            std::size_t component = 0)
{
    MpcProblem p;
    p.horizon = horizon;
    p.cost.components = {component};
    p.cost.weights = {1.0};
    p.cost.reference = std::move(reference);
    p.h = 0.1;
    (void)q;
    return p;
}

// Independent cost of a label sequence: explicit lifted products.
double brute_cost(const SwitchedKROM& model, const Eigen::VectorXd& z0, const MpcProblem& p,
                  const std::vector<std::size_t>& seq, std::size_t start)
{
    const Dictionary& dict = model.dictionary();
    Eigen::VectorXd psi = dict.lift(z0);
    double total = 0.0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
        psi = model.model(seq[j]).transition() * psi;
        const std::size_t row =
            std::min<std::size_t>(start + j + 1, static_cast<std::size_t>(p.cost.reference.rows()) - 1);
        for (std::size_t c = 0; c < p.cost.components.size(); ++c) {
            const double e = psi(static_cast<Eigen::Index>(1 + p.cost.components[c]))
                             - p.cost.reference(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
            total += p.cost.weights[c] * e * e;
        }
    }
    return total;
}

LocalizedKROM linear_bilinear(double ua = -1.0, double ub = 1.0)
{
    const LinearPlant plant = fixtures::linear_plant();
    const Dictionary dict(2, 1);
    return LocalizedKROM(BilinearKROM(fit(dict, fixtures::constant_control_pairs(plant, ua, 4, 10, 1)),
                                      fit(dict, fixtures::constant_control_pairs(plant, ub, 4, 10, 2))));
}

} // namespace

TEST_CASE("stage cost evaluates and holds the last reference row")
{
    StageCost c;
    c.components = {1};
    c.weights = {2.0};
    c.reference = Eigen::MatrixXd(2, 1);
    c.reference << 1.0, 3.0;
    const Eigen::Vector2d z(0.0, 2.0);
    CHECK(c.evaluate(0, z) == doctest::Approx(2.0));
    CHECK(c.evaluate(1, z) == doctest::Approx(2.0));
    CHECK(c.evaluate(50, z) == doctest::Approx(2.0));
    CHECK(c.target(50, 0) == 3.0);
    CHECK_NOTHROW(c.validate(2));
    CHECK_THROWS_AS(c.validate(1), ConfigError);
    c.weights = {-1.0};
    CHECK_THROWS_AS(c.validate(2), ConfigError);

    const Eigen::MatrixXd s = sinusoid_reference(0.5, 0.25, 2.0, 0.1, 4);
    REQUIRE(s.rows() == 4);
    CHECK(s(3, 0) == doctest::Approx(0.5 + 0.25 * std::sin(0.6)));
}

TEST_CASE("switched solver with a single label returns that label")
{
    std::mt19937_64 rng(10);
    const Dictionary dict(2, 2);
    const SwitchedKROM model = random_switched(rng, dict, {0.7});
    MpcProblem p = tracking_problem(2, 6, constant_reference(0.0, 1));
    p.admissible = LabelSet{{0.7}};
    const SwitchedSolution s = solve_switched(model, Eigen::Vector2d(0.2, 0.1), p);
    CHECK(s.labels == std::vector<double>(6, 0.7));
    CHECK(s.leaves == 1);
}

TEST_CASE("switched solver agrees with brute-force enumeration")
{
    std::mt19937_64 rng(11);
    const Dictionary dict(2, 2);
    for (int trial = 0; trial < 8; ++trial) {
        const SwitchedKROM model = random_switched(rng, dict, {-1.0, 0.0, 1.0});
        const std::size_t horizon = 4;
        const std::size_t start = static_cast<std::size_t>(trial);
        MpcProblem p = tracking_problem(2, horizon, oracle::random_matrix(rng, 6, 1));
        p.admissible = LabelSet{{-1.0, 0.0, 1.0}};
        const Eigen::VectorXd z0 = oracle::random_matrix(rng, 2, 1);

        double best = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> best_seq;
        oracle::for_each_sequence(3, horizon, [&](const std::vector<std::size_t>& seq) {
            const double c = brute_cost(model, z0, p, seq, start);
            if (c < best) {
                best = c;
                best_seq = seq;
            }
        });
        const SwitchedSolution s = solve_switched(model, z0, p, start);
        CHECK(s.indices == best_seq);
        CHECK(s.cost == doctest::Approx(best).epsilon(1e-12));
        CHECK(s.leaves == 81);
    }
}

TEST_CASE("switched solver breaks ties lexicographically")
{
    std::mt19937_64 rng(12);
    const Dictionary dict(1, 1);
    const SwitchedKROM model = random_switched(rng, dict, {0.0, 1.0, 2.0});
    MpcProblem p = tracking_problem(1, 3, constant_reference(0.0, 1));
    p.cost.weights = {0.0};
    p.admissible = LabelSet{{0.0, 1.0, 2.0}};
    const SwitchedSolution s = solve_switched(model, Eigen::VectorXd::Constant(1, 0.3), p);
    CHECK(s.indices == std::vector<std::size_t>{0, 0, 0});
    CHECK(s.cost == 0.0);
}

TEST_CASE("switched solver errors")
{
    std::mt19937_64 rng(13);
    const Dictionary dict(1, 1);
    const SwitchedKROM model = random_switched(rng, dict, {0.0, 1.0});
    MpcProblem p = tracking_problem(1, 10, constant_reference(0.0, 1));
    p.admissible = LabelSet{{0.0, 1.0}};
    SwitchedOptions small;
    small.budget = 1000;
    CHECK_THROWS_AS(solve_switched(model, Eigen::VectorXd::Zero(1), p, 0, small), SolverError);
    p.admissible = LabelSet{{0.0, 2.0}};
    CHECK_THROWS_AS(solve_switched(model, Eigen::VectorXd::Zero(1), p), ConfigError);
    p.admissible = ControlBox{0.0, 1.0};
    CHECK_THROWS_AS(solve_switched(model, Eigen::VectorXd::Zero(1), p), ConfigError);
}

TEST_CASE("continuous solver returns the warm start when control has no effect")
{
    std::mt19937_64 rng(14);
    const Dictionary dict(2, 2);
    const SwitchedKROM s = random_switched(rng, dict, {0.0});
    const KoopmanModel& m = s.model(0);
    const KoopmanModel same(dict, m.k_matrix(), 1.0, m.h(), 0.0);
    const LocalizedKROM model(BilinearKROM(m, same));
    MpcProblem p = tracking_problem(2, 5, constant_reference(0.3, 1));
    p.admissible = ControlBox{0.0, 1.0};
    const std::vector<double> warm{0.1, 0.2, 0.3, 0.4, 0.5};
    const ContinuousSolution sol = solve_continuous(model, Eigen::Vector2d(0.5, -0.5), p, warm);
    CHECK(sol.u == warm);
    CHECK(sol.iterations == 0);
    CHECK(sol.converged);
}

TEST_CASE("adjoint gradient matches central differences")
{
    std::mt19937_64 rng(15);
    const Dictionary dict(2, 2);
    const SwitchedKROM s = random_switched(rng, dict, {-1.0, 0.0, 1.0});
    const LocalizedKROM model(s);
    StageCost cost;
    cost.components = {0, 1};
    cost.weights = {1.0, 0.5};
    cost.reference = oracle::random_matrix(rng, 12, 2);
    const Eigen::Vector2d z0(0.4, -0.3);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> u(8);
        std::uniform_real_distribution<double> d(-0.95, 0.95);
        for (double& v : u) {
            v = d(rng);
            if (std::abs(v) < 0.01)
                v = 0.5; // keep away from the knot
        }
        const std::size_t start = static_cast<std::size_t>(trial);
        double c = 0.0;
        const Eigen::VectorXd g = horizon_gradient(model, z0, u, cost, start, &c);
        CHECK(c == doctest::Approx(horizon_cost(model, z0, u, cost, start)).epsilon(1e-13));
        const Eigen::VectorXd fd = oracle::central_difference(
            [&](const std::vector<double>& x) { return horizon_cost(model, z0, x, cost, start); }, u,
            1e-6);
        CHECK((g - fd).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("one-step scalar problem matches the closed-form minimizer")
{
    // z' = a z + u-dependent affine term: transitions on psi = (1, z)
    const Dictionary dict(1, 1);
    Eigen::Matrix2d ta;
    ta << 1.0, 0.0, 0.2, 0.9;
    Eigen::Matrix2d tb;
    tb << 1.0, 0.0, 1.0, 0.7;
    const LocalizedKROM model(BilinearKROM(model_from_transition(dict, ta, -1.0),
                                           model_from_transition(dict, tb, 1.0)));
    const double z0 = 0.8;
    const double r = 0.95;
    // z1 = c0 + c1 u with w = (u + 1)/2
    const double za = 0.2 + 0.9 * z0;
    const double zb = 1.0 + 0.7 * z0;
    const double c1 = (zb - za) / 2.0;
    const double c0 = za + c1;
    const double u_star = (r - c0) / c1;
    REQUIRE(std::abs(u_star) < 1.0);

    MpcProblem p = tracking_problem(1, 1, constant_reference(r, 1));
    p.admissible = ControlBox{-1.0, 1.0};
    const ContinuousSolution sol =
        solve_continuous(model, Eigen::VectorXd::Constant(1, z0), p, std::vector<double>{-1.0});
    CHECK(sol.converged);
    CHECK(std::abs(sol.u[0] - u_star) <= 1e-8);

    // unreachable target saturates at the bound
    p.cost.reference = constant_reference(5.0, 1);
    const ContinuousSolution sat =
        solve_continuous(model, Eigen::VectorXd::Constant(1, z0), p, std::vector<double>{0.0});
    CHECK(sat.u[0] == 1.0);
}

TEST_CASE("continuous solver cost history is non-increasing")
{
    std::mt19937_64 rng(16);
    const Dictionary dict(2, 2);
    const LocalizedKROM model(random_switched(rng, dict, {-1.0, 0.0, 1.0}));
    MpcProblem p = tracking_problem(2, 10, sinusoid_reference(0.2, 0.3, 1.0, 0.1, 30), 1);
    p.admissible = ControlBox{-1.0, 1.0};
    const std::vector<double> warm(10, 0.9);
    const ContinuousSolution sol = solve_continuous(model, Eigen::Vector2d(0.3, 0.6), p, warm, 3);
    CHECK(sol.cost <= horizon_cost(model, Eigen::Vector2d(0.3, 0.6), warm, p.cost, 3));
    for (std::size_t i = 1; i < sol.cost_history.size(); ++i)
        CHECK(sol.cost_history[i] <= sol.cost_history[i - 1]);
    for (double v : sol.u)
        CHECK((v >= -1.0 && v <= 1.0));
}

TEST_CASE("collapsed control box reproduces the switched cost")
{
    std::mt19937_64 rng(17);
    const Dictionary dict(2, 2);
    const SwitchedKROM s = random_switched(rng, dict, {0.0, 1.0});
    const LocalizedKROM model(s);
    for (double label : {0.0, 1.0}) {
        MpcProblem p = tracking_problem(2, 4, constant_reference(0.1, 1));
        p.admissible = LabelSet{{label}};
        const SwitchedSolution sw =
            solve_switched(SwitchedKROM({s.model(s.index_of(label))}), Eigen::Vector2d(0.2, 0.4), p);
        p.admissible = ControlBox{label, label};
        const ContinuousSolution c = solve_continuous(model, Eigen::Vector2d(0.2, 0.4), p,
                                                      std::vector<double>(4, label));
        CHECK(c.cost == doctest::Approx(sw.cost).epsilon(1e-12));
    }
}

TEST_CASE("continuous solver rejects bounds outside the model")
{
    const LocalizedKROM model = linear_bilinear();
    MpcProblem p = tracking_problem(2, 3, constant_reference(0.0, 1));
    p.admissible = ControlBox{-2.0, 1.0};
    CHECK_THROWS_AS(solve_continuous(model, Eigen::Vector2d(0, 0), p, std::vector<double>(3, 0.0)),
                    ConfigError);
}

TEST_CASE("closed loop without model mismatch")
{
    const LocalizedKROM model = linear_bilinear();
    const ModelPlant plant(model);
    MpcProblem p = tracking_problem(2, 10, constant_reference(0.5, 1));
    p.admissible = ControlBox{-1.0, 1.0};
    ClosedLoopOptions opts;
    opts.initial_control = 0.0;
    opts.record_timing = false;
    const ClosedLoopRecord rec =
        run_closed_loop(plant, plant.initial_state(Eigen::Vector2d(0.0, 0.0)), model, p, 50, opts);
    REQUIRE(rec.steps.size() == 50);
    for (std::size_t i = 0; i + 1 < rec.steps.size(); ++i) {
        const ClosedLoopStep& s = rec.steps[i];
        CHECK((s.z_predicted - rec.steps[i + 1].z).norm() <= 1e-6);
        CHECK(s.u_applied == s.horizon_solution.front());
        CHECK(rec.steps[i + 1].u_plant == s.u_applied);
        CHECK(!s.solver_failed);
    }
    CHECK(rec.steps[0].u_plant == 0.0);
    CHECK(std::abs(rec.final_z(0) - 0.5) < 1e-3);
    const ClosedLoopSummary summary = rec.summarize(p);
    CHECK(summary.solver_failures == 0);
}

TEST_CASE("closed loop without latency compensation applies the solution immediately")
{
    const LocalizedKROM model = linear_bilinear();
    const ModelPlant plant(model);
    MpcProblem p = tracking_problem(2, 5, constant_reference(0.5, 1));
    p.admissible = ControlBox{-1.0, 1.0};
    ClosedLoopOptions opts;
    opts.latency_compensation = false;
    const ClosedLoopRecord rec =
        run_closed_loop(plant, plant.initial_state(Eigen::Vector2d(0.0, 0.0)), model, p, 10, opts);
    for (const ClosedLoopStep& s : rec.steps)
        CHECK(s.u_plant == s.u_applied);
}

TEST_CASE("closed loop holds the control when the solver fails")
{
    std::mt19937_64 rng(18);
    const Dictionary dict(2, 1);
    const LinearPlant lin = fixtures::linear_plant();
    const SwitchedKROM model({fit(dict, fixtures::constant_control_pairs(lin, -1.0, 4, 10, 1)),
                              fit(dict, fixtures::constant_control_pairs(lin, 1.0, 4, 10, 2))});
    MpcProblem p = tracking_problem(2, 6, constant_reference(0.5, 1));
    p.admissible = LabelSet{{-1.0, 1.0}};
    ClosedLoopOptions opts;
    opts.initial_control = 1.0;
    opts.switched.budget = 4;
    std::vector<std::string> log;
    opts.log = [&](const std::string& line) { log.push_back(line); };
    const ClosedLoopRecord rec = run_closed_loop(lin, Eigen::Vector2d(0, 0), model, p, 5, opts);
    for (const ClosedLoopStep& s : rec.steps) {
        CHECK(s.solver_failed);
        CHECK(s.u_plant == 1.0);
    }
    CHECK(log.size() == 5);
    CHECK(rec.summarize(p).solver_failures == 5);

    opts.hold_on_failure = false;
    CHECK_THROWS_AS(run_closed_loop(lin, Eigen::Vector2d(0, 0), model, p, 5, opts), SolverError);
}

TEST_CASE("closed loop record csv")
{
    const LocalizedKROM model = linear_bilinear();
    const ModelPlant plant(model);
    MpcProblem p = tracking_problem(2, 4, constant_reference(0.2, 1));
    p.admissible = ControlBox{-1.0, 1.0};
    ClosedLoopOptions opts;
    opts.record_timing = false;
    const ClosedLoopRecord rec =
        run_closed_loop(plant, plant.initial_state(Eigen::Vector2d(0.1, 0.0)), model, p, 6, opts);
    const auto path = std::filesystem::temp_directory_path() / "kroma_test_closed_loop.csv";
    rec.write_csv(path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,t,u_applied,cost_stage,solve_ms,z1,z2,zhat1,zhat2");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);)
        ++rows;
    CHECK(rows == 6);
    std::filesystem::remove(path);

    const ClosedLoopRecord again =
        run_closed_loop(plant, plant.initial_state(Eigen::Vector2d(0.1, 0.0)), model, p, 6, opts);
    for (std::size_t i = 0; i < rec.steps.size(); ++i)
        CHECK(again.steps[i].u_applied == rec.steps[i].u_applied);
}
