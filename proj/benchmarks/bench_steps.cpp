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
#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kroma/kroma.hpp"

using namespace kroma;

namespace {

KoopmanModel random_model(const Dictionary& dict, double label, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    const auto k = static_cast<Eigen::Index>(dict.size());
    Eigen::MatrixXd t = Eigen::MatrixXd::NullaryExpr(k, k, [&] { return d(rng); });
    t.diagonal().array() += 0.5;
    return KoopmanModel(dict, t.transpose(), label, 0.1, 0.0);
}

LocalizedKROM random_krom(std::size_t q, std::size_t order)
{
    const Dictionary dict(q, order);
    return LocalizedKROM(std::vector<KoopmanModel>{random_model(dict, 0.0, 1), random_model(dict, 1.0, 2)});
}

void BM_OdePlantStep(benchmark::State& state)
{
    const OdePlant plant;
    Eigen::VectorXd y = Eigen::Vector2d(1.0, 2.0);
    for (auto _ : state) {
        y = plant.step(y, 0.3);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_OdePlantStep);

void BM_BurgersPlantStep(benchmark::State& state)
{
    const BurgersPlant plant;
    Eigen::VectorXd y = plant.sample([](double x) { return 0.05 * std::sin(std::numbers::pi * x); });
    for (auto _ : state) {
        y = plant.step(y, 0.025);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_BurgersPlantStep)->Unit(benchmark::kMillisecond);

// Lifted bilinear step at the dictionary sizes of the three recipes (k = 6, 35, 45).
void BM_KromStep(benchmark::State& state)
{
    const auto q = static_cast<std::size_t>(state.range(0));
    const auto order = static_cast<std::size_t>(state.range(1));
    const LocalizedKROM model = random_krom(q, order);
    Eigen::VectorXd psi = model.dictionary().lift(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(q), 0.1));
    const Eigen::VectorXd psi0 = psi;
    std::size_t i = 0;
    for (auto _ : state) {
        psi = model.step(psi, 0.5);
        if (++i % 64 == 0)
            psi = psi0;
        benchmark::DoNotOptimize(psi.data());
    }
    state.counters["k"] = static_cast<double>(model.dictionary().size());
}
BENCHMARK(BM_KromStep)->Args({2, 2})->Args({4, 3})->Args({8, 2});

void BM_Lift(benchmark::State& state)
{
    const Dictionary dict(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(state.range(0), 0.1, 0.9);
    for (auto _ : state) {
        Eigen::VectorXd psi = dict.lift(z);
        benchmark::DoNotOptimize(psi.data());
    }
}
BENCHMARK(BM_Lift)->Args({2, 2})->Args({4, 3})->Args({8, 2});

void BM_Fit(benchmark::State& state)
{
    const Dictionary dict(4, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const auto m = state.range(0);
    SnapshotSet data;
    data.z = Eigen::MatrixXd::NullaryExpr(4, m, [&] { return d(rng); });
    data.z_next = 0.9 * data.z;
    data.h = 0.5;
    for (auto _ : state) {
        KoopmanModel model = fit(dict, data);
        benchmark::DoNotOptimize(model.k_matrix().data());
    }
}
BENCHMARK(BM_Fit)->Arg(120)->Arg(1000)->Unit(benchmark::kMicrosecond);

MpcProblem tracking(std::size_t horizon)
{
    MpcProblem p;
    p.horizon = horizon;
    p.cost.components = {0};
    p.cost.weights = {1.0};
    p.cost.reference = constant_reference(0.3, 1);
    p.h = 0.1;
    return p;
}

void BM_SolveContinuous(benchmark::State& state)
{
    const LocalizedKROM model = random_krom(4, 3);
    MpcProblem p = tracking(static_cast<std::size_t>(state.range(0)));
    p.admissible = ControlBox{0.0, 1.0};
    const std::vector<double> warm(p.horizon, 0.5);
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(4, 0.1);
    for (auto _ : state) {
        ContinuousSolution sol = solve_continuous(model, z, p, warm);
        benchmark::DoNotOptimize(sol.cost);
    }
}
BENCHMARK(BM_SolveContinuous)->Arg(10)->Arg(20)->Unit(benchmark::kMicrosecond);

void BM_SolveSwitched(benchmark::State& state)
{
    const Dictionary dict(2, 2);
    const SwitchedKROM model({random_model(dict, 0.0, 1), random_model(dict, 1.0, 2), random_model(dict, 2.0, 3)});
    MpcProblem p = tracking(static_cast<std::size_t>(state.range(0)));
    p.admissible = LabelSet{{0.0, 1.0, 2.0}};
    const Eigen::Vector2d z(0.1, 0.2);
    for (auto _ : state) {
        SwitchedSolution sol = solve_switched(model, z, p);
        benchmark::DoNotOptimize(sol.cost);
    }
}
BENCHMARK(BM_SolveSwitched)->Arg(4)->Arg(6)->Arg(8)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
