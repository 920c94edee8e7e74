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

// Shared data-generation helpers for the test suites.

#include <cstdint>
#include <random>

#include "kroma/edmd.hpp"
#include "kroma/plants.hpp"

namespace kroma::fixtures {

/// Pairs from `trajectories` runs of `steps` steps at constant `u`, initial
/// states uniform in [lo, hi]^n.
inline SnapshotSet constant_control_pairs(const Plant& plant, double u, std::size_t trajectories,
                                          std::size_t steps, std::uint64_t seed, double lo = -2.0,
                                          double hi = 2.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    SnapshotSet out;
    for (std::size_t t = 0; t < trajectories; ++t) {
        Eigen::VectorXd y0(static_cast<Eigen::Index>(plant.state_dim()));
        for (Eigen::Index i = 0; i < y0.size(); ++i)
            y0(i) = dist(rng);
        const EpisodeRecord rec = simulate(plant, y0, schedule::constant(u, steps));
        for (auto& [label, set] : group_by_control(rec, plant.h()))
            out.append(set);
    }
    return out;
}

/// A stable two-state linear plant with an oscillatory mode.
inline LinearPlant linear_plant(double h = 0.1, ControlInterval box = {-1.0, 1.0})
{
    Eigen::Matrix2d a;
    a << -0.3, 1.0, -1.0, -0.2;
    return LinearPlant(a, Eigen::Vector2d(0.5, 1.0), h, box);
}

} // namespace kroma::fixtures
