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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kroma/edmd.hpp"

namespace kroma {

struct ControlInterval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double u) const noexcept { return u >= lo && u <= hi; }
    bool operator==(const ControlInterval&) const = default;
};

/**
 * Ground-truth sampled system y_{i+1} = Phi(y_i, u_i) with observable map f.
 *
 * `step` advances exactly one sample interval h with u held constant over the
 * whole interval. Implementations are stateless; callers own the state.
 */
class Plant {
public:
    virtual ~Plant() = default;

    virtual std::size_t state_dim() const = 0;
    virtual std::size_t observable_dim() const = 0;
    virtual double h() const = 0;
    virtual ControlInterval admissible() const = 0;

    virtual Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const = 0;
    virtual Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& y) const = 0;
};

/// Classical fourth-order Runge-Kutta over [0, dt] for an autonomous right-hand side.
template <class Rhs>
Eigen::VectorXd rk4_step(const Rhs& rhs, const Eigen::VectorXd& y, double dt)
{
    const Eigen::VectorXd k1 = rhs(y);
    const Eigen::VectorXd k2 = rhs(y + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(y + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(y + dt * k3);
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// ---------------------------------------------------------------------------

struct OdeParams {
    double mu = -0.1;
    double lambda = -1.0;
    /// Exponent applied to the control in the second equation.
    unsigned chi = 1;
    double h = 0.04;
    std::size_t substeps = 4;
    ControlInterval admissible{-1.0, 1.0};

    bool operator==(const OdeParams&) const = default;
};

/**
 * Two-dimensional polynomial system
 *   y1' = mu * y1
 *   y2' = lambda * (y2 - y1^2) + u^chi
 * observed through its full state.
 */
class OdePlant final : public Plant {
public:
    explicit OdePlant(OdeParams params = {});

    const OdeParams& params() const noexcept { return params_; }

    std::size_t state_dim() const override { return 2; }
    std::size_t observable_dim() const override { return 2; }
    double h() const override { return params_.h; }
    ControlInterval admissible() const override { return params_.admissible; }

    Eigen::VectorXd rhs(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const;
    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const override;
    Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& y) const override { return y; }

private:
    OdeParams params_;
};

/// Integer power by repeated multiplication; exact for 0 and 1.
double control_power(double u, unsigned chi) noexcept;

// ---------------------------------------------------------------------------

struct BurgersParams {
    double nu = 0.01;
    double length = 2.0;
    std::size_t n_cells = 256;
    double h = 0.5;
    std::size_t substeps = 500;
    /// Center and width of the Gaussian control shape function.
    double shape_center = 0.5;
    double shape_width = 0.15;
    /// Overrides the Gaussian when non-empty; must have n_cells entries.
    std::vector<double> shape;
    std::vector<double> observation_points{0.0, 0.5, 1.0, 1.5};
    ControlInterval admissible{-0.1, 0.1};
    /// Fraction of the RK4 stability limit that a substep may use.
    double safety = 0.5;

    bool operator==(const BurgersParams&) const = default;
};

/**
 * Viscous Burgers equation y_t - nu y_xx + (y^2/2)_x = u(t) chi_u(x) on a
 * periodic grid x_j = j * L / n.
 *
 * Advection uses the divergence-form flux (y_j^2 + y_j y_{j+1} + y_{j+1}^2)/6,
 * diffusion the central second difference; both telescope under periodic
 * wrap, so the spatial mean only changes through the source term.
 */
class BurgersPlant final : public Plant {
public:
    explicit BurgersPlant(BurgersParams params = {});

    const BurgersParams& params() const noexcept { return params_; }
    double dx() const noexcept { return dx_; }
    double substep() const noexcept { return params_.h / static_cast<double>(params_.substeps); }
    const Eigen::VectorXd& grid() const noexcept { return grid_; }
    const Eigen::VectorXd& shape() const noexcept { return shape_; }
    const std::vector<std::size_t>& observation_nodes() const noexcept { return obs_nodes_; }
    /// Snapped node position minus requested position, per observation point.
    const std::vector<double>& observation_offsets() const noexcept { return obs_offsets_; }

    /// Largest substep admissible for a field with the given sup norm.
    double admissible_substep(double max_abs) const noexcept;

    std::size_t state_dim() const override { return params_.n_cells; }
    std::size_t observable_dim() const override { return obs_nodes_.size(); }
    double h() const override { return params_.h; }
    ControlInterval admissible() const override { return params_.admissible; }

    Eigen::VectorXd rhs(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const;
    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const override;
    Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& y) const override;

    /// Samples a function of x on the grid.
    template <class F>
    Eigen::VectorXd sample(F&& f) const
    {
        Eigen::VectorXd v(grid_.size());
        for (Eigen::Index j = 0; j < grid_.size(); ++j)
            v(j) = f(grid_(j));
        return v;
    }

private:
    BurgersParams params_;
    double dx_;
    Eigen::VectorXd grid_;
    Eigen::VectorXd shape_;
    std::vector<std::size_t> obs_nodes_;
    std::vector<double> obs_offsets_;
};

// ---------------------------------------------------------------------------

/// Linear system y' = A y + b u, discretized exactly over h; full state observed.
class LinearPlant final : public Plant {
public:
    LinearPlant(Eigen::MatrixXd a, Eigen::VectorXd b, double h,
                ControlInterval admissible = {-1.0, 1.0});

    const Eigen::MatrixXd& state_transition() const noexcept { return ad_; }
    const Eigen::VectorXd& input_map() const noexcept { return bd_; }

    std::size_t state_dim() const override { return static_cast<std::size_t>(ad_.rows()); }
    std::size_t observable_dim() const override { return state_dim(); }
    double h() const override { return h_; }
    ControlInterval admissible() const override { return admissible_; }

    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const override;
    Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& y) const override { return y; }

private:
    Eigen::MatrixXd ad_;
    Eigen::VectorXd bd_;
    double h_;
    ControlInterval admissible_;
};

// ---------------------------------------------------------------------------

struct WakeParams {
    double h = 0.25;
    std::size_t substeps = 10;
    double growth = -0.05;
    double frequency = 1.0;
    double drag_rate = 1.0;
    double drag_base = 1.2;
    double drag_gain = 0.5;
    ControlInterval admissible{-2.0, 2.0};

    bool operator==(const WakeParams&) const = default;
};

/**
 * Eight-observable stand-in for a recorded cylinder wake: lift, drag and six
 * wake velocities. The lift/first velocity pair is a damped forced
 * oscillator, drag relaxes towards a quadratic function of the oscillation
 * amplitude, the remaining velocities are lagged filters of the oscillator.
 * Used to synthesize replay archives.
 */
class WakeSurrogatePlant final : public Plant {
public:
    explicit WakeSurrogatePlant(WakeParams params = {});

    std::size_t state_dim() const override { return 8; }
    std::size_t observable_dim() const override { return 8; }
    double h() const override { return params_.h; }
    ControlInterval admissible() const override { return params_.admissible; }

    Eigen::VectorXd rhs(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const;
    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& y, double u) const override;
    Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& y) const override { return y; }

private:
    WakeParams params_;
};

// ---------------------------------------------------------------------------

/// One recorded run: row-aligned times, observables (q x N) and controls.
/// controls[i] is held on [t_i, t_{i+1}); the last entry carries no pair.
struct EpisodeRecord {
    long id = 0;
    std::vector<double> times;
    Eigen::MatrixXd observables;
    std::vector<double> controls;

    std::size_t samples() const noexcept { return times.size(); }
};

/// Recorded or simulated snapshot data grouped in episodes.
struct SnapshotArchive {
    std::size_t q = 0;
    double h = 0.0;
    std::vector<EpisodeRecord> episodes;

    /// Sorted distinct control values that start at least one pair.
    std::vector<double> control_labels() const;
};

/// Runs `plant` from y0 applying controls[i] on step i; returns samples of
/// the observable at every step (controls.size() + 1 samples).
EpisodeRecord simulate(const Plant& plant, const Eigen::Ref<const Eigen::VectorXd>& y0,
                       const std::vector<double>& controls, long episode_id = 0);

/// Groups consecutive pairs of every episode by the control held during the
/// step. Pairs never cross episode boundaries; labels match exactly.
std::map<double, SnapshotSet> group_by_control(const SnapshotArchive& archive);

/// Same grouping for a single episode.
std::map<double, SnapshotSet> group_by_control(const EpisodeRecord& episode, double h);

/// Piecewise-constant control sequences of length `steps`.
namespace schedule {

std::vector<double> constant(double u, std::size_t steps);

/// Cycles through (value, hold) segments until `steps` entries are produced.
std::vector<double> fixed_switching(const std::vector<std::pair<double, std::size_t>>& pattern,
                                    std::size_t steps);

/// Random label order and random hold lengths in [min_hold, max_hold].
std::vector<double> random_switching(const std::vector<double>& labels, std::size_t min_hold,
                                     std::size_t max_hold, std::size_t steps, std::uint64_t seed);

/// offset + amplitude * sin(omega * t_i), t_i = t0 + i*h.
std::vector<double> sinusoid(double offset, double amplitude, double omega, double h,
                             std::size_t steps, double t0 = 0.0);

} // namespace schedule

// ---------------------------------------------------------------------------
// Snapshot CSV files: header `episode,t,u,z1,...,zq`, rows sorted by
// (episode, t), with a JSON sidecar `<stem>.meta.json` declaring q, h and the
// control labels present.

std::filesystem::path sidecar_path(const std::filesystem::path& csv);

void write_archive(const SnapshotArchive& archive, const std::filesystem::path& csv,
                   const std::map<std::string, std::string>& extra_meta = {});

/// Reads one CSV file, or every `*.csv` in a directory in name order.
SnapshotArchive read_archive(const std::filesystem::path& path);

} // namespace kroma
