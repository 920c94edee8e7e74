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

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "kroma/dictionary.hpp"

namespace kroma {

/**
 * Paired snapshot matrices recorded under one constant control value.
 *
 * Column i of `z_next` is the observable one sample step after column i of
 * `z`.
 */
struct SnapshotSet {
    Eigen::MatrixXd z;
    Eigen::MatrixXd z_next;
    double control = 0.0;
    double h = 0.0;

    std::size_t q() const noexcept { return static_cast<std::size_t>(z.rows()); }
    std::size_t pairs() const noexcept { return static_cast<std::size_t>(z.cols()); }

    /// Throws DataError if shapes disagree or the set is empty.
    void validate() const;

    /// Consecutive pairs of one trajectory given as a q x (m + 1) matrix.
    static SnapshotSet from_trajectory(const Eigen::Ref<const Eigen::MatrixXd>& trajectory,
                                       double control, double h);

    /// Appends the pairs of `other`; control and h must match exactly.
    void append(const SnapshotSet& other);
};

/// Splits off the last `fraction` of columns as a held-out set.
std::pair<SnapshotSet, SnapshotSet> split_holdout(const SnapshotSet& data, double fraction = 0.2);

struct FitOptions {
    /// Singular values below svd_tol * sigma_max are treated as zero.
    double svd_tol = 1e-10;
    /// Tikhonov weight; 0 gives the plain Moore-Penrose pseudoinverse.
    double ridge = 0.0;
};

/**
 * Finite-dimensional Koopman approximation for one constant control.
 *
 * `k_matrix()` is K in the transposed convention, so one lifted step reads
 * psi(z_{i+1}) = K^T psi(z_i); `transition()` returns K^T directly.
 */
class KoopmanModel {
public:
    KoopmanModel(Dictionary dict, Eigen::MatrixXd k, double control, double h,
                 double fit_residual);

    const Dictionary& dictionary() const noexcept { return dict_; }
    const Eigen::MatrixXd& k_matrix() const noexcept { return k_; }
    const Eigen::MatrixXd& transition() const noexcept { return kt_; }
    double control() const noexcept { return control_; }
    double h() const noexcept { return h_; }
    double fit_residual() const noexcept { return fit_residual_; }

private:
    Dictionary dict_;
    Eigen::MatrixXd k_;
    Eigen::MatrixXd kt_;
    double control_;
    double h_;
    double fit_residual_;
};

/// Least-squares fit K^T = Psi_next * pinv(Psi) via a truncated SVD.
KoopmanModel fit(const Dictionary& dict, const SnapshotSet& data, const FitOptions& options = {});

/// ||Psi_next - K^T Psi||_F for the given pairs.
double lifted_residual(const KoopmanModel& model, const SnapshotSet& data);

/// Root-mean-square one-step observable error over the given pairs.
double one_step_error(const KoopmanModel& model, const SnapshotSet& data);

/// (K^T)^steps * psi.
Eigen::VectorXd predict_lifted(const KoopmanModel& model,
                               const Eigen::Ref<const Eigen::VectorXd>& psi, std::size_t steps);

enum class Propagation {
    /// Lift z0 once and iterate in lifted space.
    lift_once,
    /// Project and re-lift after every step.
    relift,
};

/// Observable trajectory q x (steps + 1) starting at z0.
Eigen::MatrixXd predict_observable(const KoopmanModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& z0, std::size_t steps,
                                   Propagation mode = Propagation::lift_once);

/// Eigenvalues of K^T, sorted by modulus descending then by argument.
std::vector<std::complex<double>> spectrum(const KoopmanModel& model);

struct ConvergenceRow {
    std::size_t max_order = 0;
    std::size_t k = 0;
    std::size_t m = 0;
    double fit_residual = 0.0;
    double test_error = 0.0;
};

/// Draws m training pairs; must be deterministic in m.
using SnapshotSampler = std::function<SnapshotSet(std::size_t m)>;

/**
 * Fits one model per (order, sample count) and reports training residual and
 * held-out one-step error. Report only, nothing is asserted.
 */
std::vector<ConvergenceRow> convergence_scan(const SnapshotSampler& sampler,
                                             const SnapshotSet& held_out,
                                             const std::vector<std::size_t>& orders,
                                             const std::vector<std::size_t>& sample_counts,
                                             const FitOptions& options = {});

} // namespace kroma
