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
#include "kroma/edmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "kroma/error.hpp"

namespace kroma {

void SnapshotSet::validate() const
{
    if (z.cols() == 0)
        throw DataError("snapshots: at least one pair is required");
    if (z.rows() != z_next.rows() || z.cols() != z_next.cols())
        throw DataError("snapshots: Z and Z_next must have identical shape");
    if (!z.allFinite() || !z_next.allFinite())
        throw DataError("snapshots: non-finite entries");
}

SnapshotSet SnapshotSet::from_trajectory(const Eigen::Ref<const Eigen::MatrixXd>& trajectory,
                                         double control, double h)
{
    if (trajectory.cols() < 2)
        throw DataError("snapshots: a trajectory needs at least two samples");
    const Eigen::Index m = trajectory.cols() - 1;
    SnapshotSet s;
    s.z = trajectory.leftCols(m);
    s.z_next = trajectory.rightCols(m);
    s.control = control;
    s.h = h;
    return s;
}

void SnapshotSet::append(const SnapshotSet& other)
{
    if (z.cols() == 0) {
        *this = other;
        return;
    }
    if (other.control != control || other.h != h || other.z.rows() != z.rows())
        throw DataError("snapshots: cannot merge sets with different control, h or q");
    const Eigen::Index m = z.cols();
    const Eigen::Index n = other.z.cols();
    z.conservativeResize(Eigen::NoChange, m + n);
    z_next.conservativeResize(Eigen::NoChange, m + n);
    z.rightCols(n) = other.z;
    z_next.rightCols(n) = other.z_next;
}

std::pair<SnapshotSet, SnapshotSet> split_holdout(const SnapshotSet& data, double fraction)
{
    data.validate();
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DataError("snapshots: hold-out fraction must lie in (0, 1)");
    const Eigen::Index m = data.z.cols();
    if (m < 2)
        throw DataError("snapshots: need at least two pairs to split off a hold-out set");
    const auto test = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::ceil(fraction * static_cast<double>(m))), 1, m - 1);
    SnapshotSet train{data.z.leftCols(m - test), data.z_next.leftCols(m - test), data.control,
                      data.h};
    SnapshotSet held{data.z.rightCols(test), data.z_next.rightCols(test), data.control, data.h};
    return {std::move(train), std::move(held)};
}

KoopmanModel::KoopmanModel(Dictionary dict, Eigen::MatrixXd k, double control, double h,
                           double fit_residual)
    : dict_(std::move(dict)), k_(std::move(k)), control_(control), h_(h),
      fit_residual_(fit_residual)
{
    const auto n = static_cast<Eigen::Index>(dict_.size());
    if (k_.rows() != n || k_.cols() != n)
        throw DataError("koopman model: K must be " + std::to_string(n) + "x" + std::to_string(n));
    if (!k_.allFinite())
        throw DataError("koopman model: K has non-finite entries");
    kt_ = k_.transpose();
}

KoopmanModel fit(const Dictionary& dict, const SnapshotSet& data, const FitOptions& options)
{
    data.validate();
    if (data.q() != dict.q())
        throw DataError("fit: snapshot dimension " + std::to_string(data.q())
                        + " does not match dictionary q=" + std::to_string(dict.q()));
    if (!(options.svd_tol > 0.0 && options.svd_tol < 1.0))
        throw DataError("fit: svd_tol must lie in (0, 1)");
    if (options.ridge < 0.0)
        throw DataError("fit: ridge weight must be non-negative");
    if (data.z.isZero(0.0))
        throw DataError("fit: snapshot matrix Z is identically zero");

    const Eigen::MatrixXd psi = dict.lift_batch(data.z);
    const Eigen::MatrixXd psi_next = dict.lift_batch(data.z_next);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(psi, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sigma = svd.singularValues();
    const double cutoff = options.svd_tol * sigma(0);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sigma.size());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma(i) > cutoff)
            inv(i) = options.ridge > 0.0 ? sigma(i) / (sigma(i) * sigma(i) + options.ridge)
                                         : 1.0 / sigma(i);
    }
    // K^T = Psi_next V S^+ U^T
    const Eigen::MatrixXd kt =
        (psi_next * svd.matrixV()) * inv.asDiagonal() * svd.matrixU().transpose();
    const double residual = (psi_next - kt * psi).norm();
    return KoopmanModel(dict, kt.transpose(), data.control, data.h, residual);
}

double lifted_residual(const KoopmanModel& model, const SnapshotSet& data)
{
    data.validate();
    const Dictionary& dict = model.dictionary();
    return (dict.lift_batch(data.z_next) - model.transition() * dict.lift_batch(data.z)).norm();
}

double one_step_error(const KoopmanModel& model, const SnapshotSet& data)
{
    data.validate();
    const Dictionary& dict = model.dictionary();
    const Eigen::MatrixXd predicted =
        dict.project_batch(model.transition() * dict.lift_batch(data.z));
    return (predicted - data.z_next).norm() / std::sqrt(static_cast<double>(data.pairs()));
}

Eigen::VectorXd predict_lifted(const KoopmanModel& model,
                               const Eigen::Ref<const Eigen::VectorXd>& psi, std::size_t steps)
{
    if (psi.size() != model.transition().cols())
        throw DataError("predict_lifted: lifted vector has wrong length");
    Eigen::VectorXd g = psi;
    for (std::size_t i = 0; i < steps; ++i)
        g = model.transition() * g;
    return g;
}

Eigen::MatrixXd predict_observable(const KoopmanModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& z0, std::size_t steps,
                                   Propagation mode)
{
    const Dictionary& dict = model.dictionary();
    if (!z0.allFinite())
        throw DataError("predict_observable: non-finite initial observable");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dict.q()), static_cast<Eigen::Index>(steps + 1));
    out.col(0) = z0;
    Eigen::VectorXd g = dict.lift(z0);
    for (std::size_t i = 1; i <= steps; ++i) {
        g = model.transition() * g;
        const Eigen::VectorXd z = dict.project(g);
        out.col(static_cast<Eigen::Index>(i)) = z;
        if (mode == Propagation::relift)
            g = dict.lift(z);
    }
    return out;
}

std::vector<std::complex<double>> spectrum(const KoopmanModel& model)
{
    Eigen::EigenSolver<Eigen::MatrixXd> solver(model.transition(), false);
    if (solver.info() != Eigen::Success)
        throw DataError("spectrum: eigenvalue iteration did not converge");
    const Eigen::VectorXcd ev = solver.eigenvalues();
    std::vector<std::complex<double>> out(ev.data(), ev.data() + ev.size());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        const double ma = std::abs(a);
        const double mb = std::abs(b);
        if (std::abs(ma - mb) > 1e-12 * std::max({1.0, ma, mb}))
            return ma > mb;
        return std::arg(a) < std::arg(b);
    });
    return out;
}

std::vector<ConvergenceRow> convergence_scan(const SnapshotSampler& sampler,
                                             const SnapshotSet& held_out,
                                             const std::vector<std::size_t>& orders,
                                             const std::vector<std::size_t>& sample_counts,
                                             const FitOptions& options)
{
    if (orders.empty() || sample_counts.empty())
        throw DataError("convergence_scan: ladders must be nonempty");
    if (!std::is_sorted(orders.begin(), orders.end())
        || !std::is_sorted(sample_counts.begin(), sample_counts.end()))
        throw DataError("convergence_scan: ladders must be monotone");
    std::vector<ConvergenceRow> rows;
    for (const std::size_t m : sample_counts) {
        const SnapshotSet train = sampler(m);
        for (const std::size_t order : orders) {
            const Dictionary dict(train.q(), order);
            const KoopmanModel model = fit(dict, train, options);
            rows.push_back({order, dict.size(), train.pairs(), model.fit_residual(),
                            one_step_error(model, held_out)});
        }
    }
    return rows;
}

} // namespace kroma
