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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kroma/edmd.hpp"

namespace kroma {

/// Family of Koopman models for a finite set of constant controls.
class SwitchedKROM {
public:
    /// Models must share dictionary and h; labels must be strictly increasing.
    explicit SwitchedKROM(std::vector<KoopmanModel> models);

    const Dictionary& dictionary() const noexcept { return models_.front().dictionary(); }
    double h() const noexcept { return models_.front().h(); }
    std::size_t size() const noexcept { return models_.size(); }
    const std::vector<double>& labels() const noexcept { return labels_; }
    const std::vector<KoopmanModel>& models() const noexcept { return models_; }
    const KoopmanModel& model(std::size_t index) const { return models_.at(index); }

    /// Index of an exactly matching label; throws DataError if absent.
    std::size_t index_of(double label) const;

private:
    std::vector<KoopmanModel> models_;
    std::vector<double> labels_;
};

enum class OutOfRange {
    reject,
    clamp,
};

/**
 * Bilinear model psi+ = A psi + B psi (u - u_a) / (u_b - u_a) with
 * A = K_a^T and B = K_b^T - K_a^T.
 *
 * Steps are evaluated as (1 - a) K_a^T psi + a K_b^T psi with
 * a = (u - u_a) / (u_b - u_a). This is the same affine map, and at the two
 * endpoints it reproduces the endpoint models bit-for-bit.
 */
class BilinearKROM {
public:
    BilinearKROM(const KoopmanModel& lower, const KoopmanModel& upper);

    const Dictionary& dictionary() const noexcept { return dict_; }
    double h() const noexcept { return h_; }
    double u_a() const noexcept { return u_a_; }
    double u_b() const noexcept { return u_b_; }
    const Eigen::MatrixXd& a() const noexcept { return a_; }
    const Eigen::MatrixXd& b() const noexcept { return b_; }
    /// K_b^T as fitted; A + B equals it up to rounding.
    const Eigen::MatrixXd& upper() const noexcept { return upper_; }

    bool covers(double u) const noexcept { return u >= u_a_ && u <= u_b_; }
    /// Interpolation weight (u - u_a) / (u_b - u_a).
    double weight(double u) const noexcept { return (u - u_a_) / (u_b_ - u_a_); }

    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& psi, double u,
                         OutOfRange policy = OutOfRange::reject) const;

private:
    Dictionary dict_;
    double h_;
    double u_a_;
    double u_b_;
    Eigen::MatrixXd a_;
    Eigen::MatrixXd b_;
    Eigen::MatrixXd upper_;
};

BilinearKROM make_bilinear(const KoopmanModel& lower, const KoopmanModel& upper);

/**
 * Piecewise bilinear model over contiguous control intervals
 * [u_0, u_1], [u_1, u_2], ... Neighbouring pieces share the Koopman matrix
 * fitted at their common knot, so the model is continuous in u. A control on
 * an interior knot is dispatched to the upper piece.
 */
class LocalizedKROM {
public:
    /// Builds pieces between consecutive models (sorted by label, at least two).
    explicit LocalizedKROM(const std::vector<KoopmanModel>& models);
    explicit LocalizedKROM(const SwitchedKROM& family);
    explicit LocalizedKROM(BilinearKROM single);

    const Dictionary& dictionary() const noexcept { return pieces_.front().dictionary(); }
    double h() const noexcept { return pieces_.front().h(); }
    const std::vector<BilinearKROM>& pieces() const noexcept { return pieces_; }
    std::vector<double> knots() const;
    double lo() const noexcept { return pieces_.front().u_a(); }
    double hi() const noexcept { return pieces_.back().u_b(); }
    bool covers(double u) const noexcept { return u >= lo() && u <= hi(); }

    std::size_t piece_index(double u) const;
    const BilinearKROM& piece(double u) const { return pieces_[piece_index(u)]; }

    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& psi, double u,
                         OutOfRange policy = OutOfRange::reject) const;

private:
    std::vector<BilinearKROM> pieces_;
};

/// Lifted trajectory (k x (p+1)); lift once, step per control.
Eigen::MatrixXd rollout_lifted(const LocalizedKROM& model,
                               const Eigen::Ref<const Eigen::VectorXd>& z0,
                               std::span<const double> controls);

/// Observable trajectory (q x (p+1)) of a bilinear or localized model.
Eigen::MatrixXd rollout(const LocalizedKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z0,
                        std::span<const double> controls,
                        Propagation mode = Propagation::lift_once);
Eigen::MatrixXd rollout(const BilinearKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z0,
                        std::span<const double> controls,
                        Propagation mode = Propagation::lift_once);

/// Observable trajectory dispatching one Koopman matrix per step by label.
Eigen::MatrixXd switched_rollout(const SwitchedKROM& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& z0,
                                 std::span<const double> labels,
                                 Propagation mode = Propagation::lift_once);

struct RelativeErrorSeries {
    std::vector<double> values;
    /// True where the reference is zero; such samples carry no value.
    std::vector<bool> masked;
    double max = 0.0;
    double mean = 0.0;
};

/// |model - reference| / |reference| per sample of one component.
RelativeErrorSeries relative_error(const Eigen::Ref<const Eigen::MatrixXd>& reference,
                                   const Eigen::Ref<const Eigen::MatrixXd>& model,
                                   std::size_t component);

} // namespace kroma
