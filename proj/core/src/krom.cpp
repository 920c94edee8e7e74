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
#include "kroma/krom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kroma/error.hpp"

namespace kroma {

namespace {

void require_compatible(const KoopmanModel& a, const KoopmanModel& b)
{
    if (!(a.dictionary() == b.dictionary()))
        throw DataError("krom: models use different dictionaries");
    if (a.h() != b.h())
        throw DataError("krom: models use different sample steps");
}

} // namespace

// --- SwitchedKROM -------------------------------------------------------------

SwitchedKROM::SwitchedKROM(std::vector<KoopmanModel> models) : models_(std::move(models))
{
    if (models_.empty())
        throw DataError("switched krom: at least one model is required");
    for (std::size_t i = 0; i < models_.size(); ++i) {
        if (i > 0) {
            require_compatible(models_[0], models_[i]);
            if (!(models_[i].control() > models_[i - 1].control()))
                throw DataError("switched krom: labels must be strictly increasing");
        }
        labels_.push_back(models_[i].control());
    }
}

std::size_t SwitchedKROM::index_of(double label) const
{
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end())
        throw DataError("switched krom: unknown control label " + std::to_string(label));
    return static_cast<std::size_t>(it - labels_.begin());
}

// --- BilinearKROM -------------------------------------------------------------

BilinearKROM::BilinearKROM(const KoopmanModel& lower, const KoopmanModel& upper)
    : dict_(lower.dictionary()), h_(lower.h()), u_a_(lower.control()), u_b_(upper.control())
{
    require_compatible(lower, upper);
    if (!(u_a_ < u_b_))
        throw DataError("bilinear krom: control label of the first model must be smaller ("
                        + std::to_string(u_a_) + " vs " + std::to_string(u_b_) + ")");
    a_ = lower.transition();
    upper_ = upper.transition();
    b_ = upper_ - a_;
}

Eigen::VectorXd BilinearKROM::step(const Eigen::Ref<const Eigen::VectorXd>& psi, double u,
                                   OutOfRange policy) const
{
    if (psi.size() != a_.cols())
        throw DataError("bilinear krom: lifted vector has wrong length");
    if (!covers(u)) {
        if (policy == OutOfRange::reject || !std::isfinite(u))
            throw DataError("bilinear krom: control " + std::to_string(u) + " outside ["
                            + std::to_string(u_a_) + ", " + std::to_string(u_b_) + "]");
        u = std::clamp(u, u_a_, u_b_);
    }
    const double w = weight(u);
    const Eigen::VectorXd lo = a_ * psi;
    const Eigen::VectorXd hi = upper_ * psi;
    return (1.0 - w) * lo + w * hi;
}

BilinearKROM make_bilinear(const KoopmanModel& lower, const KoopmanModel& upper)
{
    return BilinearKROM(lower, upper);
}

// --- LocalizedKROM -------------------------------------------------------------

LocalizedKROM::LocalizedKROM(const std::vector<KoopmanModel>& models)
{
    if (models.size() < 2)
        throw DataError("localized krom: at least two models are required");
    for (std::size_t i = 0; i + 1 < models.size(); ++i)
        pieces_.emplace_back(models[i], models[i + 1]);
}

LocalizedKROM::LocalizedKROM(const SwitchedKROM& family) : LocalizedKROM(family.models()) {}

LocalizedKROM::LocalizedKROM(BilinearKROM single) { pieces_.push_back(std::move(single)); }

std::vector<double> LocalizedKROM::knots() const
{
    std::vector<double> k;
    for (const BilinearKROM& p : pieces_)
        k.push_back(p.u_a());
    k.push_back(pieces_.back().u_b());
    return k;
}

std::size_t LocalizedKROM::piece_index(double u) const
{
    if (!covers(u))
        throw DataError("localized krom: control " + std::to_string(u) + " outside ["
                        + std::to_string(lo()) + ", " + std::to_string(hi()) + "]");
    // first piece whose upper end lies strictly above u; the last piece keeps its endpoint
    for (std::size_t i = 0; i + 1 < pieces_.size(); ++i)
        if (u < pieces_[i].u_b())
            return i;
    return pieces_.size() - 1;
}

Eigen::VectorXd LocalizedKROM::step(const Eigen::Ref<const Eigen::VectorXd>& psi, double u,
                                    OutOfRange policy) const
{
    if (!covers(u)) {
        if (policy == OutOfRange::reject || !std::isfinite(u))
            return pieces_[piece_index(u)].step(psi, u); // throws
        u = std::clamp(u, lo(), hi());
    }
    return pieces_[piece_index(u)].step(psi, u);
}

// --- rollouts -------------------------------------------------------------------

Eigen::MatrixXd rollout_lifted(const LocalizedKROM& model,
                               const Eigen::Ref<const Eigen::VectorXd>& z0,
                               std::span<const double> controls)
{
    const Dictionary& dict = model.dictionary();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dict.size()),
                        static_cast<Eigen::Index>(controls.size() + 1));
    out.col(0) = dict.lift(z0);
    for (std::size_t i = 0; i < controls.size(); ++i)
        out.col(static_cast<Eigen::Index>(i + 1)) =
            model.step(out.col(static_cast<Eigen::Index>(i)), controls[i]);
    return out;
}

Eigen::MatrixXd rollout(const LocalizedKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z0,
                        std::span<const double> controls, Propagation mode)
{
    const Dictionary& dict = model.dictionary();
    if (!z0.allFinite())
        throw DataError("rollout: non-finite initial observable");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dict.q()),
                        static_cast<Eigen::Index>(controls.size() + 1));
    out.col(0) = z0;
    Eigen::VectorXd g = dict.lift(z0);
    for (std::size_t i = 0; i < controls.size(); ++i) {
        g = model.step(g, controls[i]);
        const Eigen::VectorXd z = dict.project(g);
        out.col(static_cast<Eigen::Index>(i + 1)) = z;
        if (mode == Propagation::relift)
            g = dict.lift(z);
    }
    return out;
}

Eigen::MatrixXd rollout(const BilinearKROM& model, const Eigen::Ref<const Eigen::VectorXd>& z0,
                        std::span<const double> controls, Propagation mode)
{
    return rollout(LocalizedKROM(model), z0, controls, mode);
}

Eigen::MatrixXd switched_rollout(const SwitchedKROM& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& z0,
                                 std::span<const double> labels, Propagation mode)
{
    const Dictionary& dict = model.dictionary();
    if (!z0.allFinite())
        throw DataError("switched rollout: non-finite initial observable");
    std::vector<std::size_t> index(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        index[i] = model.index_of(labels[i]);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dict.q()),
                        static_cast<Eigen::Index>(labels.size() + 1));
    out.col(0) = z0;
    Eigen::VectorXd g = dict.lift(z0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        g = model.model(index[i]).transition() * g;
        const Eigen::VectorXd z = dict.project(g);
        out.col(static_cast<Eigen::Index>(i + 1)) = z;
        if (mode == Propagation::relift)
            g = dict.lift(z);
    }
    return out;
}

RelativeErrorSeries relative_error(const Eigen::Ref<const Eigen::MatrixXd>& reference,
                                   const Eigen::Ref<const Eigen::MatrixXd>& model,
                                   std::size_t component)
{
    if (reference.rows() != model.rows() || reference.cols() != model.cols())
        throw DataError("relative_error: trajectories differ in shape");
    if (component >= static_cast<std::size_t>(reference.rows()))
        throw DataError("relative_error: component index out of range");
    const auto row = static_cast<Eigen::Index>(component);
    RelativeErrorSeries out;
    out.values.resize(static_cast<std::size_t>(reference.cols()), 0.0);
    out.masked.resize(out.values.size(), false);
    std::size_t used = 0;
    double sum = 0.0;
    for (Eigen::Index c = 0; c < reference.cols(); ++c) {
        const double ref = reference(row, c);
        const auto i = static_cast<std::size_t>(c);
        if (ref == 0.0) {
            out.masked[i] = true;
            out.values[i] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double e = std::abs(model(row, c) - ref) / std::abs(ref);
        out.values[i] = e;
        out.max = std::max(out.max, e);
        sum += e;
        ++used;
    }
    out.mean = used > 0 ? sum / static_cast<double>(used) : 0.0;
    return out;
}

} // namespace kroma
