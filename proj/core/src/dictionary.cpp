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
#include "kroma/dictionary.hpp"

#include <cmath>
#include <string>

#include "kroma/error.hpp"

namespace kroma {

namespace {

// Appends all tuples of total degree `degree` over variables [var, q) in
// descending lexicographic order.
void append_degree(std::size_t var, unsigned degree, Exponents& current,
                   std::vector<Exponents>& out)
{
    const std::size_t q = current.size();
    if (var + 1 == q) {
        current[var] = degree;
        out.push_back(current);
        current[var] = 0;
        return;
    }
    for (unsigned e = degree + 1; e-- > 0;) {
        current[var] = e;
        append_degree(var + 1, degree - e, current, out);
    }
    current[var] = 0;
}

} // namespace

std::size_t binomial(std::size_t n, std::size_t r)
{
    if (r > n)
        return 0;
    r = std::min(r, n - r);
    std::size_t result = 1;
    for (std::size_t i = 1; i <= r; ++i)
        result = result * (n - r + i) / i;
    return result;
}

Dictionary::Dictionary(std::size_t q, std::size_t max_order) : q_(q), max_order_(max_order)
{
    if (q == 0)
        throw DataError("dictionary: observable dimension q must be at least 1");
    exponents_.reserve(binomial(q + max_order, max_order));
    Exponents current(q, 0);
    for (unsigned d = 0; d <= max_order; ++d)
        append_degree(0, d, current, exponents_);
}

std::size_t Dictionary::coordinate_index(std::size_t i) const
{
    if (i >= q_ || max_order_ == 0)
        throw DataError("dictionary: coordinate " + std::to_string(i) + " is not part of the basis");
    return 1 + i;
}

void Dictionary::lift_into(const double* z, double* out, std::vector<double>& powers) const
{
    const std::size_t stride = max_order_ + 1;
    powers.resize(q_ * stride);
    for (std::size_t i = 0; i < q_; ++i) {
        if (!std::isfinite(z[i]))
            throw DataError("dictionary: non-finite observable component " + std::to_string(i));
        double* p = powers.data() + i * stride;
        p[0] = 1.0;
        for (std::size_t d = 1; d < stride; ++d)
            p[d] = p[d - 1] * z[i];
    }
    for (std::size_t j = 0; j < exponents_.size(); ++j) {
        const Exponents& e = exponents_[j];
        double value = 1.0;
        for (std::size_t i = 0; i < q_; ++i)
            if (e[i] != 0)
                value *= powers[i * stride + e[i]];
        if (!std::isfinite(value))
            throw DataError("dictionary: monomial " + std::to_string(j) + " overflows");
        out[j] = value;
    }
}

Eigen::VectorXd Dictionary::lift(const Eigen::Ref<const Eigen::VectorXd>& z) const
{
    if (static_cast<std::size_t>(z.size()) != q_)
        throw DataError("dictionary: lift expects " + std::to_string(q_) + " observables, got "
                        + std::to_string(z.size()));
    Eigen::VectorXd zc = z;
    Eigen::VectorXd out(size());
    std::vector<double> powers;
    lift_into(zc.data(), out.data(), powers);
    return out;
}

Eigen::MatrixXd Dictionary::lift_batch(const Eigen::Ref<const Eigen::MatrixXd>& z) const
{
    if (static_cast<std::size_t>(z.rows()) != q_)
        throw DataError("dictionary: lift_batch expects " + std::to_string(q_) + " rows, got "
                        + std::to_string(z.rows()));
    if (z.cols() == 0)
        throw DataError("dictionary: lift_batch needs at least one column");
    Eigen::MatrixXd zc = z;
    Eigen::MatrixXd out(size(), z.cols());
    std::vector<double> powers;
    for (Eigen::Index c = 0; c < zc.cols(); ++c)
        lift_into(zc.col(c).data(), out.col(c).data(), powers);
    return out;
}

Eigen::VectorXd Dictionary::project(const Eigen::Ref<const Eigen::VectorXd>& g) const
{
    if (static_cast<std::size_t>(g.size()) != size())
        throw DataError("dictionary: project expects a lifted vector of length "
                        + std::to_string(size()) + ", got " + std::to_string(g.size()));
    if (max_order_ == 0)
        throw DataError("dictionary: order-0 basis has no coordinate functions to project onto");
    return g.segment(1, static_cast<Eigen::Index>(q_));
}

Eigen::MatrixXd Dictionary::project_batch(const Eigen::Ref<const Eigen::MatrixXd>& g) const
{
    if (static_cast<std::size_t>(g.rows()) != size())
        throw DataError("dictionary: project_batch row count mismatch");
    if (max_order_ == 0)
        throw DataError("dictionary: order-0 basis has no coordinate functions to project onto");
    return g.middleRows(1, static_cast<Eigen::Index>(q_));
}

Eigen::MatrixXd Dictionary::projection_matrix() const
{
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q_),
                                              static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < q_; ++i)
        p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(coordinate_index(i))) = 1.0;
    return p;
}

} // namespace kroma
