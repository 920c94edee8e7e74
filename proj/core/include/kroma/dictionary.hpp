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
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace kroma {

/// Exponent tuple of one monomial, one entry per observable.
using Exponents = std::vector<unsigned>;

/**
 * Monomial observable basis psi(z) of all monomials in q variables up to a
 * maximal total degree.
 *
 * Basis functions are stored in graded lexicographic order: the constant
 * first, then the q coordinate functions z_1..z_q, then each higher degree in
 * descending lexicographic order of the exponent tuple. The coordinate
 * functions therefore sit at positions 1..q, which makes the projection back
 * to raw observables a fixed selection.
 *
 * Immutable after construction.
 */
class Dictionary {
public:
    static constexpr std::string_view ordering_tag = "graded-lex";

    Dictionary(std::size_t q, std::size_t max_order);

    std::size_t q() const noexcept { return q_; }
    std::size_t max_order() const noexcept { return max_order_; }
    /// Basis size k = C(q + max_order, max_order).
    std::size_t size() const noexcept { return exponents_.size(); }
    const std::vector<Exponents>& exponents() const noexcept { return exponents_; }

    /// Position of the coordinate function z_i inside the lifted vector.
    std::size_t coordinate_index(std::size_t i) const;

    Eigen::VectorXd lift(const Eigen::Ref<const Eigen::VectorXd>& z) const;
    /// Lifts every column of a q x m matrix.
    Eigen::MatrixXd lift_batch(const Eigen::Ref<const Eigen::MatrixXd>& z) const;

    Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& g) const;
    Eigen::MatrixXd project_batch(const Eigen::Ref<const Eigen::MatrixXd>& g) const;

    /// Selection matrix P (q x k) with project(g) == P * g.
    Eigen::MatrixXd projection_matrix() const;

    friend bool operator==(const Dictionary& a, const Dictionary& b) noexcept
    {
        return a.q_ == b.q_ && a.max_order_ == b.max_order_;
    }

private:
    void lift_into(const double* z, double* out, std::vector<double>& powers) const;

    std::size_t q_;
    std::size_t max_order_;
    std::vector<Exponents> exponents_;
};

/// Binomial coefficient C(n, r) in exact integer arithmetic.
std::size_t binomial(std::size_t n, std::size_t r);

} // namespace kroma
