// Copyright 2026 The qvn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qvn/kernel.hpp"

#include <gtest/gtest.h>

#include "qvn/duality.hpp"
#include "qvn/gates.hpp"
#include "test_util.hpp"

using namespace qvn;
using qvn::test::MatrixNear;

namespace {

CVector ket(std::initializer_list<cplx> amps) {
    CVector v(amps.size());
    Eigen::Index i = 0;
    for (auto a : amps) {
        v(i++) = a;
    }
    return v;
}

CMatrix projector(const CVector &v) {
    return v * v.adjoint();
}

}  // namespace

TEST(kernel, kron_identity) {
    EXPECT_TRUE(MatrixNear(kron(identity(2), identity(2)), identity(4), 0));
}

TEST(kernel, kron_bit_flip_both) {
    const CVector out = kron(gates::X(), gates::X()) * ket({1, 0, 0, 0});
    EXPECT_TRUE(MatrixNear(out, ket({0, 0, 0, 1}), 0));
}

TEST(kernel, kron_hadamard_on_first_factor) {
    // (H|0>) (x) |0> = (|00> + |10>)/sqrt2: big-endian, so |10> is index 2.
    const double s = 1 / std::sqrt(2.0);
    const CVector out = kron(gates::H(), identity(2)) * ket({1, 0, 0, 0});
    EXPECT_TRUE(MatrixNear(out, ket({s, 0, s, 0}), 1e-15));
}

TEST(kernel, partial_trace_of_ebit_is_maximally_mixed) {
    const DensityOperator w = ebit(2).density();
    EXPECT_TRUE(MatrixNear(partial_trace(w, {0}).matrix(), identity(2) / 2, 1e-15));
    EXPECT_TRUE(MatrixNear(partial_trace(w, {1}).matrix(), identity(2) / 2, 1e-15));
}

TEST(kernel, partial_trace_of_product) {
    RngStream rng(11);
    const auto rho = random_density({2}, rng);
    const auto sigma = random_density({3}, rng);
    const auto joint = rho.tensor(sigma);
    EXPECT_TRUE(MatrixNear(partial_trace(joint, {0}).matrix(), rho.matrix(), 1e-14));
    EXPECT_TRUE(MatrixNear(partial_trace(joint, {1}).matrix(), sigma.matrix(), 1e-14));
    // Keeping every subsystem is the identity map.
    EXPECT_TRUE(MatrixNear(partial_trace(joint, {0, 1}).matrix(), joint.matrix(), 0));
    // Keeping them in swapped order permutes the factors.
    EXPECT_TRUE(MatrixNear(partial_trace(joint, {1, 0}).matrix(), kron(sigma.matrix(), rho.matrix()), 1e-14));
}

TEST(kernel, partial_trace_three_factors) {
    RngStream rng(12);
    const auto a = random_density({2}, rng);
    const auto b = random_density({3}, rng);
    const auto c = random_density({2}, rng);
    const auto joint = a.tensor(b).tensor(c);
    EXPECT_TRUE(MatrixNear(partial_trace(joint, {0, 2}).matrix(), kron(a.matrix(), c.matrix()), 1e-14));
    EXPECT_TRUE(MatrixNear(partial_trace(joint, {1}).matrix(), b.matrix(), 1e-14));
    const auto psi = random_pure_state({2, 3, 2}, rng);
    EXPECT_TRUE(MatrixNear(reduced_state(psi, {2, 0}).matrix(), partial_trace(psi.density(), {2, 0}).matrix(), 1e-14));
}

TEST(kernel, partial_trace_rejects_bad_indices) {
    const DensityOperator w = ebit(2).density();
    EXPECT_THROW(partial_trace(w, {2}), ArgumentError);
    EXPECT_THROW(partial_trace(w, {0, 0}), ArgumentError);
    EXPECT_THROW(partial_trace(w, std::span<const std::size_t>{}), ArgumentError);
}

TEST(kernel, apply_channel_examples) {
    RngStream rng(3);
    const auto rho = random_density({2}, rng);
    EXPECT_TRUE(MatrixNear(apply_channel(KrausChannel::identity(2), rho).matrix(), rho.matrix(), 0));

    const double s = 1 / std::sqrt(2.0);
    const DensityOperator plus(projector(ket({s, s})), {2});
    const KrausChannel dephase({gates::P0(), gates::P1()});
    EXPECT_TRUE(MatrixNear(apply_channel(dephase, plus).matrix(), identity(2) / 2, 1e-15));

    const UnitaryOp u = haar_unitary(2, rng);
    EXPECT_TRUE(MatrixNear(apply_channel(KrausChannel::unitary(u), rho).matrix(),
                           u.matrix() * rho.matrix() * u.matrix().adjoint(), 1e-15));

    EXPECT_THROW(apply_channel(KrausChannel::identity(3), rho), DimensionError);
}

TEST(kernel, channels_preserve_trace_and_positivity) {
    RngStream rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = 2 + trial % 3;
        const auto ch = random_channel(d, 1 + trial % 4, rng);
        const auto rho = random_density({d}, rng);
        const auto out = apply_channel(ch, rho);
        EXPECT_NEAR(out.matrix().trace().real(), 1.0, 1e-10);
        EXPECT_GE(hermitian_eigen(out.matrix()).values.minCoeff(), -1e-10);
    }
}

TEST(kernel, kraus_channel_rejects_non_trace_preserving) {
    EXPECT_THROW(KrausChannel({gates::P0()}), NotCptpError);
}

TEST(kernel, purity_examples) {
    EXPECT_DOUBLE_EQ(purity(PureState::basis({2}, 0).density()), 1.0);
    EXPECT_DOUBLE_EQ(purity(DensityOperator::maximally_mixed({2})), 0.5);
    EXPECT_DOUBLE_EQ(purity(DensityOperator::maximally_mixed({2, 2})), 0.25);
}

TEST(kernel, purity_bounds) {
    RngStream rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 2 + trial % 4;
        const auto rho = random_density({d}, rng);
        EXPECT_LE(purity(rho), 1 + 1e-12);
        EXPECT_LT(purity(rho), 1 - 1e-6);  // full rank
        const auto psi = random_pure_state({d}, rng);
        EXPECT_NEAR(purity(psi.density()), 1.0, 1e-12);
    }
}

TEST(kernel, measure_basis_state) {
    RngStream rng(6);
    const std::vector<CMatrix> z = {gates::P0(), gates::P1()};
    const auto r = measure(PureState::basis({2}, 0), z, rng);
    EXPECT_EQ(r.outcome, 0u);
    EXPECT_DOUBLE_EQ(r.probability, 1.0);
}

TEST(kernel, measure_plus_state_statistics) {
    const double s = 1 / std::sqrt(2.0);
    const PureState plus(ket({s, s}), {2});
    const std::vector<CMatrix> z = {gates::P0(), gates::P1()};
    const auto probs = outcome_probabilities(plus, z);
    EXPECT_NEAR(probs[0], 0.5, 1e-15);
    EXPECT_NEAR(probs[1], 0.5, 1e-15);
    RngStream rng(7);
    const int n = 20000;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
        ones += static_cast<int>(measure(plus, z, rng).outcome);
    }
    EXPECT_LE(std::abs(ones / double(n) - 0.5), 4 / std::sqrt(double(n)));
}

TEST(kernel, measure_frequencies_track_exact_probabilities) {
    RngStream rng(8);
    const auto psi = random_pure_state({3}, rng);
    std::vector<CMatrix> basis;
    for (int k = 0; k < 3; ++k) {
        basis.push_back(projector(haar_unitary(3, rng).matrix().col(0)));
    }
    // Complete orthonormal set from one Haar unitary.
    const auto u = haar_unitary(3, rng);
    basis.clear();
    for (int k = 0; k < 3; ++k) {
        basis.push_back(projector(u.matrix().col(k)));
    }
    const auto exact = outcome_probabilities(psi, basis);
    const int n = 30000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < n; ++i) {
        counts[measure(psi, basis, rng).outcome]++;
    }
    for (int k = 0; k < 3; ++k) {
        EXPECT_LE(std::abs(counts[k] / double(n) - exact[k]), 4 / std::sqrt(double(n)));
    }
}

TEST(kernel, bell_measurement_on_teleportation_input_is_uniform) {
    // |phi> (x) |omega>, Bell basis on (input, first half of omega).
    RngStream rng(9);
    for (std::size_t d : {2u, 3u}) {
        const auto phi = random_pure_state({d}, rng);
        const PureState joint = phi.tensor(ebit(d));
        std::vector<CMatrix> bell;
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) {
                CMatrix shift = CMatrix::Zero(d, d);
                CMatrix clock = CMatrix::Zero(d, d);
                for (std::size_t j = 0; j < d; ++j) {
                    shift((j + 1) % d, j) = 1;
                    clock(j, j) = std::polar(1.0, 2 * std::numbers::pi * double(j) / double(d));
                }
                CMatrix sigma = identity(d);
                for (std::size_t i = 0; i < a; ++i) sigma = shift * sigma;
                for (std::size_t i = 0; i < b; ++i) sigma = sigma * clock;
                bell.push_back(embed(projector(vec(sigma)), {d, d, d}, std::vector<std::size_t>{0, 1}));
            }
        }
        for (double p : outcome_probabilities(joint, bell)) {
            EXPECT_NEAR(p, 1.0 / double(d * d), 1e-14);
        }
    }
}

TEST(kernel, measure_rejects_incomplete_projectors) {
    RngStream rng(10);
    const std::vector<CMatrix> partial = {gates::P0()};
    EXPECT_THROW(measure(PureState::basis({2}, 0), partial, rng), ArgumentError);
    const std::vector<CMatrix> not_idempotent = {identity(2) / 2, identity(2) / 2};
    EXPECT_THROW(measure(PureState::basis({2}, 0), not_idempotent, rng), ArgumentError);
}

TEST(kernel, measure_density_operator) {
    RngStream rng(13);
    const auto rho = DensityOperator::maximally_mixed({2});
    const std::vector<CMatrix> z = {gates::P0(), gates::P1()};
    const auto r = measure(rho, z, rng);
    EXPECT_NEAR(r.probability, 0.5, 1e-15);
    EXPECT_NEAR(purity(r.post), 1.0, 1e-15);
}

TEST(kernel, eig_unitary_examples) {
    const auto ez = eig_unitary(UnitaryOp(gates::Z()));
    std::vector<double> re = {ez.eigenvalues(0).real(), ez.eigenvalues(1).real()};
    std::sort(re.begin(), re.end());
    EXPECT_NEAR(re[0], -1, 1e-14);
    EXPECT_NEAR(re[1], 1, 1e-14);

    // Characteristic polynomial of H is x^2 - 1.
    const auto eh = eig_unitary(UnitaryOp(gates::H()));
    EXPECT_NEAR(std::abs(eh.eigenvalues(0) * eh.eigenvalues(1) + 1.0), 0, 1e-14);
    EXPECT_NEAR(std::abs(eh.eigenvalues(0) + eh.eigenvalues(1)), 0, 1e-14);

    const auto ei = eig_unitary(UnitaryOp::identity(4));
    for (Eigen::Index i = 0; i < 4; ++i) {
        EXPECT_NEAR(std::abs(ei.eigenvalues(i) - 1.0), 0, 1e-14);
    }
    EXPECT_LE(unitary_residual(ei.vectors.matrix()), 1e-14);
}

TEST(kernel, eig_unitary_reconstructs_random_and_degenerate) {
    RngStream rng(14);
    auto check = [](const UnitaryOp &u) {
        const auto e = eig_unitary(u);
        const CMatrix &v = e.vectors.matrix();
        EXPECT_LE(max_abs(u.matrix() - v * e.eigenvalues.asDiagonal() * v.adjoint()), 1e-10);
        EXPECT_LE(unitary_residual(v), 1e-12);
        for (Eigen::Index i = 0; i < e.eigenvalues.size(); ++i) {
            EXPECT_NEAR(std::abs(e.eigenvalues(i)), 1.0, 1e-14);
        }
    };
    for (std::size_t d = 2; d <= 16; ++d) {
        check(haar_unitary(d, rng));
    }
    check(UnitaryOp(gates::pauli_string("ZZ")));
    check(UnitaryOp(gates::pauli_string("XYZ")));
    // Degenerate spectrum in a random basis.
    const auto w = haar_unitary(8, rng);
    CVector spec(8);
    spec << 1, 1, 1, -1, -1, cplx(0, 1), cplx(0, 1), 1;
    check(UnitaryOp(w.matrix() * spec.asDiagonal() * w.matrix().adjoint(), 1e-9));
}

TEST(kernel, expectation_examples) {
    const Observable z(gates::Z());
    const Observable x(gates::X());
    const double s = 1 / std::sqrt(2.0);
    EXPECT_DOUBLE_EQ(expectation(z, PureState::basis({2}, 0).density()), 1.0);
    EXPECT_DOUBLE_EQ(expectation(z, DensityOperator::maximally_mixed({2})), 0.0);
    EXPECT_NEAR(expectation(x, PureState(ket({s, s}), {2}).density()), 1.0, 1e-15);
    EXPECT_THROW(expectation(z, DensityOperator::maximally_mixed({3})), DimensionError);
}

TEST(kernel, validation_errors) {
    EXPECT_THROW(PureState(ket({1, 1}), {2}), ValidationError);
    EXPECT_THROW(PureState(ket({1, 0, 0}), {2}), DimensionError);
    EXPECT_THROW(UnitaryOp(gates::P0()), ValidationError);
    EXPECT_THROW(Observable(gates::Y() * cplx(0, 1)), ValidationError);
    CMatrix neg = CMatrix::Zero(2, 2);
    neg(0, 0) = 1.5;
    neg(1, 1) = -0.5;
    EXPECT_THROW(DensityOperator(neg, {2}), ValidationError);
}

TEST(kernel, rng_streams_are_reproducible) {
    RngStream a(42, 3), b(42, 3), c(42, 4);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs |= x != c.next_u64();
    }
    EXPECT_TRUE(differs);
    RngStream u(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(kernel, haar_unitaries_are_unitary_and_special) {
    RngStream rng(15);
    for (std::size_t d : {2u, 4u, 7u}) {
        EXPECT_LE(unitary_residual(haar_unitary(d, rng).matrix()), 1e-12);
        const auto su = haar_special_unitary(d, rng);
        EXPECT_NEAR(std::abs(su.matrix().determinant() - 1.0), 0, 1e-12);
    }
}
