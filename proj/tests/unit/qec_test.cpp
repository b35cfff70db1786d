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

#include "qvn/qec.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace qvn;
using qvn::test::MatrixNear;

namespace {

// Repetition-code projector written out from |000><000| + |111><111|.
CMatrix rep_projector() {
    CMatrix p = CMatrix::Zero(8, 8);
    p(0, 0) = 1;
    p(7, 7) = 1;
    return p;
}

// X on qubit q of 3 (q = 0 most significant) as a permutation of indices.
CMatrix x_on(int q) {
    CMatrix m = CMatrix::Zero(8, 8);
    for (int i = 0; i < 8; ++i) {
        m(i ^ (1 << (2 - q)), i) = 1;
    }
    return m;
}

CMatrix z_on(int q) {
    CMatrix m = CMatrix::Zero(8, 8);
    for (int i = 0; i < 8; ++i) {
        m(i, i) = ((i >> (2 - q)) & 1) ? -1.0 : 1.0;
    }
    return m;
}

ErrorSet single_x() {
    ErrorSet e;
    e.add(CMatrix::Identity(8, 8), "I").add(x_on(0), "X1").add(x_on(1), "X2").add(x_on(2), "X3");
    return e;
}

CMatrix apply_kraus(const std::vector<CMatrix> &ks, const CMatrix &rho) {
    CMatrix out = CMatrix::Zero(ks.front().rows(), ks.front().rows());
    for (const auto &k : ks) {
        out += k * rho * k.adjoint();
    }
    return out;
}

}  // namespace

TEST(Code, BuiltinsAreIsometries) {
    const Code c = Code::bitflip3();
    EXPECT_TRUE(MatrixNear(c.projector(), rep_projector(), 1e-15));
    const Code ph = Code::phaseflip3();
    EXPECT_TRUE(MatrixNear(CMatrix(ph.isometry().adjoint() * ph.isometry()), CMatrix::Identity(2, 2), 1e-12));
    // |+++> has all amplitudes 1/sqrt(8).
    for (int i = 0; i < 8; ++i) {
        EXPECT_NEAR(std::abs(ph.isometry()(i, 0) - 1.0 / std::sqrt(8.0)), 0.0, 1e-12);
    }
    CMatrix bad = CMatrix::Zero(8, 2);
    bad(0, 0) = 1;
    bad(1, 1) = 2;
    EXPECT_THROW(Code("bad", 3, 1, bad), ValidationError);
    EXPECT_THROW(Code("bad", 3, 1, CMatrix::Zero(4, 2)), DimensionError);
    EXPECT_THROW(Code("bad", 1, 2, CMatrix::Zero(2, 4)), ArgumentError);
}

TEST(KnillLaflamme, RepetitionWithSingleFlips) {
    const KLResult r = check_kl(Code::bitflip3(), single_x());
    EXPECT_TRUE(r.satisfied);
    EXPECT_LE(r.residual, 1e-12);
    EXPECT_TRUE(MatrixNear(r.c, CMatrix::Identity(4, 4), 1e-15));
}

TEST(KnillLaflamme, PhaseErrorActsLogically) {
    ErrorSet e = single_x();
    e.add(z_on(0), "Z1");
    const KLResult r = check_kl(Code::bitflip3(), e);
    EXPECT_FALSE(r.satisfied);
    // P Z1 P = diag(1, -1) on the code space, c = 0, so the residual is 1.
    EXPECT_NEAR(r.residuals(0, 4), 1.0, 1e-12);
    EXPECT_GE(r.residual, 0.1);
}

TEST(KnillLaflamme, TrivialCode) {
    ErrorSet e;
    e.add(CMatrix::Identity(2, 2), "I");
    const KLResult r = check_kl(Code::trivial(1), e);
    EXPECT_TRUE(r.satisfied);
    EXPECT_EQ(r.c.rows(), 1);
    EXPECT_NEAR(std::abs(r.c(0, 0) - 1.0), 0.0, 1e-15);
}

TEST(KnillLaflamme, LinearSpanProperty) {
    RngStream rng(21, 0);
    const ErrorSet base = single_x();
    for (int rep = 0; rep < 20; ++rep) {
        ErrorSet mixed;
        for (int i = 0; i < 3; ++i) {
            CMatrix a = CMatrix::Zero(8, 8);
            for (std::size_t j = 0; j < base.size(); ++j) {
                a += cplx(rng.normal(), rng.normal()) * base.ops[j];
            }
            mixed.add(a, "A" + std::to_string(i));
        }
        const KLResult r = check_kl(Code::bitflip3(), mixed);
        EXPECT_TRUE(r.satisfied);
        EXPECT_LE(r.residual, 1e-9);
        // c stays Hermitian and positive semidefinite.
        EXPECT_LE(hermitian_residual(r.c), 1e-12);
        EXPECT_GE(hermitian_eigen(r.c).values.minCoeff(), -1e-12);
    }
}

TEST(KnillLaflamme, DimensionMismatch) {
    ErrorSet e;
    e.add(CMatrix::Identity(4, 4), "I");
    EXPECT_THROW(check_kl(Code::bitflip3(), e), DimensionError);
    EXPECT_THROW(check_kl(Code::bitflip3(), ErrorSet{}), ArgumentError);
}

TEST(Recovery, RestoresCodeStatesUnderBitFlips) {
    const Code code = Code::bitflip3();
    const ErrorSet errs = single_x();
    const Recovery rec = build_recovery(code, errs);
    EXPECT_EQ(rec.rank, 4u);
    EXPECT_NO_THROW(rec.channel());
    const KrausChannel noise = noise_channel(errs);
    RngStream rng(4, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const PureState alpha = random_pure_state({2}, rng);
        const PureState psi = encode_state(code, alpha);
        const CMatrix noisy = apply_kraus(noise.kraus_ops(), psi.density().matrix());
        const CMatrix fixed = apply_kraus(rec.kraus, noisy);
        const double f = (psi.amplitudes().adjoint() * fixed * psi.amplitudes())(0, 0).real();
        EXPECT_GE(f, 1 - 1e-10);
    }
    // Channel form: max trace distance over the code basis and its
    // superpositions.
    for (int i = 0; i < 4; ++i) {
        CVector a(2);
        const double th = i * 0.9;
        a << std::cos(th), std::polar(std::sin(th), th);
        const PureState psi = encode_state(code, PureState(a, {2}));
        const CMatrix out = apply_kraus(rec.kraus, apply_kraus(noise.kraus_ops(), psi.density().matrix()));
        EXPECT_LE(trace_distance(out, psi.density().matrix()), 1e-9);
    }
}

TEST(Recovery, WeightedNoise) {
    const Code code = Code::bitflip3();
    const ErrorSet errs = single_x();
    const Recovery rec = build_recovery(code, errs);
    const KrausChannel noise = noise_channel(errs, {0.7, 0.1, 0.15, 0.05});
    const PureState psi = encode_state(code, PureState::basis({2}, 1));
    const CMatrix out = apply_kraus(rec.kraus, apply_kraus(noise.kraus_ops(), psi.density().matrix()));
    EXPECT_LE(trace_distance(out, psi.density().matrix()), 1e-10);
}

TEST(Recovery, UnitaryErrorIsInverted) {
    // XXX commutes with P; the recovery is P (XXX)^dag.
    const Code code = Code::bitflip3();
    ErrorSet e;
    e.add_pauli("XXX");
    const Recovery rec = build_recovery(code, e);
    ASSERT_EQ(rec.rank, 1u);
    EXPECT_TRUE(MatrixNear(rec.kraus[0], CMatrix(rep_projector() * gates::pauli_string("XXX")), 1e-12));
    RngStream rng(9, 0);
    const PureState psi = encode_state(code, random_pure_state({2}, rng));
    const CVector back = rec.kraus[0] * gates::pauli_string("XXX") * psi.amplitudes();
    EXPECT_LE((back - psi.amplitudes()).norm(), 1e-12);
}

TEST(Recovery, CompletionIsTracePreserving) {
    const Recovery rec = build_recovery(Code::bitflip3(), ErrorSet::paulis({"III", "XII"}));
    EXPECT_TRUE(rec.completed);
    CMatrix sum = CMatrix::Zero(8, 8);
    for (const auto &k : rec.kraus) {
        sum += k.adjoint() * k;
    }
    EXPECT_TRUE(MatrixNear(sum, CMatrix::Identity(8, 8), 1e-12));
    // The completion element never lands in the code space.
    EXPECT_LE(max_abs(CMatrix(rep_projector() * rec.kraus.back())), 1e-12);
}

TEST(Recovery, KlViolationCarriesResiduals) {
    try {
        build_recovery(Code::bitflip3(), ErrorSet::paulis({"III", "ZII"}));
        FAIL() << "expected KnillLaflammeError";
    } catch (const KnillLaflammeError &e) {
        EXPECT_EQ(e.residuals().rows(), 2);
        EXPECT_NEAR(e.residuals()(0, 1), 1.0, 1e-12);
        EXPECT_EQ(e.code(), "E_PRECONDITION");
    }
}

TEST(Recovery, PhaseFlipCodeCorrectsZ) {
    const Code code = Code::phaseflip3();
    const ErrorSet errs = ErrorSet::paulis({"III", "ZII", "IZI", "IIZ"});
    EXPECT_TRUE(check_kl(code, errs).satisfied);
    EXPECT_FALSE(check_kl(code, ErrorSet::paulis({"III", "XII"})).satisfied);
    const Recovery rec = build_recovery(code, errs);
    RngStream rng(5, 0);
    const PureState psi = encode_state(code, random_pure_state({2}, rng));
    const CMatrix out = apply_kraus(rec.kraus, apply_kraus(noise_channel(errs).kraus_ops(), psi.density().matrix()));
    EXPECT_LE(trace_distance(out, psi.density().matrix()), 1e-10);
}

TEST(NoiseChannel, Normalization) {
    EXPECT_THROW(noise_channel(ErrorSet{}), ArgumentError);
    ErrorSet e;
    e.add(CMatrix::Identity(2, 2), "I").add(gates::P0(), "P0");
    EXPECT_THROW(noise_channel(e), NotCptpError);
    EXPECT_THROW(noise_channel(single_x(), {1.0}), ArgumentError);
}

TEST(Detection, Examples) {
    const Code code = Code::bitflip3();
    const DetectionResult r = check_detection(code, ErrorSet::paulis({"III", "XII", "ZII"}));
    EXPECT_FALSE(r.satisfied);
    EXPECT_NEAR(std::abs(r.e[0] - 1.0), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(r.e[1]), 0.0, 1e-15);
    EXPECT_LE(r.residuals[1], 1e-15);
    EXPECT_NEAR(r.residuals[2], 1.0, 1e-12);
    EXPECT_TRUE(check_detection(code, single_x()).satisfied);
}

TEST(Detection, ImpliedByKl) {
    RngStream rng(8, 0);
    for (int rep = 0; rep < 10; ++rep) {
        ErrorSet mixed;
        for (int i = 0; i < 3; ++i) {
            CMatrix a = CMatrix::Zero(8, 8);
            for (const auto &b : single_x().ops) {
                a += cplx(rng.normal(), rng.normal()) * b;
            }
            mixed.add(a, "A");
        }
        ASSERT_TRUE(check_kl(Code::bitflip3(), mixed).satisfied);
        EXPECT_TRUE(check_detection(Code::bitflip3(), mixed).satisfied);
    }
}

TEST(LogicalEbit, TrivialCodeIsOmega) {
    const PureState e = logical_ebit(Code::trivial(1));
    EXPECT_NEAR(std::abs(e.amplitude(0) - 1 / std::sqrt(2.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(e.amplitude(3) - 1 / std::sqrt(2.0)), 0.0, 1e-15);
}

TEST(LogicalEbit, RepetitionAmplitudesAndMarginals) {
    const PureState e = logical_ebit(Code::bitflip3());
    for (std::size_t i = 0; i < 64; ++i) {
        const double want = (i == 0 || i == 63) ? 1 / std::sqrt(2.0) : 0.0;
        EXPECT_NEAR(std::abs(e.amplitude(i) - want), 0.0, 1e-15) << i;
    }
    for (const Code &c : {Code::bitflip3(), Code::phaseflip3()}) {
        const PureState w = logical_ebit(c);
        const CMatrix half = c.projector() / 2.0;
        EXPECT_TRUE(MatrixNear(reduced_state(w, {0, 1, 2}).matrix(), half, 1e-10));
        EXPECT_TRUE(MatrixNear(reduced_state(w, {3, 4, 5}).matrix(), half, 1e-10));
    }
}

TEST(LogicalEbit, TransversalXGivesFlippedCorrelation) {
    const Code code = Code::bitflip3();
    const PureState e = logical_ebit(code);
    const CVector got = apply_on(e.amplitudes(), e.dims(), gates::pauli_string("XXX"), std::vector<std::size_t>{0, 1, 2});
    // (|111 000> + |000 111>)/sqrt(2): indices 56 and 7.
    CVector want = CVector::Zero(64);
    want(56) = want(7) = 1 / std::sqrt(2.0);
    EXPECT_LE((got - want).norm(), 1e-15);
    EXPECT_LE((logical_program_state(code, gates::X()).amplitudes() - want).norm(), 1e-15);
}

// ---------------------------------------------------------------------------
// logical_compose
// ---------------------------------------------------------------------------

TEST(LogicalCompose, TrivialCodeMatchesPlainCompose) {
    const Code code = Code::trivial(1);
    RngStream draw(3, 0);
    for (auto st : {ByproductStrategy::RepeatUntilSuccess, ByproductStrategy::CorrectionTable,
                    ByproductStrategy::SymmetricPair}) {
        for (int rep = 0; rep < 5; ++rep) {
            const UnitaryOp u1 = haar_unitary(2, draw);
            // rus and table need a symmetric second gate.
            const UnitaryOp u2 = st == ByproductStrategy::SymmetricPair
                                     ? haar_unitary(2, draw)
                                     : UnitaryOp(CMatrix(gates::T() * gates::H() * gates::T()));
            const StoredProgram p1 = StoredProgram::from_unitary(u1);
            const StoredProgram p2 = StoredProgram::from_unitary(u2);
            RngStream a(100 + rep, 0);
            RngStream b(100 + rep, 0);
            const auto plain = compose(p1, p2, st, a);
            const auto logical = logical_compose(code, p1, p2, st, b);
            EXPECT_EQ(plain.outcomes, logical.outcomes);
            EXPECT_LE((plain.program.vector() - logical.program.vector()).norm(), 1e-12);
            EXPECT_LE(logical.leakage, 1e-12);
        }
    }
}

TEST(LogicalCompose, RepetitionXThenXIsIdentity) {
    const Code code = Code::bitflip3();
    const StoredProgram x = StoredProgram::from_unitary(UnitaryOp(gates::X()));
    for (auto st : {ByproductStrategy::RepeatUntilSuccess, ByproductStrategy::CorrectionTable,
                    ByproductStrategy::SymmetricPair}) {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            RngStream rng(seed, 1);
            const auto r = logical_compose(code, x, x, st, rng);
            EXPECT_GE(program_fidelity(r.program.vector(), vec(identity(2))), 1 - 1e-9);
            EXPECT_LE(r.leakage, 1e-12);
        }
    }
}

TEST(LogicalCompose, RepetitionXThenZ) {
    // Z_L represented by ZZZ; decoded Choi is that of Z X.
    const Code code = Code::bitflip3();
    const StoredProgram x = StoredProgram::from_unitary(UnitaryOp(gates::X()));
    const StoredProgram z = StoredProgram::from_unitary(UnitaryOp(gates::Z()));
    const CVector want = vec(CMatrix(gates::Z() * gates::X()));
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
        RngStream rng(seed, 2);
        const auto r = logical_compose(code, x, z, ByproductStrategy::CorrectionTable, rng);
        EXPECT_GE(program_fidelity(r.program.vector(), want), 1 - 1e-9);
        // The encoded result equals (V (x) V)|omega_ZX> up to phase.
        EXPECT_TRUE(test::VectorNearUpToPhase(r.physical, logical_program_state(code, gates::Z() * gates::X()).amplitudes(),
                                              1e-9));
    }
}

TEST(LogicalCompose, PhaseFlipCodeRandomPairs) {
    const Code code = Code::phaseflip3();
    RngStream draw(17, 0);
    for (int rep = 0; rep < 6; ++rep) {
        const UnitaryOp u1 = haar_unitary(2, draw);
        const UnitaryOp u2 = haar_unitary(2, draw);
        RngStream rng(rep, 3);
        const auto r = logical_compose(code, StoredProgram::from_unitary(u1), StoredProgram::from_unitary(u2),
                                       ByproductStrategy::SymmetricPair, rng);
        EXPECT_GE(program_fidelity(r.program.vector(), vec(CMatrix(u2.matrix() * u1.matrix()))), 1 - 1e-9);
    }
}

TEST(LogicalCompose, AsymmetricGateNeedsFactors) {
    const Code code = Code::bitflip3();
    RngStream draw(1, 0);
    UnitaryOp u = haar_unitary(2, draw);
    while (u.is_symmetric(1e-6)) {
        u = haar_unitary(2, draw);
    }
    const StoredProgram plain = StoredProgram::from_unitary(u, {}, {true, false, std::nullopt});
    const StoredProgram x = StoredProgram::from_unitary(UnitaryOp(gates::X()));
    RngStream rng(0, 0);
    EXPECT_THROW(logical_compose(code, x, plain, ByproductStrategy::CorrectionTable, rng), ConfigurationError);
    EXPECT_THROW(logical_compose(code, x, plain, ByproductStrategy::SymmetricPair, rng), ConfigurationError);
    EXPECT_NO_THROW(logical_compose(code, x, StoredProgram::from_unitary(u), ByproductStrategy::SymmetricPair, rng));
}

TEST(LogicalCompose, Limits) {
    RngStream rng(0, 0);
    const StoredProgram x = StoredProgram::from_unitary(UnitaryOp(gates::X()));
    const StoredProgram cz = StoredProgram::from_unitary(UnitaryOp(gates::CZ()));
    EXPECT_THROW(logical_compose(Code::bitflip3(), cz, cz, ByproductStrategy::CorrectionTable, rng), DimensionError);
    CMatrix v = CMatrix::Zero(16, 2);
    v(0, 0) = 1;
    v(15, 1) = 1;
    EXPECT_THROW(logical_compose(Code("rep4", 4, 1, v), x, x, ByproductStrategy::CorrectionTable, rng),
                 ArgumentError);
}

// ---------------------------------------------------------------------------
// Code files
// ---------------------------------------------------------------------------

TEST(CodeFile, BuiltinWithPauliErrors) {
    const auto doc = parse_code_document(
        "QVN1 name=rep3 n=3\n"
        "code k=1 distance=1 builtin=bitflip3\n"
        "error pauli=III\n"
        "error pauli=XII\n"
        "error pauli=IXI label=flip2\n"
        "error pauli=IIX\n");
    EXPECT_EQ(doc.code.name(), "rep3");
    EXPECT_EQ(doc.errors.size(), 4u);
    EXPECT_EQ(doc.errors.labels[2], "flip2");
    EXPECT_TRUE(check_kl(doc.code, doc.errors).satisfied);
}

TEST(CodeFile, ExplicitIsometryAndMatrixError) {
    const auto doc = parse_code_document(
        "QVN1 name=id n=1\n"
        "code k=1\n"
        "isometry data=1,0;0,0;0,0;1,0\n"
        "error data=0,0;1,0;1,0;0,0\n");
    EXPECT_TRUE(MatrixNear(doc.code.isometry(), CMatrix::Identity(2, 2), 0));
    EXPECT_TRUE(MatrixNear(doc.errors.ops[0], gates::X(), 0));
    EXPECT_EQ(doc.errors.labels[0], "E0");
}

TEST(CodeFile, Errors) {
    auto line_of = [](const char *doc) -> std::size_t {
        try {
            parse_code_document(doc);
        } catch (const ParseError &e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("QVN1 name=a n=3\n"), 1u);
    EXPECT_EQ(line_of("QVN1 name=a n=3\ncode k=1 builtin=steane\n"), 2u);
    EXPECT_EQ(line_of("QVN1 name=a n=2\ncode k=1 builtin=bitflip3\n"), 2u);
    EXPECT_EQ(line_of("QVN1 name=a n=1\ncode k=1\nisometry data=1,0;0,0;0,0;2,0\n"), 3u);
    EXPECT_EQ(line_of("QVN1 name=a n=1\ncode k=1\nisometry data=1,0;0,0;0,0;1,0\nerror pauli=XX\n"), 4u);
    EXPECT_EQ(line_of("QVN1 name=a n=1\ncode k=1\nisometry data=1,0;0,0;0,0;1,0\nerror\n"), 4u);
    EXPECT_EQ(line_of("QVN1 name=a n=1\ncode k=1\nisometry data=1,0;0,0;0,0;1,0\nfoo pauli=X\n"), 4u);
}
