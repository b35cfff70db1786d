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

#include "qvn/control.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace qvn;

namespace {

const double kPi = std::acos(-1.0);

// |0><0| (x) I + |1><1| (x) U, written out block by block.
CMatrix ideal_cu(const CMatrix &u) {
    const Eigen::Index d = u.rows();
    CMatrix m = CMatrix::Zero(2 * d, 2 * d);
    m.topLeftCorner(d, d) = CMatrix::Identity(d, d);
    m.bottomRightCorner(d, d) = u;
    return m;
}

// A spanning set of control-target inputs: products of |0>,|1>,|+>,|+i>
// on each side.
std::vector<PureState> spanning_inputs(std::size_t d) {
    std::vector<CVector> one;
    for (std::size_t k = 0; k < d; ++k) {
        CVector e = CVector::Zero(d);
        e(k) = 1;
        one.push_back(e);
        for (std::size_t j = k + 1; j < d; ++j) {
            CVector p = CVector::Zero(d);
            p(k) = 1;
            p(j) = 1;
            one.push_back(p / std::sqrt(2.0));
            p(j) = cplx(0, 1);
            one.push_back(p / std::sqrt(2.0));
        }
    }
    std::vector<CVector> ctl = {CVector::Unit(2, 0), CVector::Unit(2, 1)};
    CVector plus(2), plus_i(2);
    plus << 1, 1;
    plus_i << 1, cplx(0, 1);
    ctl.push_back(plus / std::sqrt(2.0));
    ctl.push_back(plus_i / std::sqrt(2.0));
    std::vector<PureState> out;
    for (const auto &c : ctl) {
        for (const auto &t : one) {
            out.emplace_back(kron(c, t), Dims{2, d}, 1e-9);
        }
    }
    return out;
}

double worst_gap(const CMatrix &u, const PureState &eig, cplx lambda) {
    const UnitaryOp circ = controlled_unknown(UnitaryOp(u), eig, lambda);
    const CMatrix cu = ideal_cu(u);
    double worst = 0;
    for (const auto &in : spanning_inputs(static_cast<std::size_t>(u.rows()))) {
        const DensityOperator got = controlled_unknown_output(circ, in.density(), eig.density());
        const CVector want = cu * in.amplitudes();
        worst = std::max(worst, trace_distance(got.matrix(), CMatrix(want * want.adjoint())));
    }
    return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// controlled_unknown
// ---------------------------------------------------------------------------

TEST(ControlledUnknown, ZOnPlusZeroGivesCz) {
    const PureState zero = PureState::basis({2}, 0);
    const UnitaryOp circ = controlled_unknown(UnitaryOp(gates::Z()), zero, 1.0);
    CVector plus(2);
    plus << 1, 1;
    const PureState in(kron(CVector(plus / std::sqrt(2.0)), CVector(CVector::Unit(2, 0))), {2, 2});
    const DensityOperator out = controlled_unknown_output(circ, in.density(), zero.density());
    const CVector want = gates::CZ() * in.amplitudes();
    EXPECT_LE(trace_distance(out.matrix(), CMatrix(want * want.adjoint())), 1e-10);
}

TEST(ControlledUnknown, ExactOperatorWithEigenstateAncilla) {
    // With the ancilla fixed to |phi>, the full circuit restricted to that
    // ancilla is CU.
    const PureState zero = PureState::basis({2}, 0);
    const CMatrix t = gates::T();
    const UnitaryOp circ = controlled_unknown(UnitaryOp(t), zero, 1.0);
    const CMatrix cu = ideal_cu(t);
    for (std::size_t i = 0; i < 4; ++i) {
        const CVector in = kron(CVector(CVector::Unit(4, static_cast<Eigen::Index>(i))), CVector(CVector::Unit(2, 0)));
        const CVector out = circ.matrix() * in;
        const CVector want = kron(CVector(cu.col(static_cast<Eigen::Index>(i))), CVector(CVector::Unit(2, 0)));
        EXPECT_LE((out - want).norm(), 1e-12) << i;
    }
}

TEST(ControlledUnknown, IdentityActsTrivially) {
    RngStream rng(3, 0);
    const PureState anc = random_pure_state({2}, rng);
    const UnitaryOp circ = controlled_unknown(UnitaryOp::identity(2), anc, 1.0);
    for (int k = 0; k < 5; ++k) {
        const PureState in = random_pure_state({2, 2}, rng);
        const DensityOperator out = controlled_unknown_output(circ, in.density(), anc.density());
        EXPECT_LE(trace_distance(out.matrix(), in.density().matrix()), 1e-12);
    }
}

TEST(ControlledUnknown, TPhaseOnOneOne) {
    const PureState zero = PureState::basis({2}, 0);
    const UnitaryOp circ = controlled_unknown(UnitaryOp(gates::T()), zero, 1.0);
    const CVector in = CVector::Constant(8, 0);
    CVector v = in;
    v(6) = 1;  // |1,1,0>
    const CVector out = circ.matrix() * v;
    EXPECT_LE(std::abs(out(6) - std::polar(1.0, kPi / 4)), 1e-12);
    v.setZero();
    v(4) = 1;  // |1,0,0>
    EXPECT_LE(std::abs((circ.matrix() * v)(4) - cplx(1.0)), 1e-12);
    EXPECT_LE(worst_gap(gates::T(), zero, 1.0), 1e-9);
}

TEST(ControlledUnknown, GaugeFixedByDeclaredEigenvalue) {
    // T has eigenvector |1> with eigenvalue e^{i pi/4}; the phase fix makes
    // the result the same CT as with |0>.
    const PureState one = PureState::basis({2}, 1);
    EXPECT_LE(worst_gap(gates::T(), one, std::polar(1.0, kPi / 4)), 1e-9);
    // A global phase on U shows up as a relative phase on the control.
    const CMatrix u = std::polar(1.0, 0.7) * gates::Z();
    EXPECT_LE(worst_gap(u, PureState::basis({2}, 0), std::polar(1.0, 0.7)), 1e-9);
}

TEST(ControlledUnknown, RandomDiagonalInKnownBasis) {
    RngStream rng(11, 0);
    for (std::size_t d : {2u, 3u, 4u}) {
        for (int rep = 0; rep < 5; ++rep) {
            const CMatrix v = haar_unitary(d, rng).matrix();
            CVector phases(d);
            for (std::size_t k = 0; k < d; ++k) {
                phases(static_cast<Eigen::Index>(k)) = std::polar(1.0, 2 * kPi * rng.uniform());
            }
            const CMatrix u = v * phases.asDiagonal() * v.adjoint();
            const std::size_t k = rng.uniform_index(d);
            const PureState eig(v.col(static_cast<Eigen::Index>(k)), {d}, 1e-9);
            EXPECT_LE(worst_gap(u, eig, phases(static_cast<Eigen::Index>(k))), 1e-9) << d;
        }
    }
}

TEST(ControlledUnknown, MixedAncillaOnEigenstateTargetDephasesControl) {
    // Ancilla at I/d with the eigenstate on the target: the control's
    // coherence picks up tr(U)/d, which is 0 for Z. The reduced state is then
    // not CZ|+0>.
    const UnitaryOp circ = controlled_unknown(UnitaryOp(gates::Z()), PureState::basis({2}, 0), 1.0);
    CVector plus(2);
    plus << 1, 1;
    const PureState in(kron(CVector(plus / std::sqrt(2.0)), CVector(CVector::Unit(2, 0))), {2, 2});
    const DensityOperator out =
        controlled_unknown_output(circ, in.density(), DensityOperator::maximally_mixed({2}));
    const CVector want = gates::CZ() * in.amplitudes();
    EXPECT_NEAR(trace_distance(out.matrix(), CMatrix(want * want.adjoint())), 0.5, 1e-12);
}

TEST(ControlledUnknown, Errors) {
    EXPECT_THROW(controlled_unknown(UnitaryOp(gates::Z()), PureState::basis({2}, 0), -1.0), PreconditionError);
    CVector plus(2);
    plus << 1, 1;
    EXPECT_THROW(controlled_unknown(UnitaryOp(gates::Z()), PureState(plus / std::sqrt(2.0), {2}), 1.0),
                 PreconditionError);
    EXPECT_THROW(controlled_unknown(UnitaryOp(gates::Z()), PureState::basis({3}, 0), 1.0), DimensionError);
    EXPECT_THROW(controlled_unknown(UnitaryOp(gates::Z()), PureState::basis({2}, 0), 2.0), ArgumentError);
}

// ---------------------------------------------------------------------------
// Schedule text
// ---------------------------------------------------------------------------

TEST(ScheduleText, ParsesEveryForm) {
    const char *doc =
        "# demo\n"
        "QVNS1 shots=40 seed=9\n"
        "store addr=0 file=h.qvn copies=2\n"
        "store addr=1 file=t.qvn copies=2 kind=data\n"
        "compose a=0 b=1 strategy=table dest=2\n"
        "inject target=2 bits=1 mode=cascade\n"
        "readout target=2 obs=Z\n"
        "restore addr=0 copies=1\n"
        "sample-tail target=3 tail=0\n";
    const auto parsed = parse_schedule(doc);
    EXPECT_EQ(parsed.schedule.shots, 40u);
    EXPECT_EQ(parsed.schedule.seed, 9u);
    ASSERT_EQ(parsed.stores.size(), 2u);
    EXPECT_EQ(parsed.stores[1].kind, SlotKind::Data);
    EXPECT_EQ(parsed.stores[1].file, "t.qvn");
    EXPECT_EQ(parsed.stores[0].line, 3u);
    ASSERT_EQ(parsed.schedule.instructions.size(), 5u);
    const auto &c = std::get<ComposeInstr>(parsed.schedule.instructions[0]);
    EXPECT_EQ(c.dest, 2u);
    EXPECT_EQ(c.strategy, ByproductStrategy::CorrectionTable);
    const auto &in = std::get<InjectInstr>(parsed.schedule.instructions[1]);
    EXPECT_EQ(in.mode, AncillaMode::Cascade);
    EXPECT_EQ(in.bits, std::vector<std::uint8_t>{1});
    EXPECT_EQ(std::get<ReadoutInstr>(parsed.schedule.instructions[2]).pauli, "Z");
    EXPECT_EQ(std::get<RestoreInstr>(parsed.schedule.instructions[3]).copies, 1u);
    EXPECT_EQ(std::get<SampleTailInstr>(parsed.schedule.instructions[4]).target, 3u);

    const auto again = parse_schedule(format_schedule(parsed.schedule));
    EXPECT_EQ(format_schedule(again.schedule), format_schedule(parsed.schedule));
}

TEST(ScheduleText, Errors) {
    auto at = [](const char *doc) -> std::pair<std::size_t, std::size_t> {
        try {
            parse_schedule(doc);
        } catch (const ParseError &e) {
            return {e.line(), e.column()};
        }
        return {0, 0};
    };
    EXPECT_EQ(at("").first, 1u);
    EXPECT_EQ(at("QVN1 shots=1\n").first, 1u);
    EXPECT_EQ(at("QVNS1 shots=0\n").first, 1u);
    EXPECT_EQ(at("QVNS1 shots=2\njump target=1\n"), (std::pair<std::size_t, std::size_t>{2, 1}));
    EXPECT_EQ(at("QVNS1 shots=2\ncompose a=0 b=1 strategy=magic dest=2\n").first, 2u);
    EXPECT_EQ(at("QVNS1 shots=2\ninject target=0 bits=12\n").first, 2u);
    EXPECT_EQ(at("QVNS1 shots=2\nreadout target=0 obs=Q\n").first, 2u);
    EXPECT_EQ(at("QVNS1 shots=2\nreadout target=0\n").first, 2u);
    EXPECT_EQ(at("QVNS1 shots=2\nreadout target=0 obs=Z extra=1\n").first, 2u);
}

// ---------------------------------------------------------------------------
// execute
// ---------------------------------------------------------------------------

namespace {

ProgramDescription single(GateTag tag, const char *name) {
    ProgramDescription d;
    d.name = name;
    d.add(tag, {0});
    return d;
}

// compose(H, T) -> 2, inject |1>, read Z, then top up both inputs.
Schedule th_schedule(std::size_t shots, std::uint64_t seed) {
    Schedule s;
    s.shots = shots;
    s.seed = seed;
    s.instructions = {ComposeInstr{0, 1, ByproductStrategy::CorrectionTable, 2}, InjectInstr{2, {}, {}},
                      ReadoutInstr{2, "Z"}, RestoreInstr{0, 1}, RestoreInstr{1, 1}};
    return s;
}

MemoryUnit th_memory() {
    MemoryUnit mem;
    mem.store(single(GateTag::H, "h"), 1);
    mem.store(single(GateTag::T, "t"), 1);
    return mem;
}

}  // namespace

TEST(Execute, ThScheduleEstimatesZero) {
    MemoryUnit mem = th_memory();
    const auto r = execute(mem, th_schedule(4000, 5));
    ASSERT_EQ(r.estimates.size(), 1u);
    const auto &e = r.estimates[0];
    EXPECT_TRUE(e.injected);
    EXPECT_EQ(e.observable, "Z");
    EXPECT_EQ(e.estimate.shots, 4000u);
    EXPECT_GT(e.estimate.standard_error, 0.0);
    EXPECT_LE(std::abs(e.estimate.value), 3 * e.estimate.standard_error);
    EXPECT_NEAR(e.estimate.p1_exact, 0.5, 1e-12);
    EXPECT_EQ(r.records.size(), 4000u);
    for (const auto &rec : r.records) {
        EXPECT_EQ(rec.bell_outcomes.size(), 1u);
        ASSERT_TRUE(rec.injection_branch.has_value());
    }
    mem.verify();
}

TEST(Execute, NonZeroExpectation) {
    // H alone, inject |1>, read X: <1|H X H|1> = <1|Z|1> = -1.
    MemoryUnit mem;
    mem.store(single(GateTag::H, "h"), 600);
    Schedule s;
    s.shots = 600;
    s.seed = 2;
    s.instructions = {InjectInstr{0, {}, {}}, ReadoutInstr{0, "X"}};
    const auto r = execute(mem, s);
    EXPECT_NEAR(r.estimates[0].estimate.value, -1.0, 1e-9);
    EXPECT_EQ(mem.copies(0), 0u);
}

TEST(Execute, WithoutInjectionReadsTheHeadMarginal) {
    // The head marginal of a Choi state is I/d, so Z averages to 0.
    MemoryUnit mem;
    mem.store(single(GateTag::T, "t"), 500);
    Schedule s;
    s.shots = 500;
    s.instructions = {ReadoutInstr{0, "Z"}};
    const auto r = execute(mem, s);
    EXPECT_FALSE(r.estimates[0].injected);
    EXPECT_LE(std::abs(r.estimates[0].estimate.value), 4 * r.estimates[0].estimate.standard_error + 1e-12);
}

TEST(Execute, RestoreAfterExhaustionCompletes) {
    MemoryUnit mem = th_memory();
    EXPECT_NO_THROW(execute(mem, th_schedule(5, 1)));
    EXPECT_EQ(mem.copies(0), 1u);
    EXPECT_EQ(mem.copies(1), 1u);
    EXPECT_EQ(mem.copies(2), 0u);
}

TEST(Execute, EmptyScheduleLeavesMemoryAlone) {
    MemoryUnit mem = th_memory();
    const std::size_t log = mem.audit_log().size();
    Schedule s;
    s.shots = 10;
    const auto r = execute(mem, s);
    EXPECT_TRUE(r.records.empty());
    EXPECT_TRUE(r.estimates.empty());
    EXPECT_EQ(mem.audit_log().size(), log);
}

TEST(Execute, Deterministic) {
    auto run = [] {
        MemoryUnit mem = th_memory();
        Schedule s = th_schedule(200, 77);
        s.instructions.insert(s.instructions.begin() + 2, SampleTailInstr{2, 0});
        return execute(mem, s);
    };
    const auto a = run();
    const auto b = run();
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].bell_outcomes, b.records[i].bell_outcomes);
        EXPECT_EQ(a.records[i].injection_branch, b.records[i].injection_branch);
        EXPECT_EQ(a.records[i].tail_bits, b.records[i].tail_bits);
        EXPECT_EQ(a.records[i].sampled_observable_value, b.records[i].sampled_observable_value);
    }
    EXPECT_EQ(a.estimates[0].estimate.value, b.estimates[0].estimate.value);
}

TEST(Execute, CopyAccountingMatchesInstructions) {
    MemoryUnit mem;
    mem.store(single(GateTag::H, "h"), 7);
    mem.store(single(GateTag::T, "t"), 9);
    mem.store(single(GateTag::X, "x"), 4);
    Schedule s;
    s.shots = 3;
    s.instructions = {ComposeInstr{0, 1, ByproductStrategy::SymmetricPair, 5}, ReadoutInstr{2, "Z"},
                      RestoreInstr{2, 2}, ComposeInstr{0, 5, ByproductStrategy::RepeatUntilSuccess, 6}};
    execute(mem, s);
    // per shot: slot 0 -2, slot 1 -1, slot 2 -1+2, slot 5 +1-1, slot 6 +1
    EXPECT_EQ(mem.copies(0), 7u - 6u);
    EXPECT_EQ(mem.copies(1), 9u - 3u);
    EXPECT_EQ(mem.copies(2), 4u + 3u);
    EXPECT_EQ(mem.copies(5), 0u);
    EXPECT_EQ(mem.copies(6), 3u);
    EXPECT_TRUE(mem.slot(6).description.has_value());
    mem.verify();
    // The composed slots can be restored from their joined descriptions.
    EXPECT_EQ(mem.restore(6, 1), 4u);
}

TEST(Execute, OutOfCopiesNamesTheInstruction) {
    MemoryUnit mem;
    mem.store(single(GateTag::H, "h"), 1);
    mem.store(single(GateTag::T, "t"), 1);
    Schedule s;
    s.shots = 2;
    s.instructions = {ReadoutInstr{0, "Z"}, ComposeInstr{1, 1, ByproductStrategy::CorrectionTable, 3}};
    try {
        execute(mem, s);
        FAIL() << "expected OutOfCopiesError";
    } catch (const OutOfCopiesError &e) {
        EXPECT_NE(std::string(e.what()).find("instruction 1 (compose)"), std::string::npos) << e.what();
    }
}

TEST(Execute, ValidationErrors) {
    MemoryUnit mem = th_memory();
    Schedule s;
    s.instructions = {ReadoutInstr{9, "Z"}};
    EXPECT_THROW(execute(mem, s), ValidationError);
    s.instructions = {ComposeInstr{0, 1, ByproductStrategy::CorrectionTable, 1}};
    EXPECT_THROW(execute(mem, s), ValidationError);
    s.instructions = {ComposeInstr{0, 1, ByproductStrategy::CorrectionTable, 4},
                      ComposeInstr{0, 1, ByproductStrategy::CorrectionTable, 4}};
    EXPECT_THROW(execute(mem, s), ValidationError);
    s.instructions = {ReadoutInstr{0, "Z"}, ReadoutInstr{0, "X"}};
    EXPECT_THROW(execute(mem, s), ValidationError);
    s.instructions = {ReadoutInstr{0, "ZZ"}};
    EXPECT_THROW(execute(mem, s), ValidationError);
    EXPECT_EQ(mem.copies(0), 1u);
}
