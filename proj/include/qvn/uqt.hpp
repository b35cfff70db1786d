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

// Stored programs and their composition by gate teleportation.
//
// A program |omega_U> lives on (head, tail). Bell-measuring the head of
// |omega_U1> against the tail of |omega_U2> with outcome k leaves
// |omega_{U2 s_k^dag U1}> on (head2, tail1), so the byproduct sits between
// the factors and is removed by C_k = U2 s_k U2^dag on the head.
// Measuring head against head instead gives U2^t s_k^dag U1 on
// (tail2, tail1); for symmetric U2 the transpose disappears, which is what
// the symmetric-factor route uses.

#pragma once

#include <memory>
#include <optional>
#include <string_view>

#include "qvn/description.hpp"
#include "qvn/duality.hpp"
#include "qvn/pauli.hpp"
#include "qvn/rng.hpp"

namespace qvn {

struct SymmetricFactors {
    UnitaryOp s1;
    UnitaryOp s2;
};

inline void check_factors(const SymmetricFactors &f, double tol = kDefaultTolerance) {
    if (f.s1.dim() != f.s2.dim()) {
        throw DimensionError("SymmetricFactors: factors have different dimensions");
    }
    if (symmetry_residual(f.s1.matrix()) > tol || symmetry_residual(f.s2.matrix()) > tol) {
        throw ValidationError("SymmetricFactors: factor is not symmetric");
    }
}

/// U = S1 S2 with S1, S2 symmetric unitaries. From U = V D V^dag:
/// S1 = V D V^t and S2 = V* V^dag. A symmetric U short-circuits to (U, I).
inline SymmetricFactors symmetric_decompose(const UnitaryOp &u, double tol = kDefaultTolerance) {
    if (u.is_symmetric(tol)) {
        return {u, UnitaryOp::identity(u.dim())};
    }
    const auto eig = eig_unitary(u, tol);
    const CMatrix &v = eig.vectors.matrix();
    CMatrix s1 = v * eig.eigenvalues.asDiagonal() * v.transpose();
    CMatrix s2 = v.conjugate() * v.adjoint();
    // Exact symmetrization removes rounding asymmetry.
    s1 = 0.5 * (s1 + s1.transpose()).eval();
    s2 = 0.5 * (s2 + s2.transpose()).eval();
    return {UnitaryOp(std::move(s1), 1e-9), UnitaryOp(std::move(s2), 1e-9)};
}

enum class ByproductStrategy { RepeatUntilSuccess, CorrectionTable, SymmetricPair };

inline std::string_view strategy_name(ByproductStrategy s) {
    switch (s) {
        case ByproductStrategy::RepeatUntilSuccess:
            return "rus";
        case ByproductStrategy::CorrectionTable:
            return "table";
        case ByproductStrategy::SymmetricPair:
            return "symmetric";
    }
    return "?";
}

inline std::optional<ByproductStrategy> parse_strategy(std::string_view s) {
    for (auto st : {ByproductStrategy::RepeatUntilSuccess, ByproductStrategy::CorrectionTable,
                    ByproductStrategy::SymmetricPair}) {
        if (strategy_name(st) == s) {
            return st;
        }
    }
    return std::nullopt;
}

struct ProgramOptions {
    bool corrections = true;
    bool factors = true;
    std::optional<PauliFamily> family;  // standard family for the dimension when unset
};

/// Pure Choi state of a unitary plus the classical data needed to compose
/// it: the correction table {U s_k U^dag}, optional symmetric factors and an
/// optional gate-sequence description.
class StoredProgram {
   public:
    /// Adopts a rank-1 Choi vector; its unvectorization must be unitary.
    explicit StoredProgram(const CVector &choi_vector, std::optional<ProgramDescription> description = {},
                           ProgramOptions opts = {}, double tol = 1e-9)
        : choi_(ChoiState::pure(choi_vector, tol)), description_(std::move(description)) {
        const std::size_t d = choi_.d();
        family_ = opts.family ? *opts.family : PauliBasis::standard(d).family();
        const CMatrix u = unvec(choi_vector, d);
        if (unitary_residual(u) > tol) {
            throw ValidationError("StoredProgram: Choi vector does not unvectorize to a unitary");
        }
        symmetric_ = symmetry_residual(u) <= tol;
        if (description_ && description_->dim() != d) {
            throw DimensionError("StoredProgram: description acts on " + std::to_string(description_->dim()) +
                                 " dimensions, Choi state on " + std::to_string(d));
        }
        if (opts.corrections) {
            build_corrections();
        }
        if (opts.factors) {
            attach_factors(symmetric_decompose(UnitaryOp(u, tol)), tol);
        }
    }

    static StoredProgram from_unitary(const UnitaryOp &u, std::optional<ProgramDescription> description = {},
                                      ProgramOptions opts = {}) {
        return StoredProgram(vec(u.matrix()), std::move(description), opts);
    }

    std::size_t d() const {
        return choi_.d();
    }
    const ChoiState &choi() const {
        return choi_;
    }
    const CVector &vector() const {
        return choi_.vector();
    }
    /// unvec of the stored state; defined up to the global phase of the state.
    UnitaryOp unitary() const {
        return UnitaryOp(unvec(choi_.vector(), d()), 1e-9);
    }
    PauliFamily family() const {
        return family_;
    }
    bool is_symmetric() const {
        return symmetric_;
    }
    const std::optional<ProgramDescription> &description() const {
        return description_;
    }

    bool has_corrections() const {
        return !table_.empty();
    }
    /// C_k = U s_k U^dag for k = 1 .. d^2 - 1.
    const std::vector<CMatrix> &correction_table() const {
        return table_;
    }
    CMatrix correction(std::size_t k) const {
        if (k == 0) {
            return identity(d());
        }
        if (table_.empty()) {
            throw ConfigurationError("StoredProgram: no correction table");
        }
        if (k > table_.size()) {
            throw ArgumentError("StoredProgram: correction index out of range");
        }
        return table_[k - 1];
    }
    /// Copy with the correction table computed (a no-op when present).
    StoredProgram with_corrections() const {
        StoredProgram p = *this;
        if (p.table_.empty()) {
            p.build_corrections();
        }
        return p;
    }

    bool has_factors() const {
        return factor_programs_ != nullptr;
    }
    const SymmetricFactors &factors() const;
    /// Stored programs of (S1, S2) with their own correction tables.
    const StoredProgram &factor_program(std::size_t i) const;
    /// Copy carrying `f`, which must be symmetric and multiply to this
    /// program's unitary up to a global phase.
    StoredProgram with_factors(const SymmetricFactors &f, double tol = 1e-9) const {
        StoredProgram p = *this;
        p.attach_factors(f, tol);
        return p;
    }
    StoredProgram without_factors() const {
        StoredProgram p = *this;
        p.factor_programs_.reset();
        return p;
    }

   private:
    struct FactorPrograms;

    StoredProgram(const CVector &v, PauliFamily family) : choi_(ChoiState::pure(v, 1e-9)), family_(family) {
        symmetric_ = true;
        build_corrections();
    }

    void build_corrections() {
        const PauliBasis basis(d(), family_);
        const CMatrix u = unvec(choi_.vector(), d());
        table_.clear();
        table_.reserve(basis.size() - 1);
        for (std::size_t k = 1; k < basis.size(); ++k) {
            table_.push_back(u * basis.op(k) * u.adjoint());
        }
    }

    void attach_factors(const SymmetricFactors &f, double tol);

    ChoiState choi_;
    std::optional<ProgramDescription> description_;
    PauliFamily family_ = PauliFamily::Weyl;
    bool symmetric_ = false;
    std::vector<CMatrix> table_;
    std::shared_ptr<const FactorPrograms> factor_programs_;
};

struct StoredProgram::FactorPrograms {
    SymmetricFactors factors;
    StoredProgram p1;
    StoredProgram p2;
};

inline const SymmetricFactors &StoredProgram::factors() const {
    if (!factor_programs_) {
        throw ConfigurationError("StoredProgram: no symmetric factors");
    }
    return factor_programs_->factors;
}

inline const StoredProgram &StoredProgram::factor_program(std::size_t i) const {
    if (!factor_programs_) {
        throw ConfigurationError("StoredProgram: no symmetric factors");
    }
    return i == 0 ? factor_programs_->p1 : factor_programs_->p2;
}

inline void StoredProgram::attach_factors(const SymmetricFactors &f, double tol) {
    check_factors(f, tol);
    if (f.s1.dim() != d()) {
        throw DimensionError("StoredProgram: factor dimension does not match the program");
    }
    const CVector prod = vec(f.s1.matrix() * f.s2.matrix());
    if (1.0 - std::norm(prod.dot(choi_.vector())) > tol) {
        throw ValidationError("StoredProgram: symmetric factors do not multiply to the program");
    }
    factor_programs_ = std::make_shared<const FactorPrograms>(FactorPrograms{
        f, StoredProgram(vec(f.s1.matrix()), family_), StoredProgram(vec(f.s2.matrix()), family_)});
}

/// |<omega_a|omega_b>|^2, the phase-insensitive program fidelity.
inline double program_fidelity(const CVector &a, const CVector &b) {
    if (a.size() != b.size()) {
        throw DimensionError("program_fidelity: dimension mismatch");
    }
    return std::norm(a.dot(b));
}

inline double program_fidelity(const StoredProgram &p, const UnitaryOp &u) {
    return program_fidelity(p.vector(), vec(u.matrix()));
}

// ---------------------------------------------------------------------------
// Bell measurement on a pair of wires
// ---------------------------------------------------------------------------

struct BellOutcome {
    std::size_t outcome = 0;
    double probability = 0.0;
    PureState post;  // remaining wires in their original order
};

inline void check_pair(const PureState &joint, std::size_t a, std::size_t b, const BellBasis &basis) {
    const auto &dims = joint.dims();
    if (a >= dims.size() || b >= dims.size() || a == b) {
        throw ArgumentError("Bell measurement: invalid wire pair (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    }
    if (dims[a] != basis.d() || dims[b] != basis.d()) {
        throw DimensionError("Bell measurement: wires have dimensions " + std::to_string(dims[a]) + " and " +
                             std::to_string(dims[b]) + ", basis expects " + std::to_string(basis.d()));
    }
}

/// Exact outcome probabilities <Psi|Pi_k|Psi>.
inline std::vector<double> bell_probabilities(const PureState &joint, std::size_t a, std::size_t b,
                                              const BellBasis &basis) {
    check_pair(joint, a, b, basis);
    const std::vector<std::size_t> sel = {a, b};
    std::vector<double> out;
    out.reserve(basis.size());
    for (std::size_t k = 0; k < basis.size(); ++k) {
        out.push_back(project_out(joint.amplitudes(), joint.dims(), sel, basis.vector(k)).squaredNorm());
    }
    return out;
}

/// Post-measurement state for a forced outcome k; zero-probability outcomes
/// raise NumericalError.
inline BellOutcome bell_project(const PureState &joint, std::size_t a, std::size_t b, const BellBasis &basis,
                                std::size_t k) {
    check_pair(joint, a, b, basis);
    const std::vector<std::size_t> sel = {a, b};
    const CVector rest = project_out(joint.amplitudes(), joint.dims(), sel, basis.vector(k));
    const double p = rest.squaredNorm();
    if (!(p > 1e-300)) {
        throw NumericalError("Bell measurement: outcome " + std::to_string(k) + " has zero probability");
    }
    Dims remaining = remove_subsystems(joint.dims(), sel);
    if (remaining.empty()) {
        remaining = {1};
    }
    return {k, p, PureState::normalized(rest, remaining)};
}

inline BellOutcome bell_measure_pair(const PureState &joint, std::size_t a, std::size_t b, const BellBasis &basis,
                                     RngStream &rng) {
    const auto probs = bell_probabilities(joint, a, b, basis);
    const std::size_t k = rng.sample_discrete(probs);
    return bell_project(joint, a, b, basis, k);
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

struct ComposeResult {
    StoredProgram program;
    std::size_t shots_used = 0;              // Bell measurements performed
    std::vector<std::size_t> outcomes;       // every Bell outcome, in order
};

namespace detail {

inline std::optional<ProgramDescription> joined_description(const StoredProgram &p1, const StoredProgram &p2) {
    if (p1.description() && p2.description() && p1.description()->n == p2.description()->n) {
        return concatenate(*p1.description(), *p2.description());
    }
    return std::nullopt;
}

/// Head-tail round: returns the state on (head2, tail1) before correction.
inline BellOutcome head_tail_round(const CVector &v1, const CVector &v2, std::size_t d, const BellBasis &basis,
                                   RngStream &rng) {
    const PureState joint(kron(v1, v2), {d, d, d, d}, 1e-9);
    auto r = bell_measure_pair(joint, 0, 3, basis, rng);
    const std::vector<std::size_t> swap = {1, 0};
    r.post = r.post.permuted(swap);
    return r;
}

/// Head-head round through a symmetric factor, corrected with its table.
inline CVector head_head_round(const CVector &v1, const StoredProgram &factor, const BellBasis &basis,
                               RngStream &rng, std::vector<std::size_t> &outcomes) {
    const std::size_t d = factor.d();
    const PureState joint(kron(v1, factor.vector()), {d, d, d, d}, 1e-9);
    auto r = bell_measure_pair(joint, 0, 2, basis, rng);
    outcomes.push_back(r.outcome);
    // Remaining (t1, t_s); the factor's tail is the new head.
    const std::vector<std::size_t> swap = {1, 0};
    const PureState out = r.post.permuted(swap);
    return apply_on(out.amplitudes(), {d, d}, factor.correction(r.outcome), std::vector<std::size_t>{0});
}

}  // namespace detail

struct ComposeOptions {
    std::size_t max_trials = std::size_t{1} << 20;  // RepeatUntilSuccess cap
    ProgramOptions result{};
};

/// Program for U2 U1 from one copy of each input (RepeatUntilSuccess
/// re-prepares copies until the trivial outcome).
inline ComposeResult compose(const StoredProgram &p1, const StoredProgram &p2, ByproductStrategy strategy,
                             RngStream &rng, const ComposeOptions &opts = {}) {
    if (p1.d() != p2.d()) {
        throw DimensionError("compose: programs have dimensions " + std::to_string(p1.d()) + " and " +
                             std::to_string(p2.d()));
    }
    if (p1.family() != p2.family()) {
        throw ConfigurationError("compose: programs use different Pauli bases");
    }
    const std::size_t d = p1.d();
    const BellBasis basis(PauliBasis(d, p1.family()));
    ProgramOptions result_opts = opts.result;
    result_opts.family = p1.family();

    std::vector<std::size_t> outcomes;
    CVector out;
    switch (strategy) {
        case ByproductStrategy::RepeatUntilSuccess: {
            for (std::size_t trial = 0;; ++trial) {
                if (trial == opts.max_trials) {
                    throw NumericalError("compose: no trivial outcome after " + std::to_string(trial) + " trials");
                }
                auto r = detail::head_tail_round(p1.vector(), p2.vector(), d, basis, rng);
                outcomes.push_back(r.outcome);
                if (r.outcome == 0) {
                    out = r.post.amplitudes();
                    break;
                }
            }
            break;
        }
        case ByproductStrategy::CorrectionTable: {
            if (!p2.has_corrections()) {
                throw ConfigurationError("compose: second program carries no correction table");
            }
            auto r = detail::head_tail_round(p1.vector(), p2.vector(), d, basis, rng);
            outcomes.push_back(r.outcome);
            out = apply_on(r.post.amplitudes(), {d, d}, p2.correction(r.outcome), std::vector<std::size_t>{0});
            break;
        }
        case ByproductStrategy::SymmetricPair: {
            if (!p2.has_factors()) {
                throw ConfigurationError("compose: second program carries no symmetric factors");
            }
            // U2 = S1 S2: teleport through S2 first, then S1.
            const CVector mid = detail::head_head_round(p1.vector(), p2.factor_program(1), basis, rng, outcomes);
            out = detail::head_head_round(mid, p2.factor_program(0), basis, rng, outcomes);
            break;
        }
    }
    const std::size_t shots = outcomes.size();
    return {StoredProgram(out / out.norm(), detail::joined_description(p1, p2), result_opts), shots,
            std::move(outcomes)};
}

// ---------------------------------------------------------------------------
// Coherent composite
// ---------------------------------------------------------------------------

/// Register order of the coherent composite: the input program, the S2
/// program, the S1 program. The output program appears on (ts1, t1).
enum UqtRegister : std::size_t { kH1 = 0, kT1 = 1, kHS2 = 2, kTS2 = 3, kHS1 = 4, kTS1 = 5 };

namespace detail {

/// sum_k |k><k| (x) C_k on (pair, target).
inline CMatrix controlled_corrections(const StoredProgram &factor) {
    const std::size_t d = factor.d();
    const std::size_t n = d * d;
    CMatrix m = CMatrix::Zero(n * d, n * d);
    for (std::size_t k = 0; k < n; ++k) {
        m.block(k * d, k * d, d, d) = factor.correction(k);
    }
    return m;
}

struct UqtStep {
    CMatrix op;
    std::vector<std::size_t> targets;
};

inline std::vector<UqtStep> uqt_steps(const SymmetricFactors &factors, PauliFamily family) {
    check_factors(factors, 1e-9);
    const std::size_t d = factors.s1.dim();
    const BellBasis basis(PauliBasis(d, family));
    const StoredProgram f1 = StoredProgram::from_unitary(factors.s1, {}, {true, false, family});
    const StoredProgram f2 = StoredProgram::from_unitary(factors.s2, {}, {true, false, family});
    const CMatrix b = basis.rotation();
    return {
        {b, {kH1, kHS2}},
        {controlled_corrections(f2), {kH1, kHS2, kTS2}},
        {b, {kTS2, kHS1}},
        {controlled_corrections(f1), {kTS2, kHS1, kTS1}},
    };
}

}  // namespace detail

/// Applies the coherent composite to a state on the six registers
/// (each of dimension d) without materializing the d^6 x d^6 matrix.
inline CVector apply_composition(const SymmetricFactors &factors, const CVector &state,
                                 std::optional<PauliFamily> family = {}) {
    const std::size_t d = factors.s1.dim();
    const Dims dims(6, d);
    if (static_cast<std::size_t>(state.size()) != dim_product(dims)) {
        throw DimensionError("apply_composition: state does not live on six d-dimensional registers");
    }
    CVector v = state;
    for (const auto &step : detail::uqt_steps(factors, family.value_or(PauliBasis::standard(d).family()))) {
        v = apply_on(v, dims, step.op, step.targets);
    }
    return v;
}

/// The composite as a dense unitary: Bell rotations turn outcome
/// projections into computational registers and controlled corrections
/// undo each byproduct, so no measurement is needed.
inline UnitaryOp composition_unitary(const SymmetricFactors &factors, std::optional<PauliFamily> family = {}) {
    const std::size_t d = factors.s1.dim();
    if (d > 3) {
        throw ArgumentError("composition_unitary: the dense d^6 matrix is limited to d <= 3; use apply_composition");
    }
    const Dims dims(6, d);
    const std::size_t n = dim_product(dims);
    CMatrix u = identity(n);
    for (const auto &step : detail::uqt_steps(factors, family.value_or(PauliBasis::standard(d).family()))) {
        u = embed(step.op, dims, step.targets) * u;
    }
    return UnitaryOp(std::move(u), 1e-9);
}

/// Runs the composite on |omega_U1> (x) |omega_S2> (x) |omega_S1> and
/// returns the reduced state of the output registers (ts1, t1).
inline DensityOperator uqt_output(const SymmetricFactors &factors, const CVector &program1,
                                  std::optional<PauliFamily> family = {}) {
    const std::size_t d = factors.s1.dim();
    const CVector in = kron(kron(program1, vec(factors.s2.matrix())), vec(factors.s1.matrix()));
    const CVector out = apply_composition(factors, in, family);
    const PureState psi(out, Dims(6, d), 1e-9);
    return reduced_state(psi, {kTS1, kT1});
}

// ---------------------------------------------------------------------------
// Combs realized with stored programs
// ---------------------------------------------------------------------------

/// |omega_{U (x) I_m}> built from |omega_U> and a fresh m-dimensional ebit.
inline StoredProgram lift_program(const StoredProgram &p, std::size_t m, ProgramOptions opts = {}) {
    const std::size_t d = p.d();
    if (m == 1) {
        return p;
    }
    // [hU, tU, hM, tM] -> [hU, hM, tU, tM]
    const CVector joint = kron(p.vector(), ebit(m).amplitudes());
    const std::vector<std::size_t> perm = {0, 2, 1, 3};
    opts.family = std::nullopt;
    return StoredProgram(permute_subsystems(joint, {d, d, m, m}, perm), {}, opts);
}

/// Program of the comb's full unitary with `inputs` in its slots, obtained by
/// composing stored programs of every tooth and every (lifted) input.
inline StoredProgram realize_comb(const Comb &c, const std::vector<StoredProgram> &inputs, ByproductStrategy strategy,
                                  RngStream &rng) {
    if (inputs.size() != c.slot_count()) {
        throw ArgumentError("realize_comb: comb has " + std::to_string(c.slot_count()) + " slots, got " +
                            std::to_string(inputs.size()) + " inputs");
    }
    const std::size_t memory = c.memory_dims.back();
    auto tooth_program = [&](std::size_t k) {
        const UnitaryOp lifted = kron(c.teeth[k], UnitaryOp::identity(memory / c.memory_dims[k]));
        return StoredProgram::from_unitary(lifted);
    };
    StoredProgram acc = tooth_program(0);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs[k].d() != c.system_dim) {
            throw DimensionError("realize_comb: input " + std::to_string(k) + " does not act on the system wire");
        }
        acc = compose(acc, lift_program(inputs[k], memory), strategy, rng).program;
        acc = compose(acc, tooth_program(k + 1), strategy, rng).program;
    }
    return acc;
}

/// Channel rho -> tr_m W (rho (x) |0><0|_m) W^dag of a program on system (x) memory.
inline KrausChannel comb_channel(const StoredProgram &p, std::size_t system_dim) {
    const std::size_t total = p.d();
    if (system_dim == 0 || total % system_dim != 0) {
        throw DimensionError("comb_channel: system dimension does not divide the program dimension");
    }
    const std::size_t m = total / system_dim;
    const CMatrix w = unvec(p.vector(), total);
    std::vector<CMatrix> ops;
    for (std::size_t mo = 0; mo < m; ++mo) {
        CMatrix k(system_dim, system_dim);
        for (std::size_t so = 0; so < system_dim; ++so) {
            for (std::size_t si = 0; si < system_dim; ++si) {
                k(so, si) = w(so * m + mo, si * m);
            }
        }
        ops.push_back(std::move(k));
    }
    return KrausChannel(std::move(ops), 1e-9);
}

}  // namespace qvn
