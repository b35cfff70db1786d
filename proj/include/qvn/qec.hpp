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

// Small codes given by an explicit isometry: Knill-Laflamme checks,
// recovery construction, detection, encoded ebits, and composition of
// encoded programs. Everything is dense; n <= 6 physical qubits is the
// intended range (logical_compose needs 4n <= 12).
//
// Code file:
//
//   QVN1 name=<token> n=<qubits>
//   code k=<logical qubits> distance=<d> [builtin=bitflip3|phaseflip3]
//   isometry data=<re,im;...>          (2^n x 2^k, omitted for builtins)
//   error pauli=<string over IXYZ>      (any number of error lines)
//   error data=<re,im;...>              (2^n x 2^n)

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qvn/description.hpp"
#include "qvn/duality.hpp"
#include "qvn/gates.hpp"
#include "qvn/kernel.hpp"
#include "qvn/uqt.hpp"

namespace qvn {

using RMatrix = Eigen::MatrixXd;

class Code {
   public:
    /// `v` maps 2^k logical amplitudes to 2^n physical ones; V^dag V = I is
    /// checked to `tol`.
    Code(std::string name, std::size_t n, std::size_t k, CMatrix v, std::size_t distance = 1, double tol = 1e-10)
        : name_(std::move(name)), n_(n), k_(k), v_(std::move(v)), distance_(distance) {
        if (k > n || n > 12) {
            throw ArgumentError("Code: need k <= n <= 12, got n=" + std::to_string(n) + " k=" + std::to_string(k));
        }
        const auto rows = static_cast<Eigen::Index>(std::size_t{1} << n);
        const auto cols = static_cast<Eigen::Index>(std::size_t{1} << k);
        if (v_.rows() != rows || v_.cols() != cols) {
            throw DimensionError("Code: isometry is " + shape_str(v_) + ", expected " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
        }
        if (!all_finite(v_)) {
            throw ValidationError("Code: non-finite isometry entry");
        }
        const double r = max_abs(CMatrix(v_.adjoint() * v_) - identity(static_cast<std::size_t>(cols)));
        if (r > tol) {
            throw ValidationError("Code: V^dag V differs from I by " + std::to_string(r));
        }
        p_ = v_ * v_.adjoint();
    }

    /// V = I on n qubits.
    static Code trivial(std::size_t n) {
        return Code("trivial", n, n, identity(std::size_t{1} << n), 1);
    }
    /// |b> -> |bbb>.
    static Code bitflip3() {
        CMatrix v = CMatrix::Zero(8, 2);
        v(0, 0) = 1;
        v(7, 1) = 1;
        return Code("bitflip3", 3, 1, v, 1);
    }
    /// |0> -> |+++>, |1> -> |--->.
    static Code phaseflip3() {
        const CMatrix h3 = kron(kron(gates::H(), gates::H()), gates::H());
        return Code("phaseflip3", 3, 1, h3 * bitflip3().isometry(), 1);
    }
    static std::optional<Code> builtin(std::string_view name) {
        if (name == "bitflip3") {
            return bitflip3();
        }
        if (name == "phaseflip3") {
            return phaseflip3();
        }
        return std::nullopt;
    }

    const std::string &name() const {
        return name_;
    }
    std::size_t n() const {
        return n_;
    }
    std::size_t k() const {
        return k_;
    }
    std::size_t physical_dim() const {
        return std::size_t{1} << n_;
    }
    std::size_t logical_dim() const {
        return std::size_t{1} << k_;
    }
    std::size_t distance() const {
        return distance_;
    }
    const CMatrix &isometry() const {
        return v_;
    }
    const CMatrix &projector() const {
        return p_;
    }

    /// V u V^dag + (I - P): a logical unitary lifted to the physical space.
    CMatrix encode_operator(const CMatrix &u) const {
        if (static_cast<std::size_t>(u.rows()) != logical_dim() || u.rows() != u.cols()) {
            throw DimensionError("Code: logical operator is " + shape_str(u));
        }
        return v_ * u * v_.adjoint() + (identity(physical_dim()) - p_);
    }

   private:
    std::string name_;
    std::size_t n_;
    std::size_t k_;
    CMatrix v_;
    CMatrix p_;
    std::size_t distance_;
};

struct ErrorSet {
    std::vector<CMatrix> ops;
    std::vector<std::string> labels;  // same length as ops

    ErrorSet &add(CMatrix e, std::string label) {
        ops.push_back(std::move(e));
        labels.push_back(std::move(label));
        return *this;
    }
    ErrorSet &add_pauli(const std::string &s) {
        return add(gates::pauli_string(s), s);
    }
    std::size_t size() const {
        return ops.size();
    }
    static ErrorSet paulis(std::initializer_list<const char *> strings) {
        ErrorSet e;
        for (const char *s : strings) {
            e.add_pauli(s);
        }
        return e;
    }
};

namespace detail {

inline void check_errors(const Code &code, const ErrorSet &errors) {
    if (errors.ops.empty()) {
        throw ArgumentError("qec: empty error set");
    }
    const auto d = static_cast<Eigen::Index>(code.physical_dim());
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (errors.ops[i].rows() != d || errors.ops[i].cols() != d) {
            throw DimensionError("qec: error " + std::to_string(i) + " is " + shape_str(errors.ops[i]) +
                                 ", code space lives in dimension " + std::to_string(d));
        }
    }
}

}  // namespace detail

struct KLResult {
    bool satisfied = false;
    CMatrix c;            // c_ij with P E_i^dag E_j P = c_ij P
    RMatrix residuals;    // ||P E_i^dag E_j P - c_ij P||_max
    double residual = 0;  // max of residuals
};

/// c_ij = tr(P E_i^dag E_j P) / tr(P); the pair is fine when the residual
/// of the proportionality is within `tol`.
inline KLResult check_kl(const Code &code, const ErrorSet &errors, double tol = 1e-9) {
    detail::check_errors(code, errors);
    const CMatrix &p = code.projector();
    const double kdim = static_cast<double>(code.logical_dim());
    const auto m = static_cast<Eigen::Index>(errors.size());
    std::vector<CMatrix> ep;
    for (const auto &e : errors.ops) {
        ep.push_back(e * p);
    }
    KLResult out;
    out.c = CMatrix::Zero(m, m);
    out.residuals = RMatrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const CMatrix block = ep[i].adjoint() * ep[j];
            const cplx c = block.trace() / kdim;
            out.c(i, j) = c;
            out.residuals(i, j) = max_abs(CMatrix(block - c * p));
        }
    }
    out.residual = out.residuals.maxCoeff();
    out.satisfied = out.residual <= tol;
    return out;
}

/// Raised by build_recovery when the set is not correctable.
class KnillLaflammeError : public PreconditionError {
   public:
    KnillLaflammeError(const std::string &what, RMatrix residuals)
        : PreconditionError(what), residuals_(std::move(residuals)) {
    }
    const RMatrix &residuals() const noexcept {
        return residuals_;
    }

   private:
    RMatrix residuals_;
};

struct Recovery {
    std::vector<CMatrix> kraus;  // R_k, then the completion element if any
    std::size_t rank = 0;        // number of R_k before completion
    bool completed = false;

    KrausChannel channel(double tol = 1e-9) const {
        return KrausChannel(kraus, tol);
    }
};

/// Diagonalize c = W diag(d_k) W^dag, F_k = sum_i W_ik E_i and
/// R_k = P F_k^dag / sqrt(d_k) for d_k above 1e-12 max d. The sum of
/// R_k^dag R_k is the projector Q onto the error-image of the code; the
/// completion sqrt(I - Q) leaves that complement where it is, outside the
/// code space, which flags the failure.
inline Recovery build_recovery(const Code &code, const ErrorSet &errors, double tol = 1e-9) {
    const KLResult kl = check_kl(code, errors, tol);
    if (!kl.satisfied) {
        throw KnillLaflammeError("build_recovery: Knill-Laflamme condition fails with residual " +
                                     std::to_string(kl.residual),
                                 kl.residuals);
    }
    const CMatrix herm = 0.5 * (kl.c + kl.c.adjoint());
    const HermitianEigen eig = hermitian_eigen(herm);
    const double top = eig.values.cwiseAbs().maxCoeff();
    if (!(top > 0)) {
        throw NumericalError("build_recovery: every error annihilates the code space");
    }
    const CMatrix &p = code.projector();
    const std::size_t dim = code.physical_dim();
    Recovery out;
    CMatrix q = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
        const double dk = eig.values(k);
        if (dk <= 1e-12 * top) {
            continue;
        }
        CMatrix f = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < errors.size(); ++i) {
            f += eig.vectors(static_cast<Eigen::Index>(i), k) * errors.ops[i];
        }
        CMatrix r = p * f.adjoint() / std::sqrt(dk);
        q += r.adjoint() * r;
        out.kraus.push_back(std::move(r));
    }
    out.rank = out.kraus.size();
    const HermitianEigen rest = hermitian_eigen(CMatrix(identity(dim) - 0.5 * (q + q.adjoint())));
    if (rest.values.maxCoeff() > tol) {
        const Eigen::VectorXd s = rest.values.cwiseMax(0.0).cwiseSqrt();
        out.kraus.push_back(rest.vectors * s.cast<cplx>().asDiagonal() * rest.vectors.adjoint());
        out.completed = true;
    }
    return out;
}

/// Kraus list sqrt(w_i) E_i; equal weights by default, scaled so the
/// result is trace preserving. Throws NotCptpError when sum w_i E_i^dag E_i
/// is not a multiple of I.
inline KrausChannel noise_channel(const ErrorSet &errors, std::vector<double> weights = {}, double tol = 1e-9) {
    if (errors.ops.empty()) {
        throw ArgumentError("noise_channel: empty error set");
    }
    if (weights.empty()) {
        weights.assign(errors.size(), 1.0);
    }
    if (weights.size() != errors.size()) {
        throw ArgumentError("noise_channel: one weight per error is needed");
    }
    const auto d = errors.ops.front().rows();
    CMatrix sum = CMatrix::Zero(d, d);
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (weights[i] < 0) {
            throw ArgumentError("noise_channel: negative weight");
        }
        sum += weights[i] * errors.ops[i].adjoint() * errors.ops[i];
    }
    const double scale = sum.trace().real() / static_cast<double>(d);
    if (!(scale > 0)) {
        throw NumericalError("noise_channel: errors vanish");
    }
    std::vector<CMatrix> kraus;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (weights[i] > 0) {
            kraus.push_back(std::sqrt(weights[i] / scale) * errors.ops[i]);
        }
    }
    return KrausChannel(std::move(kraus), tol);
}

struct DetectionResult {
    bool satisfied = false;
    std::vector<cplx> e;             // P E_i P = e_i P
    std::vector<double> residuals;
    double residual = 0;
};

inline DetectionResult check_detection(const Code &code, const ErrorSet &errors, double tol = 1e-9) {
    detail::check_errors(code, errors);
    const CMatrix &p = code.projector();
    const double kdim = static_cast<double>(code.logical_dim());
    DetectionResult out;
    for (const auto &err : errors.ops) {
        const CMatrix block = p * err * p;
        const cplx e = block.trace() / kdim;
        const double r = max_abs(CMatrix(block - e * p));
        out.e.push_back(e);
        out.residuals.push_back(r);
        out.residual = std::max(out.residual, r);
    }
    out.satisfied = out.residual <= tol;
    return out;
}

/// V alpha for a logical state alpha.
inline PureState encode_state(const Code &code, const PureState &logical) {
    if (logical.dim() != code.logical_dim()) {
        throw DimensionError("encode_state: logical state has dimension " + std::to_string(logical.dim()));
    }
    return PureState(code.isometry() * logical.amplitudes(), Dims(code.n(), 2), 1e-9);
}

/// (V (x) V)|omega>, physical qubits of the head block first.
inline PureState logical_ebit(const Code &code) {
    const std::size_t kd = code.logical_dim();
    const CMatrix vv = kron(code.isometry(), code.isometry());
    return PureState(vv * vec(identity(kd)), Dims(2 * code.n(), 2), 1e-9);
}

/// (V (x) V)|omega_U> for a logical unitary U.
inline PureState logical_program_state(const Code &code, const CMatrix &u) {
    if (static_cast<std::size_t>(u.rows()) != code.logical_dim()) {
        throw DimensionError("logical_program_state: logical operator is " + shape_str(u));
    }
    const CMatrix vv = kron(code.isometry(), code.isometry());
    return PureState(vv * vec(u), Dims(2 * code.n(), 2), 1e-9);
}

/// (V^dag (x) V^dag) applied to a physical program vector.
inline CVector decode_program(const Code &code, const CVector &physical) {
    const CMatrix vv = kron(code.isometry(), code.isometry());
    if (physical.size() != vv.rows()) {
        throw DimensionError("decode_program: vector does not live on two code blocks");
    }
    return vv.adjoint() * physical;
}

// ---------------------------------------------------------------------------
// Composition of encoded programs
// ---------------------------------------------------------------------------

struct LogicalComposeResult {
    StoredProgram program;            // decoded, on the logical space
    CVector physical;                 // encoded result on two code blocks
    std::vector<std::size_t> outcomes;
    double leakage = 0;               // 1 - |decoded|^2
};

namespace detail {

/// Encoded Bell measurement on physical blocks (a, b) of a four-block
/// state, followed by the encoded correction `corr(k)` on the first
/// remaining block. Remaining blocks come back in the order (other, first).
template <typename Corr>
CVector encoded_round(const Code &code, const CVector &v1, const CVector &v2, std::size_t a, std::size_t b,
                      const BellBasis &basis, RngStream &rng, std::vector<std::size_t> &outcomes, Corr corr) {
    const std::size_t dp = code.physical_dim();
    const Dims dims(4, dp);
    const CVector joint = kron(v1, v2);
    const CMatrix vv = kron(code.isometry(), code.isometry());
    const std::vector<std::size_t> sel = {a, b};
    std::vector<CVector> rests;
    std::vector<double> probs;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        rests.push_back(project_out(joint, dims, sel, CVector(vv * basis.vector(k))));
        probs.push_back(rests.back().squaredNorm());
    }
    const std::size_t k = rng.sample_discrete(probs);
    outcomes.push_back(k);
    const std::vector<std::size_t> swap = {1, 0};
    const CVector out = permute_subsystems(rests[k] / std::sqrt(probs[k]), {dp, dp}, swap);
    if (k == 0) {
        return out;
    }
    return apply_on(out, {dp, dp}, code.encode_operator(corr(k)), std::vector<std::size_t>{0});
}

inline CVector encode_program(const Code &code, const StoredProgram &p) {
    return kron(code.isometry(), code.isometry()) * p.vector();
}

inline void require_symmetric_physical(const Code &code, const StoredProgram &p, const char *which) {
    const CMatrix phys = code.encode_operator(p.unitary().matrix());
    if (symmetry_residual(phys) > 1e-9) {
        throw ConfigurationError(std::string("logical_compose: ") + which +
                                 " is not symmetric in the physical basis; give it symmetric factors and use "
                                 "the symmetric strategy");
    }
}

}  // namespace detail

/// Composes two logical programs (StoredPrograms on the code's logical
/// dimension) with every step carried out on the encoded states: encoded
/// Bell measurements and encoded corrections. Logical gates applied in the
/// encoded domain must be symmetric in the physical basis, so rus and table
/// need a symmetric second program and symmetric runs through its factors.
inline LogicalComposeResult logical_compose(const Code &code, const StoredProgram &p1, const StoredProgram &p2,
                                            ByproductStrategy strategy, RngStream &rng,
                                            const ComposeOptions &opts = {}) {
    const std::size_t kd = code.logical_dim();
    if (p1.d() != kd || p2.d() != kd) {
        throw DimensionError("logical_compose: programs must act on the " + std::to_string(kd) +
                             "-dimensional logical space");
    }
    if (4 * code.n() > 12) {
        throw ArgumentError("logical_compose: four code blocks of " + std::to_string(code.n()) +
                            " qubits exceed the 12-qubit limit");
    }
    if (p1.family() != p2.family()) {
        throw ConfigurationError("logical_compose: programs use different Pauli bases");
    }
    const BellBasis basis(PauliBasis(kd, p1.family()));
    const CVector e1 = detail::encode_program(code, p1);
    std::vector<std::size_t> outcomes;
    CVector out;
    switch (strategy) {
        case ByproductStrategy::RepeatUntilSuccess: {
            detail::require_symmetric_physical(code, p2, "the second program");
            const CVector e2 = detail::encode_program(code, p2);
            for (std::size_t trial = 0;; ++trial) {
                if (trial == opts.max_trials) {
                    throw NumericalError("logical_compose: no trivial outcome after " + std::to_string(trial) +
                                         " trials");
                }
                std::vector<std::size_t> one;
                const CVector r = detail::encoded_round(code, e1, e2, 0, 3, basis, rng, one,
                                                        [&](std::size_t) { return identity(kd); });
                outcomes.push_back(one.front());
                if (one.front() == 0) {
                    out = r;
                    break;
                }
            }
            break;
        }
        case ByproductStrategy::CorrectionTable: {
            detail::require_symmetric_physical(code, p2, "the second program");
            if (!p2.has_corrections()) {
                throw ConfigurationError("logical_compose: second program carries no correction table");
            }
            out = detail::encoded_round(code, e1, detail::encode_program(code, p2), 0, 3, basis, rng, outcomes,
                                        [&](std::size_t k) { return p2.correction(k); });
            break;
        }
        case ByproductStrategy::SymmetricPair: {
            if (!p2.has_factors()) {
                throw ConfigurationError("logical_compose: second program is not symmetric and carries no factors");
            }
            const StoredProgram &s2 = p2.factor_program(1);
            const StoredProgram &s1 = p2.factor_program(0);
            detail::require_symmetric_physical(code, s2, "factor S2");
            detail::require_symmetric_physical(code, s1, "factor S1");
            const CVector mid = detail::encoded_round(code, e1, detail::encode_program(code, s2), 0, 2, basis, rng,
                                                      outcomes, [&](std::size_t k) { return s2.correction(k); });
            out = detail::encoded_round(code, mid, detail::encode_program(code, s1), 0, 2, basis, rng, outcomes,
                                        [&](std::size_t k) { return s1.correction(k); });
            break;
        }
    }
    const CVector decoded = decode_program(code, out);
    const double kept = decoded.squaredNorm();
    if (!(kept > 1e-12)) {
        throw NumericalError("logical_compose: result left the code space");
    }
    ProgramOptions result_opts = opts.result;
    result_opts.family = p1.family();
    std::optional<ProgramDescription> desc;
    if (p1.description() && p2.description() && p1.description()->n == p2.description()->n) {
        desc = concatenate(*p1.description(), *p2.description());
    }
    LogicalComposeResult r{StoredProgram(decoded / std::sqrt(kept), std::move(desc), result_opts), out,
                           std::move(outcomes), 1.0 - kept};
    return r;
}

// ---------------------------------------------------------------------------
// Code files
// ---------------------------------------------------------------------------

struct CodeDocument {
    Code code;
    ErrorSet errors;
};

inline CodeDocument parse_code_document(std::string_view doc) {
    const auto lines = text::tokenize(doc);
    if (lines.empty()) {
        throw ParseError(1, 1, "empty document");
    }
    const auto &h = lines.front();
    text::expect_header(h, "QVN1");
    h.check_keys({"name", "n"});
    const std::string name = h.require("name").value;
    if (!valid_token(name)) {
        throw ParseError(h.number, h.require("name").column, "invalid code name");
    }
    const std::size_t n = text::parse_count(h, h.require("n"));
    if (n == 0 || n > 12) {
        throw ParseError(h.number, h.require("n").column, "n must be between 1 and 12");
    }
    const std::size_t dp = std::size_t{1} << n;

    std::size_t i = 1;
    if (i >= lines.size() || lines[i].head != "code") {
        throw ParseError(i < lines.size() ? lines[i].number : h.number, 1, "expected a 'code' line");
    }
    const auto &cl = lines[i++];
    cl.check_keys({"k", "distance", "builtin"});
    const std::size_t k = text::parse_count(cl, cl.require("k"));
    if (k > n) {
        throw ParseError(cl.number, cl.require("k").column, "k exceeds n");
    }
    std::size_t distance = 1;
    if (const auto *f = cl.find("distance")) {
        distance = text::parse_count(cl, *f);
    }
    std::optional<Code> code;
    if (const auto *b = cl.find("builtin")) {
        code = Code::builtin(b->value);
        if (!code) {
            throw ParseError(cl.number, b->column, "unknown builtin code '" + b->value + "'");
        }
        if (code->n() != n || code->k() != k) {
            throw ParseError(cl.number, b->column, "builtin " + b->value + " has n=" + std::to_string(code->n()) +
                                                       " k=" + std::to_string(code->k()));
        }
        code = Code(name, n, k, code->isometry(), distance);
    } else {
        if (i >= lines.size() || lines[i].head != "isometry") {
            throw ParseError(i < lines.size() ? lines[i].number : cl.number, 1, "expected an 'isometry' line");
        }
        const auto &il = lines[i++];
        il.check_keys({"data"});
        const CMatrix v = text::parse_matrix(il, il.require("data"), dp, std::size_t{1} << k);
        try {
            code = Code(name, n, k, v, distance);
        } catch (const ValidationError &e) {
            throw ParseError(il.number, 0, e.what());
        }
    }

    ErrorSet errors;
    for (; i < lines.size(); ++i) {
        const auto &l = lines[i];
        if (l.head != "error") {
            throw ParseError(l.number, l.head_column == 0 ? 1 : l.head_column,
                             l.head.empty() ? "expected an 'error' line" : "unexpected word '" + l.head + "'");
        }
        l.check_keys({"pauli", "data", "label"});
        const auto *ps = l.find("pauli");
        const auto *ds = l.find("data");
        if ((ps == nullptr) == (ds == nullptr)) {
            throw ParseError(l.number, 0, "an error line takes exactly one of pauli= and data=");
        }
        std::string label;
        if (const auto *lb = l.find("label")) {
            label = lb->value;
        }
        if (ps != nullptr) {
            if (ps->value.size() != n || ps->value.find_first_not_of("IXYZ") != std::string::npos) {
                throw ParseError(l.number, ps->column, "pauli must be " + std::to_string(n) + " letters over IXYZ");
            }
            errors.add(gates::pauli_string(ps->value), label.empty() ? ps->value : label);
        } else {
            errors.add(text::parse_matrix(l, *ds, dp, dp), label.empty() ? "E" + std::to_string(errors.size()) : label);
        }
    }
    return {std::move(*code), std::move(errors)};
}

}  // namespace qvn
