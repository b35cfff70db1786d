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

#pragma once

// Channel-state duality.
//
// A Choi state lives on two sites, A (output, "head") followed by B (input,
// "tail"), and is normalized to unit trace:
//
//     omega_E = (E (x) I)(|omega><omega|),   |omega> = sum_i |ii> / sqrt(d).
//
// The vectorization of an operator uses the same reference state, so that
// vec(A)[i*d + j] = A(i, j) / sqrt(d).

#include <optional>

#include "qvn/kernel.hpp"

namespace qvn {

/// Bold (single high-dimensional tail) vectorization (A (x) I)|omega>.
inline CVector vec(const CMatrix &a) {
    if (a.rows() != a.cols()) {
        throw ArgumentError("vec: operator is not square (" + shape_str(a) + ")");
    }
    const Eigen::Index d = a.rows();
    CVector v(d * d);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            v(i * d + j) = a(i, j) * s;
        }
    }
    return v;
}

/// Inverse of `vec`.
inline CMatrix unvec(const CVector &v, std::size_t d) {
    if (static_cast<std::size_t>(v.size()) != d * d) {
        throw DimensionError("unvec: vector length is not d^2");
    }
    CMatrix a(d, d);
    const double s = std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            a(i, j) = v(i * d + j) * s;
        }
    }
    return a;
}

/// The ebit |omega> of dimension d (x) d.
inline PureState ebit(std::size_t d) {
    return PureState(vec(identity(d)), {d, d});
}

// ---------------------------------------------------------------------------
// Vectorization conventions for multipartite operators
// ---------------------------------------------------------------------------

/// How an operator on n subsystems is bent onto the tail side.
///
/// `Bold` treats the whole operator as acting on one d^n-level system with a
/// single high-dimensional tail. `PerSubsystem` pairs every subsystem with
/// its own tail; the tails appear in reverse order, as happens when the
/// wires are bent over one another, so the tail side carries R A^t R with R
/// the subsystem-reversal permutation.
enum class VecConvention { Bold, PerSubsystem };

struct Vectorized {
    CVector amplitudes;  // may be unnormalized
    Dims dims;
};

namespace detail {

inline std::size_t integer_root(std::size_t value, std::size_t parts) {
    if (parts == 0) {
        throw ArgumentError("vectorize: parts must be positive");
    }
    const auto guess = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(value), 1.0 / parts)));
    for (std::size_t cand = guess > 0 ? guess - 1 : 0; cand <= guess + 1; ++cand) {
        std::size_t p = 1;
        for (std::size_t i = 0; i < parts; ++i) {
            p *= cand;
        }
        if (p == value) {
            return cand;
        }
    }
    throw DimensionError("vectorize: dimension " + std::to_string(value) + " is not a perfect power of " +
                         std::to_string(parts) + " parts");
}

}  // namespace detail

/// Permutation matrix reversing the order of the factors in `dims`.
inline CMatrix reversal_operator(const Dims &dims) {
    std::vector<std::size_t> perm(dims.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    const std::size_t d = dim_product(dims);
    CMatrix r = CMatrix::Zero(d, d);
    for (std::size_t c = 0; c < d; ++c) {
        CVector e = CVector::Zero(d);
        e(c) = 1.0;
        r.col(c) = permute_subsystems(e, dims, perm);
    }
    return r;
}

/// (A (x) I)|omega>^{(x) parts}. With parts == 1 this is the bold
/// convention; with parts > 1 every factor of dimension dim^(1/parts) gets
/// its own tail, tails stored in reversed order after all heads.
inline Vectorized vectorize(const CMatrix &a, std::size_t parts = 1) {
    if (a.rows() != a.cols()) {
        throw ArgumentError("vectorize: operator is not square (" + shape_str(a) + ")");
    }
    const auto dim = static_cast<std::size_t>(a.rows());
    if (parts == 1) {
        return {vec(a), {dim, dim}};
    }
    const std::size_t d = detail::integer_root(dim, parts);
    Dims sub(parts, d);
    const CMatrix r = reversal_operator(sub);
    // Nested reference state (I (x) R)|omega_dim>.
    CVector v = apply_on(vec(a), {dim, dim}, r, std::vector<std::size_t>{1});
    return {std::move(v), Dims(2 * parts, d)};
}

/// The operator that the tail side carries: A^t (bold) or R A^t R.
inline CMatrix tail_operator(const CMatrix &a, std::size_t parts = 1) {
    if (parts == 1) {
        return a.transpose();
    }
    const std::size_t d = detail::integer_root(static_cast<std::size_t>(a.rows()), parts);
    const CMatrix r = reversal_operator(Dims(parts, d));
    return r * a.transpose() * r.adjoint();
}

// ---------------------------------------------------------------------------
// ChoiState
// ---------------------------------------------------------------------------

/// Dual state of a channel on sites (A = head/output, B = tail/input).
class ChoiState {
   public:
    /// General (mixed) Choi state. Validates trace, positivity and the
    /// trace-preservation witness tr_A = I/d.
    ChoiState(CMatrix m, std::size_t d, double tol = kDefaultTolerance) : d_(d), rho_(check(std::move(m), d, tol)) {
    }

    /// Rank-1 Choi state with its amplitude vector cached.
    static ChoiState pure(const CVector &amplitudes, double tol = kDefaultTolerance) {
        const auto n = static_cast<std::size_t>(amplitudes.size());
        const auto d = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
        if (d * d != n) {
            throw DimensionError("ChoiState::pure: length is not a square");
        }
        ChoiState c(amplitudes * amplitudes.adjoint(), d, tol);
        c.vector_ = amplitudes;
        return c;
    }

    std::size_t d() const {
        return d_;
    }
    const DensityOperator &density() const {
        return rho_;
    }
    const CMatrix &matrix() const {
        return rho_.matrix();
    }
    bool is_pure() const {
        return vector_.has_value();
    }
    /// Amplitudes of a rank-1 Choi state.
    const CVector &vector() const {
        if (!vector_) {
            throw ArgumentError("ChoiState: not a pure Choi state");
        }
        return *vector_;
    }
    PureState pure_state() const {
        return PureState(vector(), {d_, d_}, 1e-9);
    }

    /// tr_B omega = E(I)/d.
    CMatrix head_marginal() const {
        return partial_trace_matrix(rho_.matrix(), {d_, d_}, std::vector<std::size_t>{0});
    }
    /// tr_A omega = I/d for every trace-preserving channel.
    CMatrix tail_marginal() const {
        return partial_trace_matrix(rho_.matrix(), {d_, d_}, std::vector<std::size_t>{1});
    }

   private:
    static DensityOperator check(CMatrix m, std::size_t d, double tol) {
        if (m.rows() != static_cast<Eigen::Index>(d * d) || m.cols() != m.rows()) {
            throw DimensionError("ChoiState: matrix " + shape_str(m) + " is not (d^2 x d^2)");
        }
        DensityOperator rho(std::move(m), {d, d}, tol);
        const CMatrix tail = partial_trace_matrix(rho.matrix(), {d, d}, std::vector<std::size_t>{1});
        const double r = max_abs(tail - identity(d) / static_cast<double>(d));
        if (r > tol) {
            throw NotCptpError("ChoiState: ||tr_A omega - I/d||_max = " + std::to_string(r));
        }
        return rho;
    }

    std::size_t d_;
    DensityOperator rho_;
    std::optional<CVector> vector_;
};

inline ChoiState choi_of_unitary(const UnitaryOp &u) {
    return ChoiState::pure(vec(u.matrix()));
}

/// (E (x) I)(omega).
inline ChoiState choi_of_channel(const KrausChannel &ch, double tol = kDefaultTolerance) {
    if (ch.dim_in() != ch.dim_out()) {
        throw DimensionError("choi_of_channel: only dimension-preserving channels are supported");
    }
    if (ch.size() == 1) {
        return ChoiState::pure(vec(ch.kraus_ops().front()), tol);
    }
    const std::size_t d = ch.dim_in();
    CMatrix m = CMatrix::Zero(d * d, d * d);
    for (const auto &k : ch.kraus_ops()) {
        const CVector v = vec(k);
        m += v * v.adjoint();
    }
    return ChoiState(std::move(m), d, tol);
}

/// E(rho) = d tr_B[omega_E (I (x) rho^t)], for any square operator rho.
inline CMatrix apply_via_choi(const ChoiState &choi, const CMatrix &rho) {
    const std::size_t d = choi.d();
    if (rho.rows() != static_cast<Eigen::Index>(d) || rho.cols() != rho.rows()) {
        throw DimensionError("apply_via_choi: input " + shape_str(rho) + " does not match d = " + std::to_string(d));
    }
    const CMatrix &w = choi.matrix();
    CMatrix out = CMatrix::Zero(d, d);
    // [omega (I (x) rho^t)]_{(a,b),(a',b')} = sum_c omega_{(a,b),(a',c)} rho_{b',c}
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t ap = 0; ap < d; ++ap) {
            cplx acc = 0.0;
            for (std::size_t b = 0; b < d; ++b) {
                for (std::size_t c = 0; c < d; ++c) {
                    acc += w(a * d + b, ap * d + c) * rho(b, c);
                }
            }
            out(a, ap) = static_cast<double>(d) * acc;
        }
    }
    return out;
}

inline DensityOperator apply_via_choi(const ChoiState &choi, const DensityOperator &rho) {
    return DensityOperator(apply_via_choi(choi, rho.matrix()), rho.dims(), 1e-9, Check::Structural);
}

/// Kraus operators from the eigendecomposition of the Choi state:
/// K_i = sqrt(d lambda_i) unvec(v_i). Eigenvalues below 1e-12 d are dropped.
inline KrausChannel kraus_from_choi(const ChoiState &choi, double tol = kDefaultTolerance) {
    const std::size_t d = choi.d();
    const double r = max_abs(choi.tail_marginal() - identity(d) / static_cast<double>(d));
    if (r > tol) {
        throw NotCptpError("kraus_from_choi: tr_A omega differs from I/d by " + std::to_string(r));
    }
    if (choi.is_pure()) {
        return KrausChannel({unvec(choi.vector(), d)}, std::max(tol, 1e-9));
    }
    const auto eig = hermitian_eigen(choi.matrix());
    const double cutoff = 1e-12 * static_cast<double>(d);
    std::vector<CMatrix> ops;
    for (Eigen::Index i = eig.values.size(); i-- > 0;) {
        const double lambda = eig.values(i);
        if (lambda <= cutoff) {
            continue;
        }
        // unvec already carries sqrt(d); the remaining factor is sqrt(lambda).
        ops.push_back(std::sqrt(lambda) * unvec(eig.vectors.col(i), d));
    }
    return KrausChannel(std::move(ops), std::max(tol, 1e-9));
}

/// Largest (1/2)||E(X) - F(X)||_1 over the d^2 matrix units X = |i><j|.
inline double channel_distance(const KrausChannel &e, const KrausChannel &f) {
    if (e.dim_in() != f.dim_in() || e.dim_out() != f.dim_out()) {
        throw DimensionError("channel_distance: channels have different shapes");
    }
    const std::size_t d = e.dim_in();
    double worst = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            CMatrix x = CMatrix::Zero(d, d);
            x(i, j) = 1.0;
            worst = std::max(worst, 0.5 * trace_norm(e.apply(x) - f.apply(x)));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Dilation
// ---------------------------------------------------------------------------

/// Unitary on system (x) ancilla whose block <i|U|0> is the i-th Kraus
/// operator.
struct Dilation {
    UnitaryOp unitary;
    std::size_t ancilla_dim;
};

/// Completes the orthonormal columns of `w` (n x k) to an n x n unitary whose
/// columns `positions` are the columns of `w`.
inline CMatrix complete_isometry(const CMatrix &w, const std::vector<std::size_t> &positions) {
    const Eigen::Index n = w.rows();
    const Eigen::Index k = w.cols();
    Eigen::HouseholderQR<CMatrix> qr(w);
    const CMatrix q = qr.householderQ();
    CMatrix u(n, n);
    std::vector<bool> used(n, false);
    for (Eigen::Index c = 0; c < k; ++c) {
        u.col(positions[c]) = w.col(c);
        used[positions[c]] = true;
    }
    Eigen::Index next = k;  // columns k.. of q span the orthogonal complement
    for (Eigen::Index c = 0; c < n; ++c) {
        if (!used[c]) {
            u.col(c) = q.col(next++);
        }
    }
    return u;
}

inline Dilation dilate(const KrausChannel &ch) {
    if (ch.dim_in() != ch.dim_out()) {
        throw DimensionError("dilate: only dimension-preserving channels are supported");
    }
    const std::size_t d = ch.dim_in();
    const std::size_t r = ch.size();
    if (r == 1) {
        return {UnitaryOp(ch.kraus_ops().front(), 1e-9), 1};
    }
    // Isometry W = sum_i K_i (x) |i>, system most significant.
    CMatrix w(d * r, d);
    for (std::size_t i = 0; i < r; ++i) {
        const CMatrix &k = ch.kraus_ops()[i];
        for (std::size_t s = 0; s < d; ++s) {
            w.row(s * r + i) = k.row(s);
        }
    }
    std::vector<std::size_t> positions;
    for (std::size_t s = 0; s < d; ++s) {
        positions.push_back(s * r);
    }
    return {UnitaryOp(complete_isometry(w, positions), 1e-9), r};
}

/// tr_a U (rho (x) |0><0|) U^dag.
inline CMatrix apply_dilation(const Dilation &dil, const CMatrix &rho) {
    const std::size_t a = dil.ancilla_dim;
    const std::size_t d = dil.unitary.dim() / a;
    CMatrix anc = CMatrix::Zero(a, a);
    anc(0, 0) = 1.0;
    const CMatrix full = dil.unitary.matrix() * kron(rho, anc) * dil.unitary.matrix().adjoint();
    return partial_trace_matrix(full, {d, a}, std::vector<std::size_t>{0});
}

// ---------------------------------------------------------------------------
// Superchannels and combs
// ---------------------------------------------------------------------------

/// rho -> tr_{a,e} V (E (x) I)(U (rho (x) |0><0|_a) U^dag) (x) |0><0|_e V^dag.
///
/// The pre-unitary acts on system (x) ancilla; the post-unitary acts on
/// system (x) ancilla (x) extra, where the extra factor (possibly trivial)
/// starts in |0>.
struct Superchannel {
    UnitaryOp pre;
    UnitaryOp post;
    std::size_t system_dim;
    std::size_t ancilla_dim;

    Superchannel(UnitaryOp pre_unitary, UnitaryOp post_unitary, std::size_t system, std::size_t ancilla)
        : pre(std::move(pre_unitary)), post(std::move(post_unitary)), system_dim(system), ancilla_dim(ancilla) {
        if (system == 0 || ancilla == 0 || pre.dim() != system * ancilla) {
            throw DimensionError("Superchannel: pre-unitary must act on system (x) ancilla");
        }
        if (post.dim() % (system * ancilla) != 0) {
            throw DimensionError("Superchannel: post-unitary dimension must be a multiple of system (x) ancilla");
        }
    }

    static Superchannel identity(std::size_t d) {
        return Superchannel(UnitaryOp::identity(d), UnitaryOp::identity(d), d, 1);
    }

    std::size_t extra_dim() const {
        return post.dim() / (system_dim * ancilla_dim);
    }
};

/// Channel with minimal Kraus rank equivalent to an arbitrary operator list.
inline KrausChannel compress_kraus(const std::vector<CMatrix> &ops) {
    const std::size_t d = static_cast<std::size_t>(ops.front().rows());
    CMatrix m = CMatrix::Zero(d * d, d * d);
    for (const auto &k : ops) {
        const CVector v = vec(k);
        m += v * v.adjoint();
    }
    return kraus_from_choi(ChoiState(0.5 * (m + m.adjoint()), d, 1e-9), 1e-9);
}

inline KrausChannel apply_superchannel(const Superchannel &s, const KrausChannel &ch) {
    const std::size_t d = s.system_dim;
    const std::size_t a = s.ancilla_dim;
    const std::size_t e = s.extra_dim();
    if (ch.dim_in() != d || ch.dim_out() != d) {
        throw DimensionError("apply_superchannel: channel acts on dimension " + std::to_string(ch.dim_in()) +
                             ", superchannel expects " + std::to_string(d));
    }
    // Columns of U with the ancilla in |0>.
    CMatrix pre_cols(d * a, d);
    for (std::size_t c = 0; c < d; ++c) {
        pre_cols.col(c) = s.pre.matrix().col(c * a);
    }
    const CMatrix ia = identity(a);
    std::vector<CMatrix> ops;
    for (const auto &k : ch.kraus_ops()) {
        const CMatrix mid = kron(k, ia) * pre_cols;  // (d a) x d
        CMatrix lifted = CMatrix::Zero(d * a * e, d);
        for (std::size_t row = 0; row < d * a; ++row) {
            lifted.row(row * e) = mid.row(row);
        }
        const CMatrix out = s.post.matrix() * lifted;  // (d a e) x d
        for (std::size_t m = 0; m < a * e; ++m) {
            CMatrix l(d, d);
            for (std::size_t so = 0; so < d; ++so) {
                l.row(so) = out.row(so * a * e + m);
            }
            ops.push_back(std::move(l));
        }
    }
    return compress_kraus(ops);
}

/// Action on a Choi state through the Kraus representation.
inline ChoiState apply_superchannel_choi(const Superchannel &s, const ChoiState &choi) {
    return choi_of_channel(apply_superchannel(s, kraus_from_choi(choi)), 1e-9);
}

/// Action on a Choi state by bending wires: the input channel is fed its
/// argument through a Bell projection on (system, B) of omega_E, so no Kraus
/// decomposition is formed. Agrees with `apply_superchannel_choi`.
inline ChoiState apply_superchannel_choi_bent(const Superchannel &s, const ChoiState &choi) {
    const std::size_t d = s.system_dim;
    const std::size_t a = s.ancilla_dim;
    const std::size_t e = s.extra_dim();
    if (choi.d() != d) {
        throw DimensionError("apply_superchannel_choi: Choi dimension does not match the superchannel");
    }
    // X1 = (U (x) I_R)(|omega><omega|_{s,R} (x) |0><0|_a)(U (x) I_R)^dag, order [s, a, R].
    CVector x0 = CVector::Zero(d * a * d);
    for (std::size_t i = 0; i < d; ++i) {
        x0((i * a + 0) * d + i) = 1.0 / std::sqrt(static_cast<double>(d));
    }
    const CVector x1v = apply_on(x0, {d, a, d}, s.pre.matrix(), std::vector<std::size_t>{0, 1});
    const CMatrix x1 = x1v * x1v.adjoint();
    const CMatrix &w = choi.matrix();  // order [A, B]
    // Y on [a, R, A] = d sum_{i,j} X1[(i,a,R),(j,a',R')] omega[(A,i),(A',j)].
    const std::size_t rest = a * d * d;
    CMatrix y = CMatrix::Zero(rest, rest);
    for (std::size_t an = 0; an < a; ++an) {
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t A = 0; A < d; ++A) {
                const std::size_t row = (an * d + r) * d + A;
                for (std::size_t an2 = 0; an2 < a; ++an2) {
                    for (std::size_t r2 = 0; r2 < d; ++r2) {
                        for (std::size_t A2 = 0; A2 < d; ++A2) {
                            const std::size_t col = (an2 * d + r2) * d + A2;
                            cplx acc = 0.0;
                            for (std::size_t i = 0; i < d; ++i) {
                                for (std::size_t j = 0; j < d; ++j) {
                                    acc += x1((i * a + an) * d + r, (j * a + an2) * d + r2) * w(A * d + i, A2 * d + j);
                                }
                            }
                            y(row, col) = static_cast<double>(d) * acc;
                        }
                    }
                }
            }
        }
    }
    // Reorder to [A, a, e, R] with e in |0>, apply V on (A, a, e), trace (a, e).
    CMatrix z = CMatrix::Zero(d * a * e * d, d * a * e * d);
    for (std::size_t an = 0; an < a; ++an) {
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t A = 0; A < d; ++A) {
                const std::size_t src = (an * d + r) * d + A;
                const std::size_t dst = ((A * a + an) * e + 0) * d + r;
                for (std::size_t an2 = 0; an2 < a; ++an2) {
                    for (std::size_t r2 = 0; r2 < d; ++r2) {
                        for (std::size_t A2 = 0; A2 < d; ++A2) {
                            const std::size_t src2 = (an2 * d + r2) * d + A2;
                            const std::size_t dst2 = ((A2 * a + an2) * e + 0) * d + r2;
                            z(dst, dst2) = y(src, src2);
                        }
                    }
                }
            }
        }
    }
    const CMatrix v_full = kron(s.post.matrix(), identity(d));
    const CMatrix out = v_full * z * v_full.adjoint();
    CMatrix red = partial_trace_matrix(out, {d, a, e, d}, std::vector<std::size_t>{0, 3});
    return ChoiState(0.5 * (red + red.adjoint()), d, 1e-9);
}

/// Unitary teeth threaded by a memory wire, with one slot for an input
/// channel between consecutive teeth.
///
/// Tooth k acts on system (x) memory_dims[k]. The memory starts in |0> and,
/// when memory_dims[k] > memory_dims[k-1], is enlarged by a fresh factor in
/// |0> (the old memory stays the most significant factor). The memory is
/// discarded after the last tooth.
struct Comb {
    std::vector<UnitaryOp> teeth;
    std::size_t system_dim;
    std::vector<std::size_t> memory_dims;

    Comb(std::vector<UnitaryOp> t, std::size_t system, std::vector<std::size_t> memory)
        : teeth(std::move(t)), system_dim(system), memory_dims(std::move(memory)) {
        if (teeth.empty()) {
            throw ArgumentError("Comb: at least one tooth is required");
        }
        if (memory_dims.size() != teeth.size()) {
            throw DimensionError("Comb: one memory dimension per tooth is required");
        }
        for (std::size_t k = 0; k < teeth.size(); ++k) {
            if (memory_dims[k] == 0 || teeth[k].dim() != system_dim * memory_dims[k]) {
                throw DimensionError("Comb: tooth " + std::to_string(k) + " does not act on system (x) memory");
            }
            if (k > 0 && memory_dims[k] % memory_dims[k - 1] != 0) {
                throw DimensionError("Comb: memory dimension of tooth " + std::to_string(k) +
                                     " is not a multiple of the previous one");
            }
        }
    }

    std::size_t slot_count() const {
        return teeth.size() - 1;
    }
};

inline Comb comb_from_superchannel(const Superchannel &s) {
    return Comb({s.pre, s.post}, s.system_dim, {s.ancilla_dim, s.ancilla_dim * s.extra_dim()});
}

/// Threads `inputs` through the comb by propagating the Choi state of the
/// whole network, then reads the resulting channel off it.
inline KrausChannel apply_comb(const Comb &c, const std::vector<KrausChannel> &inputs) {
    if (inputs.size() != c.slot_count()) {
        throw ArgumentError("apply_comb: comb has " + std::to_string(c.slot_count()) + " slots, got " +
                            std::to_string(inputs.size()) + " inputs");
    }
    const std::size_t d = c.system_dim;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs[k].dim_in() != d || inputs[k].dim_out() != d) {
            throw DimensionError("apply_comb: input " + std::to_string(k) + " does not act on the system wire");
        }
    }
    // State on [s, m, R].
    std::size_t m = c.memory_dims.front();
    CVector start = CVector::Zero(d * m * d);
    for (std::size_t i = 0; i < d; ++i) {
        start((i * m + 0) * d + i) = 1.0 / std::sqrt(static_cast<double>(d));
    }
    CMatrix state = start * start.adjoint();
    for (std::size_t k = 0; k < c.teeth.size(); ++k) {
        const std::size_t m_new = c.memory_dims[k];
        if (m_new != m) {
            const std::size_t f = m_new / m;
            CMatrix fresh = CMatrix::Zero(f, f);
            fresh(0, 0) = 1.0;
            // [s, m, R] -> [s, m, f, R]
            CMatrix grown = CMatrix::Zero(d * m_new * d, d * m_new * d);
            const auto idx = [&](std::size_t s, std::size_t mm, std::size_t r) { return (s * m_new + mm * f) * d + r; };
            for (std::size_t s1 = 0; s1 < d; ++s1) {
                for (std::size_t m1 = 0; m1 < m; ++m1) {
                    for (std::size_t r1 = 0; r1 < d; ++r1) {
                        for (std::size_t s2 = 0; s2 < d; ++s2) {
                            for (std::size_t m2 = 0; m2 < m; ++m2) {
                                for (std::size_t r2 = 0; r2 < d; ++r2) {
                                    grown(idx(s1, m1, r1), idx(s2, m2, r2)) =
                                        state((s1 * m + m1) * d + r1, (s2 * m + m2) * d + r2);
                                }
                            }
                        }
                    }
                }
            }
            state = std::move(grown);
            m = m_new;
        }
        const CMatrix tooth = kron(c.teeth[k].matrix(), identity(d));
        state = tooth * state * tooth.adjoint();
        if (k < inputs.size()) {
            CMatrix next = CMatrix::Zero(state.rows(), state.cols());
            for (const auto &kr : inputs[k].kraus_ops()) {
                const CMatrix op = kron(kron(kr, identity(m)), identity(d));
                next += op * state * op.adjoint();
            }
            state = std::move(next);
        }
    }
    CMatrix choi = partial_trace_matrix(state, {d, m, d}, std::vector<std::size_t>{0, 2});
    return kraus_from_choi(ChoiState(0.5 * (choi + choi.adjoint()), d, 1e-9), 1e-9);
}

}  // namespace qvn
