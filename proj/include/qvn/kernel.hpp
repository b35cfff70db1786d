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

// Dense complex linear algebra and exact state semantics.
//
// Composite systems are big-endian: in a tensor product A (x) B the index of
// A is the most significant digit of the composite index.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qvn/error.hpp"
#include "qvn/rng.hpp"

namespace qvn {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using Dims = std::vector<std::size_t>;

inline constexpr double kDefaultTolerance = 1e-10;

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

inline std::size_t dim_product(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const CMatrix &m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Max-norm ||m||_max.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived> &m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool all_finite(const CMatrix &m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const cplx z = m.data()[i];
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
            return false;
        }
    }
    return true;
}

inline double hermitian_residual(const CMatrix &m) {
    return max_abs(m - m.adjoint());
}

inline double unitary_residual(const CMatrix &m) {
    if (m.rows() != m.cols()) {
        return INFINITY;
    }
    return max_abs(m.adjoint() * m - CMatrix::Identity(m.rows(), m.cols()));
}

inline double symmetry_residual(const CMatrix &m) {
    return max_abs(m - m.transpose());
}

inline CMatrix identity(std::size_t d) {
    return CMatrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
}

/// Kronecker product a (x) b.
inline CMatrix kron(const CMatrix &a, const CMatrix &b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

inline CVector kron(const CVector &a, const CVector &b) {
    CVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        out.segment(i * b.size(), b.size()) = a(i) * b;
    }
    return out;
}

/// Kronecker product of a list, leftmost factor most significant.
inline CMatrix kron_all(std::span<const CMatrix> factors) {
    CMatrix out = CMatrix::Identity(1, 1);
    for (const auto &f : factors) {
        out = kron(out, f);
    }
    return out;
}

/// Eigen-decomposition of a Hermitian matrix (ascending eigenvalues).
struct HermitianEigen {
    RVector values;
    CMatrix vectors;
};

inline HermitianEigen hermitian_eigen(const CMatrix &m) {
    const CMatrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(h);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("hermitian eigendecomposition did not converge");
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

// ---------------------------------------------------------------------------
// Subsystem index arithmetic
// ---------------------------------------------------------------------------

namespace detail {

inline void check_subsystem_list(const Dims &dims, std::span<const std::size_t> sel, const char *what) {
    std::vector<bool> seen(dims.size(), false);
    for (auto s : sel) {
        if (s >= dims.size()) {
            throw ArgumentError(std::string(what) + ": subsystem index " + std::to_string(s) + " out of range (" +
                                std::to_string(dims.size()) + " subsystems)");
        }
        if (seen[s]) {
            throw ArgumentError(std::string(what) + ": subsystem index " + std::to_string(s) + " repeated");
        }
        seen[s] = true;
    }
}

inline std::vector<std::size_t> strides(const Dims &dims) {
    std::vector<std::size_t> st(dims.size(), 1);
    for (std::size_t i = dims.size(); i-- > 1;) {
        st[i - 1] = st[i] * dims[i];
    }
    return st;
}

/// For subsystems `sel` (in the given order) and the complementary set (in
/// ascending order), table[a * rest + t] is the composite index whose digits
/// on `sel` spell `a` and on the rest spell `t`.
struct SplitIndex {
    std::size_t sel_dim = 1;
    std::size_t rest_dim = 1;
    std::vector<std::size_t> table;
    std::vector<std::size_t> rest;

    std::size_t at(std::size_t a, std::size_t t) const {
        return table[a * rest_dim + t];
    }
};

inline SplitIndex split_index(const Dims &dims, std::span<const std::size_t> sel) {
    SplitIndex out;
    std::vector<bool> is_sel(dims.size(), false);
    for (auto s : sel) {
        is_sel[s] = true;
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (!is_sel[i]) {
            out.rest.push_back(i);
        }
    }
    const auto st = strides(dims);
    for (auto s : sel) {
        out.sel_dim *= dims[s];
    }
    for (auto r : out.rest) {
        out.rest_dim *= dims[r];
    }
    // Offsets contributed by each side, computed digit by digit.
    auto offsets = [&](std::span<const std::size_t> subs) {
        std::vector<std::size_t> off{0};
        for (auto s : subs) {
            std::vector<std::size_t> next;
            next.reserve(off.size() * dims[s]);
            for (auto o : off) {
                for (std::size_t v = 0; v < dims[s]; ++v) {
                    next.push_back(o + v * st[s]);
                }
            }
            off = std::move(next);
        }
        return off;
    };
    const auto sel_off = offsets(sel);
    const auto rest_off = offsets(out.rest);
    out.table.resize(out.sel_dim * out.rest_dim);
    for (std::size_t a = 0; a < out.sel_dim; ++a) {
        for (std::size_t t = 0; t < out.rest_dim; ++t) {
            out.table[a * out.rest_dim + t] = sel_off[a] + rest_off[t];
        }
    }
    return out;
}

}  // namespace detail

/// Reorders tensor factors: subsystem j of the result is subsystem perm[j]
/// of the input.
inline CVector permute_subsystems(const CVector &v, const Dims &dims, std::span<const std::size_t> perm) {
    if (perm.size() != dims.size()) {
        throw ArgumentError("permute_subsystems: permutation length mismatch");
    }
    detail::check_subsystem_list(dims, perm, "permute_subsystems");
    const auto split = detail::split_index(dims, perm);
    CVector out(v.size());
    for (std::size_t a = 0; a < split.sel_dim; ++a) {
        out(static_cast<Eigen::Index>(a)) = v(static_cast<Eigen::Index>(split.at(a, 0)));
    }
    return out;
}

inline Dims permute_dims(const Dims &dims, std::span<const std::size_t> perm) {
    Dims out;
    for (auto p : perm) {
        out.push_back(dims[p]);
    }
    return out;
}

/// Applies `op` to the listed subsystems (in that order) of a state vector.
inline CVector apply_on(const CVector &v, const Dims &dims, const CMatrix &op, std::span<const std::size_t> targets) {
    detail::check_subsystem_list(dims, targets, "apply_on");
    const auto split = detail::split_index(dims, targets);
    if (op.rows() != static_cast<Eigen::Index>(split.sel_dim) || op.cols() != op.rows()) {
        throw DimensionError("apply_on: operator " + shape_str(op) + " does not match target dimension " +
                             std::to_string(split.sel_dim));
    }
    CMatrix block(split.sel_dim, split.rest_dim);
    for (std::size_t a = 0; a < split.sel_dim; ++a) {
        for (std::size_t t = 0; t < split.rest_dim; ++t) {
            block(a, t) = v(split.at(a, t));
        }
    }
    const CMatrix res = op * block;
    CVector out(v.size());
    for (std::size_t a = 0; a < split.sel_dim; ++a) {
        for (std::size_t t = 0; t < split.rest_dim; ++t) {
            out(split.at(a, t)) = res(a, t);
        }
    }
    return out;
}

/// Embeds `op` acting on `targets` into the full composite space.
inline CMatrix embed(const CMatrix &op, const Dims &dims, std::span<const std::size_t> targets) {
    const std::size_t d = dim_product(dims);
    CMatrix out(d, d);
    for (std::size_t c = 0; c < d; ++c) {
        CVector e = CVector::Zero(d);
        e(c) = 1.0;
        out.col(c) = apply_on(e, dims, op, targets);
    }
    return out;
}

/// Partial trace of an arbitrary square operator keeping `keep` (in that
/// order).
inline CMatrix partial_trace_matrix(const CMatrix &m, const Dims &dims, std::span<const std::size_t> keep) {
    detail::check_subsystem_list(dims, keep, "partial_trace");
    if (m.rows() != static_cast<Eigen::Index>(dim_product(dims)) || m.cols() != m.rows()) {
        throw DimensionError("partial_trace: matrix " + shape_str(m) + " does not match subsystem dimensions");
    }
    const auto split = detail::split_index(dims, keep);
    CMatrix out = CMatrix::Zero(split.sel_dim, split.sel_dim);
    for (std::size_t a = 0; a < split.sel_dim; ++a) {
        for (std::size_t b = 0; b < split.sel_dim; ++b) {
            cplx acc = 0.0;
            for (std::size_t t = 0; t < split.rest_dim; ++t) {
                acc += m(split.at(a, t), split.at(b, t));
            }
            out(a, b) = acc;
        }
    }
    return out;
}

/// Contracts the listed subsystems of a (possibly unnormalized) vector with
/// the bra <w| and returns the vector left on the remaining subsystems (in
/// ascending order).
inline CVector project_out(const CVector &v, const Dims &dims, std::span<const std::size_t> sel, const CVector &w) {
    detail::check_subsystem_list(dims, sel, "project_out");
    const auto split = detail::split_index(dims, sel);
    if (w.size() != static_cast<Eigen::Index>(split.sel_dim)) {
        throw DimensionError("project_out: bra dimension mismatch");
    }
    CVector out = CVector::Zero(split.rest_dim);
    for (std::size_t a = 0; a < split.sel_dim; ++a) {
        const cplx wa = std::conj(w(a));
        if (wa == cplx(0.0)) {
            continue;
        }
        for (std::size_t t = 0; t < split.rest_dim; ++t) {
            out(t) += wa * v(split.at(a, t));
        }
    }
    return out;
}

inline Dims remove_subsystems(const Dims &dims, std::span<const std::size_t> sel) {
    std::vector<bool> drop(dims.size(), false);
    for (auto s : sel) {
        drop[s] = true;
    }
    Dims out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (!drop[i]) {
            out.push_back(dims[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// How much checking a constructor does. `Structural` skips the
/// eigenvalue-based positivity test for values that are positive by
/// construction.
enum class Check { Full, Structural };

class DensityOperator;

/// Normalized state vector with declared tensor factorization.
class PureState {
   public:
    PureState(CVector amplitudes, Dims dims, double tol = kDefaultTolerance)
        : amps_(std::move(amplitudes)), dims_(std::move(dims)) {
        if (dims_.empty()) {
            dims_ = {static_cast<std::size_t>(amps_.size())};
        }
        if (dim_product(dims_) != static_cast<std::size_t>(amps_.size())) {
            throw DimensionError("PureState: subsystem dimensions do not multiply to " + std::to_string(amps_.size()));
        }
        if (!all_finite(amps_)) {
            throw ValidationError("PureState: non-finite amplitude");
        }
        const double n = amps_.squaredNorm();
        if (std::abs(n - 1.0) > tol) {
            throw ValidationError("PureState: norm^2 = " + std::to_string(n) + " is not 1");
        }
    }

    /// Normalizes `v`; a vanishing vector is a numerical error.
    static PureState normalized(const CVector &v, Dims dims) {
        const double n = v.norm();
        if (!(n > 1e-300)) {
            throw NumericalError("PureState: cannot normalize a zero vector");
        }
        return PureState(v / n, std::move(dims), 1e-9);
    }

    static PureState basis(Dims dims, std::size_t index) {
        const std::size_t d = dim_product(dims);
        if (index >= d) {
            throw ArgumentError("PureState::basis: index out of range");
        }
        CVector v = CVector::Zero(d);
        v(index) = 1.0;
        return PureState(std::move(v), std::move(dims));
    }

    std::size_t dim() const {
        return static_cast<std::size_t>(amps_.size());
    }
    const Dims &dims() const {
        return dims_;
    }
    const CVector &amplitudes() const {
        return amps_;
    }
    cplx amplitude(std::size_t i) const {
        return amps_(static_cast<Eigen::Index>(i));
    }

    DensityOperator density() const;

    /// |a> (x) |b>.
    PureState tensor(const PureState &other) const {
        Dims d = dims_;
        d.insert(d.end(), other.dims_.begin(), other.dims_.end());
        return PureState(kron(amps_, other.amps_), std::move(d), 1e-9);
    }

    PureState apply(const CMatrix &op, std::span<const std::size_t> targets) const {
        return PureState::normalized(apply_on(amps_, dims_, op, targets), dims_);
    }

    PureState permuted(std::span<const std::size_t> perm) const {
        return PureState(permute_subsystems(amps_, dims_, perm), permute_dims(dims_, perm), 1e-9);
    }

   private:
    CVector amps_;
    Dims dims_;
};

/// Hermitian, positive semidefinite, unit-trace operator.
class DensityOperator {
   public:
    DensityOperator(CMatrix matrix, Dims dims, double tol = kDefaultTolerance, Check check = Check::Full)
        : m_(std::move(matrix)), dims_(std::move(dims)) {
        if (m_.rows() != m_.cols()) {
            throw DimensionError("DensityOperator: matrix is not square (" + shape_str(m_) + ")");
        }
        if (dims_.empty()) {
            dims_ = {static_cast<std::size_t>(m_.rows())};
        }
        if (dim_product(dims_) != static_cast<std::size_t>(m_.rows())) {
            throw DimensionError("DensityOperator: subsystem dimensions do not match matrix size");
        }
        if (!all_finite(m_)) {
            throw ValidationError("DensityOperator: non-finite entry");
        }
        if (hermitian_residual(m_) > tol) {
            throw ValidationError("DensityOperator: not Hermitian");
        }
        if (std::abs(m_.trace() - cplx(1.0)) > tol) {
            throw ValidationError("DensityOperator: trace is not 1");
        }
        if (check == Check::Full) {
            const double lo = hermitian_eigen(m_).values.minCoeff();
            if (lo < -tol) {
                throw ValidationError("DensityOperator: negative eigenvalue " + std::to_string(lo));
            }
        }
    }

    static DensityOperator maximally_mixed(Dims dims) {
        const std::size_t d = dim_product(dims);
        return DensityOperator(identity(d) / static_cast<double>(d), std::move(dims));
    }

    std::size_t dim() const {
        return static_cast<std::size_t>(m_.rows());
    }
    const Dims &dims() const {
        return dims_;
    }
    const CMatrix &matrix() const {
        return m_;
    }

    DensityOperator tensor(const DensityOperator &other) const {
        Dims d = dims_;
        d.insert(d.end(), other.dims_.begin(), other.dims_.end());
        return DensityOperator(kron(m_, other.m_), std::move(d), 1e-9, Check::Structural);
    }

   private:
    CMatrix m_;
    Dims dims_;
};

inline DensityOperator PureState::density() const {
    return DensityOperator(amps_ * amps_.adjoint(), dims_, 1e-9, Check::Structural);
}

class UnitaryOp {
   public:
    explicit UnitaryOp(CMatrix m, double tol = kDefaultTolerance) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) {
            throw DimensionError("UnitaryOp: matrix is not square (" + shape_str(m_) + ")");
        }
        if (!all_finite(m_)) {
            throw ValidationError("UnitaryOp: non-finite entry");
        }
        const double r = unitary_residual(m_);
        if (r > tol) {
            throw ValidationError("UnitaryOp: ||U^dag U - I||_max = " + std::to_string(r));
        }
    }
    static UnitaryOp identity(std::size_t d) {
        return UnitaryOp(qvn::identity(d));
    }

    std::size_t dim() const {
        return static_cast<std::size_t>(m_.rows());
    }
    const CMatrix &matrix() const {
        return m_;
    }
    UnitaryOp adjoint() const {
        return UnitaryOp(m_.adjoint(), 1e-8);
    }
    UnitaryOp transpose() const {
        return UnitaryOp(m_.transpose(), 1e-8);
    }
    bool is_symmetric(double tol = kDefaultTolerance) const {
        return symmetry_residual(m_) <= tol;
    }

    friend UnitaryOp operator*(const UnitaryOp &a, const UnitaryOp &b) {
        if (a.dim() != b.dim()) {
            throw DimensionError("UnitaryOp product: dimension mismatch");
        }
        return UnitaryOp(a.m_ * b.m_, 1e-8);
    }

   private:
    CMatrix m_;
};

inline UnitaryOp kron(const UnitaryOp &a, const UnitaryOp &b) {
    return UnitaryOp(kron(a.matrix(), b.matrix()), 1e-8);
}

/// Trace-preserving completely positive map in Kraus form.
class KrausChannel {
   public:
    KrausChannel(std::vector<CMatrix> ops, double tol = kDefaultTolerance) : ops_(std::move(ops)) {
        if (ops_.empty()) {
            throw ValidationError("KrausChannel: empty Kraus list");
        }
        dim_out_ = static_cast<std::size_t>(ops_.front().rows());
        dim_in_ = static_cast<std::size_t>(ops_.front().cols());
        CMatrix sum = CMatrix::Zero(dim_in_, dim_in_);
        for (const auto &k : ops_) {
            if (static_cast<std::size_t>(k.rows()) != dim_out_ || static_cast<std::size_t>(k.cols()) != dim_in_) {
                throw DimensionError("KrausChannel: inconsistent Kraus operator shapes");
            }
            if (!all_finite(k)) {
                throw ValidationError("KrausChannel: non-finite entry");
            }
            sum += k.adjoint() * k;
        }
        const double r = max_abs(sum - qvn::identity(dim_in_));
        if (r > tol) {
            throw NotCptpError("KrausChannel: ||sum K^dag K - I||_max = " + std::to_string(r));
        }
    }

    static KrausChannel identity(std::size_t d) {
        return KrausChannel({qvn::identity(d)});
    }
    static KrausChannel unitary(const UnitaryOp &u) {
        return KrausChannel({u.matrix()});
    }

    std::size_t dim_in() const {
        return dim_in_;
    }
    std::size_t dim_out() const {
        return dim_out_;
    }
    const std::vector<CMatrix> &kraus_ops() const {
        return ops_;
    }
    std::size_t size() const {
        return ops_.size();
    }

    /// Action on an arbitrary (not necessarily positive) operator.
    CMatrix apply(const CMatrix &x) const {
        if (x.rows() != static_cast<Eigen::Index>(dim_in_) || x.cols() != x.rows()) {
            throw DimensionError("KrausChannel: input " + shape_str(x) + " does not match dim_in " +
                                 std::to_string(dim_in_));
        }
        CMatrix out = CMatrix::Zero(dim_out_, dim_out_);
        for (const auto &k : ops_) {
            out += k * x * k.adjoint();
        }
        return out;
    }

   private:
    std::vector<CMatrix> ops_;
    std::size_t dim_in_ = 0;
    std::size_t dim_out_ = 0;
};

class Observable {
   public:
    explicit Observable(CMatrix m, double tol = kDefaultTolerance) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) {
            throw DimensionError("Observable: matrix is not square");
        }
        if (hermitian_residual(m_) > tol) {
            throw ValidationError("Observable: not Hermitian");
        }
    }
    std::size_t dim() const {
        return static_cast<std::size_t>(m_.rows());
    }
    const CMatrix &matrix() const {
        return m_;
    }
    double trace() const {
        return m_.trace().real();
    }

   private:
    CMatrix m_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Reduced state on `keep` (in the order listed).
inline DensityOperator partial_trace(const DensityOperator &rho, std::span<const std::size_t> keep) {
    if (keep.empty()) {
        throw ArgumentError("partial_trace: keep set is empty");
    }
    CMatrix red = partial_trace_matrix(rho.matrix(), rho.dims(), keep);
    return DensityOperator(std::move(red), permute_dims(rho.dims(), keep), 1e-9, Check::Structural);
}

inline DensityOperator partial_trace(const DensityOperator &rho, std::initializer_list<std::size_t> keep) {
    return partial_trace(rho, std::span<const std::size_t>(keep.begin(), keep.size()));
}

/// Reduced state of a pure state, computed without forming |psi><psi|.
inline DensityOperator reduced_state(const PureState &psi, std::span<const std::size_t> keep) {
    if (keep.empty()) {
        throw ArgumentError("reduced_state: keep set is empty");
    }
    detail::check_subsystem_list(psi.dims(), keep, "reduced_state");
    const auto split = detail::split_index(psi.dims(), keep);
    CMatrix block(split.sel_dim, split.rest_dim);
    for (std::size_t a = 0; a < split.sel_dim; ++a) {
        for (std::size_t t = 0; t < split.rest_dim; ++t) {
            block(a, t) = psi.amplitude(split.at(a, t));
        }
    }
    return DensityOperator(block * block.adjoint(), permute_dims(psi.dims(), keep), 1e-9, Check::Structural);
}

inline DensityOperator reduced_state(const PureState &psi, std::initializer_list<std::size_t> keep) {
    return reduced_state(psi, std::span<const std::size_t>(keep.begin(), keep.size()));
}

inline DensityOperator apply_channel(const KrausChannel &ch, const DensityOperator &rho) {
    if (ch.dim_in() != rho.dim()) {
        throw DimensionError("apply_channel: channel dim_in " + std::to_string(ch.dim_in()) +
                             " does not match state dim " + std::to_string(rho.dim()));
    }
    Dims dims = ch.dim_out() == rho.dim() ? rho.dims() : Dims{ch.dim_out()};
    return DensityOperator(ch.apply(rho.matrix()), std::move(dims), 1e-9, Check::Structural);
}

/// tr(rho^2).
inline double purity(const DensityOperator &rho) {
    // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho.
    return rho.matrix().squaredNorm();
}

inline double expectation(const Observable &obs, const DensityOperator &rho) {
    if (obs.dim() != rho.dim()) {
        throw DimensionError("expectation: observable and state dimensions differ");
    }
    return (obs.matrix() * rho.matrix()).trace().real();
}

inline double expectation(const Observable &obs, const PureState &psi) {
    if (obs.dim() != psi.dim()) {
        throw DimensionError("expectation: observable and state dimensions differ");
    }
    return psi.amplitudes().dot(obs.matrix() * psi.amplitudes()).real();
}

/// |<a|b>|^2.
inline double fidelity(const PureState &a, const PureState &b) {
    if (a.dim() != b.dim()) {
        throw DimensionError("fidelity: dimension mismatch");
    }
    return std::norm(a.amplitudes().dot(b.amplitudes()));
}

/// <psi|rho|psi>.
inline double fidelity(const PureState &psi, const DensityOperator &rho) {
    if (psi.dim() != rho.dim()) {
        throw DimensionError("fidelity: dimension mismatch");
    }
    return psi.amplitudes().dot(rho.matrix() * psi.amplitudes()).real();
}

/// (1/2) ||a - b||_1 for Hermitian a, b.
inline double trace_distance(const CMatrix &a, const CMatrix &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("trace_distance: dimension mismatch");
    }
    return 0.5 * hermitian_eigen(a - b).values.cwiseAbs().sum();
}

inline double trace_distance(const DensityOperator &a, const DensityOperator &b) {
    return trace_distance(a.matrix(), b.matrix());
}

/// Sum of singular values.
inline double trace_norm(const CMatrix &m) {
    Eigen::JacobiSVD<CMatrix> svd(m);
    return svd.singularValues().sum();
}

// --- projective measurement -------------------------------------------------

template <typename State>
struct MeasureResult {
    std::size_t outcome;
    double probability;
    State post;
};

namespace detail {

inline void check_projector_set(std::span<const CMatrix> projectors, std::size_t dim, double tol) {
    if (projectors.empty()) {
        throw ArgumentError("measure: empty projector set");
    }
    CMatrix sum = CMatrix::Zero(dim, dim);
    for (std::size_t k = 0; k < projectors.size(); ++k) {
        const auto &p = projectors[k];
        if (p.rows() != static_cast<Eigen::Index>(dim) || p.cols() != p.rows()) {
            throw DimensionError("measure: projector " + std::to_string(k) + " has shape " + shape_str(p));
        }
        if (hermitian_residual(p) > tol) {
            throw ArgumentError("measure: projector " + std::to_string(k) + " is not Hermitian");
        }
        if (max_abs(p * p - p) > tol) {
            throw ArgumentError("measure: projector " + std::to_string(k) + " is not idempotent");
        }
        sum += p;
    }
    if (max_abs(sum - identity(dim)) > tol) {
        throw ArgumentError("measure: projectors do not sum to the identity");
    }
}

}  // namespace detail

/// Exact outcome probabilities tr(P_k rho) of a projective measurement.
inline std::vector<double> outcome_probabilities(const PureState &psi, std::span<const CMatrix> projectors,
                                                 double tol = kDefaultTolerance) {
    detail::check_projector_set(projectors, psi.dim(), tol);
    std::vector<double> p;
    for (const auto &proj : projectors) {
        p.push_back(std::max(0.0, psi.amplitudes().dot(proj * psi.amplitudes()).real()));
    }
    return p;
}

inline std::vector<double> outcome_probabilities(const DensityOperator &rho, std::span<const CMatrix> projectors,
                                                 double tol = kDefaultTolerance) {
    detail::check_projector_set(projectors, rho.dim(), tol);
    std::vector<double> p;
    for (const auto &proj : projectors) {
        p.push_back(std::max(0.0, (proj * rho.matrix()).trace().real()));
    }
    return p;
}

inline MeasureResult<PureState> measure(const PureState &psi, std::span<const CMatrix> projectors, RngStream &rng,
                                        double tol = kDefaultTolerance) {
    const auto probs = outcome_probabilities(psi, projectors, tol);
    if (*std::max_element(probs.begin(), probs.end()) < tol) {
        throw NumericalError("measure: every outcome probability is below tolerance");
    }
    const std::size_t k = rng.sample_discrete(probs);
    CVector post = projectors[k] * psi.amplitudes();
    return {k, probs[k], PureState::normalized(post, psi.dims())};
}

inline MeasureResult<DensityOperator> measure(const DensityOperator &rho, std::span<const CMatrix> projectors,
                                              RngStream &rng, double tol = kDefaultTolerance) {
    const auto probs = outcome_probabilities(rho, projectors, tol);
    if (*std::max_element(probs.begin(), probs.end()) < tol) {
        throw NumericalError("measure: every outcome probability is below tolerance");
    }
    const std::size_t k = rng.sample_discrete(probs);
    const CMatrix &p = projectors[k];
    CMatrix post = p * rho.matrix() * p / probs[k];
    return {k, probs[k], DensityOperator(std::move(post), rho.dims(), 1e-9, Check::Structural)};
}

// --- unitary diagonalization ------------------------------------------------

struct UnitaryEigen {
    CVector eigenvalues;
    UnitaryOp vectors;  // U = V diag(eigenvalues) V^dag
};

/// Diagonalizes a unitary. The complex Schur form of a normal matrix is
/// diagonal, and its Schur basis is unitary even inside degenerate
/// eigenspaces; each cluster of (numerically) equal eigenvalues is then
/// re-orthonormalized so that V stays unitary to working precision.
inline UnitaryEigen eig_unitary(const UnitaryOp &u, double tol = kDefaultTolerance) {
    const CMatrix &m = u.matrix();
    const Eigen::Index n = m.rows();
    Eigen::ComplexSchur<CMatrix> schur(m);
    if (schur.info() != Eigen::Success) {
        throw NumericalError("eig_unitary: Schur iteration did not converge");
    }
    const CMatrix &t = schur.matrixT();
    CMatrix v = schur.matrixU();
    CVector lambda = t.diagonal();
    const double off = max_abs(CMatrix(t.triangularView<Eigen::StrictlyUpper>()));
    if (off > std::max(tol, 1e-9)) {
        throw NumericalError("eig_unitary: Schur form is not diagonal (off-diagonal " + std::to_string(off) + ")");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        lambda(i) /= std::abs(lambda(i));
    }
    // Cluster eigenvalues and re-orthonormalize the columns of each cluster.
    std::vector<bool> done(n, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (done[i]) {
            continue;
        }
        std::vector<Eigen::Index> cluster{i};
        done[i] = true;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (!done[j] && std::abs(lambda(j) - lambda(i)) < 1e-8) {
                cluster.push_back(j);
                done[j] = true;
            }
        }
        if (cluster.size() < 2) {
            continue;
        }
        CMatrix block(n, static_cast<Eigen::Index>(cluster.size()));
        for (std::size_t c = 0; c < cluster.size(); ++c) {
            block.col(c) = v.col(cluster[c]);
        }
        Eigen::HouseholderQR<CMatrix> qr(block);
        CMatrix q = qr.householderQ() * CMatrix::Identity(n, block.cols());
        // Keep the original orientation of each column.
        const CMatrix r = qr.matrixQR().topRows(block.cols()).triangularView<Eigen::Upper>();
        for (Eigen::Index c = 0; c < block.cols(); ++c) {
            const cplx diag = r(c, c);
            const cplx phase = std::abs(diag) > 0 ? diag / std::abs(diag) : cplx(1.0);
            v.col(cluster[c]) = q.col(c) * phase;
        }
    }
    return {lambda, UnitaryOp(v, 1e-9)};
}

// --- random objects for tests and demos -------------------------------------

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of R's diagonal absorbed into Q.
inline UnitaryOp haar_unitary(std::size_t d, RngStream &rng) {
    CMatrix g(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            g(i, j) = cplx(rng.normal(), rng.normal()) / std::sqrt(2.0);
        }
    }
    Eigen::HouseholderQR<CMatrix> qr(g);
    CMatrix q = qr.householderQ();
    const CMatrix &r = qr.matrixQR();
    for (std::size_t j = 0; j < d; ++j) {
        const cplx diag = r(j, j);
        q.col(j) *= diag / std::abs(diag);
    }
    return UnitaryOp(q, 1e-9);
}

/// Haar unitary rescaled into SU(d).
inline UnitaryOp haar_special_unitary(std::size_t d, RngStream &rng) {
    UnitaryOp u = haar_unitary(d, rng);
    const cplx det = u.matrix().determinant();
    const cplx fix = std::pow(det, -1.0 / static_cast<double>(d));
    return UnitaryOp(u.matrix() * fix, 1e-9);
}

inline PureState random_pure_state(const Dims &dims, RngStream &rng) {
    const std::size_t d = dim_product(dims);
    CVector v(d);
    for (std::size_t i = 0; i < d; ++i) {
        v(i) = cplx(rng.normal(), rng.normal());
    }
    return PureState::normalized(v, dims);
}

/// Random full-rank mixed state (normalized Wishart).
inline DensityOperator random_density(const Dims &dims, RngStream &rng) {
    const std::size_t d = dim_product(dims);
    CMatrix g(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            g(i, j) = cplx(rng.normal(), rng.normal());
        }
    }
    CMatrix w = g * g.adjoint();
    w /= w.trace().real();
    return DensityOperator(0.5 * (w + w.adjoint()), dims, 1e-9, Check::Structural);
}

/// Random CPTP map with `rank` Kraus operators, cut from a Haar isometry.
inline KrausChannel random_channel(std::size_t d, std::size_t rank, RngStream &rng) {
    const UnitaryOp w = haar_unitary(d * rank, rng);
    std::vector<CMatrix> ops;
    for (std::size_t i = 0; i < rank; ++i) {
        ops.push_back(w.matrix().block(i * d, 0, d, d));
    }
    return KrausChannel(std::move(ops), 1e-9);
}

}  // namespace qvn
