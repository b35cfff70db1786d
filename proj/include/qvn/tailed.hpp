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

// Tailed circuits: gates act on ebit heads and plain qubit wires, tails are
// never touched by gates and only carry input (by measurement) or get fused
// to other endpoints by Bell measurements.
//
// Wire layout of a simulated circuit with E ebits and Q qubit wires:
// heads 0..E-1, tails E..2E-1, qubits 2E..2E+Q-1. A stored program on n
// qubits, split per qubit, has the same layout with E = n.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qvn/duality.hpp"
#include "qvn/gates.hpp"
#include "qvn/pauli.hpp"
#include "qvn/rng.hpp"
#include "qvn/uqt.hpp"

namespace qvn {

enum class WireKind { Head, Tail, Qubit };

struct Endpoint {
    WireKind kind = WireKind::Head;
    std::size_t index = 0;

    bool operator==(const Endpoint &) const = default;

    static Endpoint head(std::size_t i) {
        return {WireKind::Head, i};
    }
    static Endpoint tail(std::size_t i) {
        return {WireKind::Tail, i};
    }
    static Endpoint qubit(std::size_t i) {
        return {WireKind::Qubit, i};
    }
    std::string str() const {
        const char c = kind == WireKind::Head ? 'h' : kind == WireKind::Tail ? 't' : 'q';
        return c + std::to_string(index);
    }
};

// ---------------------------------------------------------------------------
// Injection and readout specs
// ---------------------------------------------------------------------------

enum class AncillaMode {
    Monolithic,  // one n-fold Toffoli onto the readout ancilla
    Cascade,     // n-1 Toffolis into n-1 work ancillas, copy, uncompute
};

enum class InjectionBranch { P0 = 0, P1 = 1 };

inline const char *branch_name(InjectionBranch b) {
    return b == InjectionBranch::P1 ? "P1" : "P0";
}

/// Binary measurement {P0, P1}, P1 = |b><b| on the target tails. The
/// targets are wire positions of the state being measured.
struct InjectionSpec {
    std::vector<std::size_t> target_tails;
    std::vector<std::uint8_t> bitstring;  // empty means all ones
    AncillaMode ancilla_mode = AncillaMode::Monolithic;

    InjectionSpec() = default;
    InjectionSpec(std::vector<std::size_t> tails, std::vector<std::uint8_t> bits = {},
                  AncillaMode mode = AncillaMode::Monolithic)
        : target_tails(std::move(tails)), bitstring(std::move(bits)), ancilla_mode(mode) {
        if (bitstring.empty()) {
            bitstring.assign(target_tails.size(), 1);
        }
        check();
    }

    /// Every tail of an n-ebit layout (wires n..2n-1).
    static InjectionSpec all_tails(std::size_t ebits, std::vector<std::uint8_t> bits = {},
                                   AncillaMode mode = AncillaMode::Monolithic) {
        std::vector<std::size_t> t(ebits);
        std::iota(t.begin(), t.end(), ebits);
        return InjectionSpec(std::move(t), std::move(bits), mode);
    }

    std::size_t n() const {
        return target_tails.size();
    }

    void check() const {
        if (target_tails.empty()) {
            throw ArgumentError("InjectionSpec: no target tails");
        }
        if (bitstring.size() != target_tails.size()) {
            throw ArgumentError("InjectionSpec: " + std::to_string(bitstring.size()) + " bits for " +
                                std::to_string(target_tails.size()) + " tails");
        }
        for (auto b : bitstring) {
            if (b > 1) {
                throw ArgumentError("InjectionSpec: bits must be 0 or 1");
            }
        }
    }
};

struct ReadoutSpec {
    Observable observable;
    std::vector<std::size_t> target_heads;  // wire positions
    double trace_of_O = 0.0;

    ReadoutSpec(Observable o, std::vector<std::size_t> heads)
        : observable(std::move(o)), target_heads(std::move(heads)), trace_of_O(observable.trace()) {
    }
    ReadoutSpec(Observable o, std::vector<std::size_t> heads, double trace)
        : observable(std::move(o)), target_heads(std::move(heads)), trace_of_O(trace) {
    }
};

// ---------------------------------------------------------------------------
// Toffoli cascade
// ---------------------------------------------------------------------------

struct WireGate {
    CMatrix matrix;
    std::vector<std::size_t> wires;
};

/// n-fold Toffoli from n-1 ordinary Toffolis. Wires: controls 0..n-1, work
/// ancillas n..2n-2, target 2n-1. The work ancillas collect the running AND,
/// the last one is copied to the target and the chain is undone.
class ToffoliCascade {
   public:
    explicit ToffoliCascade(std::size_t n) : n_(n) {
        if (n < 2) {
            throw ArgumentError("toffoli_cascade: needs at least two controls");
        }
        const CMatrix ccx = gates::CCX();
        std::vector<WireGate> chain;
        chain.push_back({ccx, {0, 1, n}});
        for (std::size_t i = 1; i + 1 < n; ++i) {
            chain.push_back({ccx, {n + i - 1, i + 1, n + i}});
        }
        gates_ = chain;
        gates_.push_back({gates::CX(), {2 * n - 2, 2 * n - 1}});
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            gates_.push_back(*it);
        }
    }

    std::size_t controls() const {
        return n_;
    }
    std::size_t qubits() const {
        return 2 * n_;
    }
    std::size_t target() const {
        return 2 * n_ - 1;
    }
    const std::vector<WireGate> &gates() const {
        return gates_;
    }
    std::size_t toffoli_count() const {
        return gates_.size() - 1;
    }

    CVector apply(const CVector &v) const {
        const Dims dims(qubits(), 2);
        CVector out = v;
        for (const auto &g : gates_) {
            out = apply_on(out, dims, g.matrix, g.wires);
        }
        return out;
    }

    /// Restriction to controls + target with the work ancillas entering in
    /// |0...0> and projected onto |0...0> at the end.
    CMatrix sector() const {
        const std::size_t dim = std::size_t{1} << (n_ + 1);
        const std::size_t full = std::size_t{1} << qubits();
        auto embed_index = [&](std::size_t s) {
            const std::size_t ctrl = s >> 1;
            const std::size_t tgt = s & 1u;
            return (ctrl << n_) | tgt;
        };
        CMatrix m(dim, dim);
        for (std::size_t c = 0; c < dim; ++c) {
            CVector in = CVector::Zero(full);
            in(embed_index(c)) = 1.0;
            const CVector out = apply(in);
            for (std::size_t r = 0; r < dim; ++r) {
                m(r, c) = out(embed_index(r));
            }
        }
        return m;
    }

   private:
    std::size_t n_;
    std::vector<WireGate> gates_;
};

inline constexpr std::size_t kMaxDenseCascadeControls = 5;

/// Dense unitary of the cascade on 2n qubits (n <= 5; use ToffoliCascade
/// directly above that).
inline UnitaryOp toffoli_cascade(std::size_t n) {
    const ToffoliCascade c(n);
    if (n > kMaxDenseCascadeControls) {
        throw ArgumentError("toffoli_cascade: dense form limited to " + std::to_string(kMaxDenseCascadeControls) +
                            " controls");
    }
    const std::size_t full = std::size_t{1} << c.qubits();
    CMatrix m(full, full);
    for (std::size_t col = 0; col < full; ++col) {
        CVector e = CVector::Zero(full);
        e(col) = 1.0;
        m.col(col) = c.apply(e);
    }
    return UnitaryOp(std::move(m));
}

// ---------------------------------------------------------------------------
// State-level primitives
// ---------------------------------------------------------------------------

namespace detail {

inline void check_qubit_wires(const Dims &dims, std::span<const std::size_t> wires, const char *what) {
    detail::check_subsystem_list(dims, wires, what);
    for (auto w : wires) {
        if (dims[w] != 2) {
            throw ArgumentError(std::string(what) + ": wire " + std::to_string(w) + " is not a qubit");
        }
    }
}

inline CVector basis_vector(std::size_t dim, std::size_t index) {
    CVector e = CVector::Zero(dim);
    e(index) = 1.0;
    return e;
}

inline CVector bit_vector(std::span<const std::uint8_t> bits) {
    std::size_t idx = 0;
    for (auto b : bits) {
        idx = (idx << 1) | b;
    }
    return basis_vector(std::size_t{1} << bits.size(), idx);
}

/// Runs the AND circuit of `spec` on `state` with fresh ancillas. Returns
/// the enlarged vector; the readout ancilla is the last wire.
struct AndCircuitState {
    CVector amps;
    Dims dims;
    std::size_t readout;
    std::vector<std::size_t> work;
};

inline AndCircuitState run_and_circuit(const PureState &state, const InjectionSpec &spec) {
    spec.check();
    check_qubit_wires(state.dims(), spec.target_tails, "inject");
    CVector v = state.amplitudes();
    Dims dims = state.dims();
    for (std::size_t i = 0; i < spec.n(); ++i) {
        if (spec.bitstring[i] == 0) {
            v = apply_on(v, dims, gates::X(), std::vector<std::size_t>{spec.target_tails[i]});
        }
    }
    const std::size_t n = spec.n();
    const std::size_t base = dims.size();
    AndCircuitState out;
    if (spec.ancilla_mode == AncillaMode::Monolithic || n == 1) {
        v = kron(v, basis_vector(2, 0));
        dims.push_back(2);
        out.readout = base;
        std::vector<std::size_t> t = spec.target_tails;
        t.push_back(base);
        v = apply_on(v, dims, gates::multi_controlled_x(n), t);
    } else {
        const ToffoliCascade cascade(n);
        v = kron(v, basis_vector(std::size_t{1} << n, 0));  // n-1 work + readout
        dims.insert(dims.end(), n, 2);
        std::vector<std::size_t> map = spec.target_tails;
        for (std::size_t i = 0; i < n; ++i) {
            map.push_back(base + i);
        }
        for (const auto &g : cascade.gates()) {
            std::vector<std::size_t> w;
            for (auto x : g.wires) {
                w.push_back(map[x]);
            }
            v = apply_on(v, dims, g.matrix, w);
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            out.work.push_back(base + i);
        }
        out.readout = base + n - 1;
    }
    out.amps = std::move(v);
    out.dims = std::move(dims);
    return out;
}

}  // namespace detail

struct InjectionResult {
    InjectionBranch branch = InjectionBranch::P0;
    double probability = 0.0;  // of the realized branch
    double p1 = 0.0;           // exact probability of P1
    PureState post;            // same wires as the input state
};

/// Exact <psi| (|b><b| on wires) |psi>, without any ancilla.
inline double injection_probability(const PureState &state, std::span<const std::size_t> wires,
                                    std::span<const std::uint8_t> bits) {
    detail::check_qubit_wires(state.dims(), wires, "injection_probability");
    if (bits.size() != wires.size()) {
        throw ArgumentError("injection_probability: bit count does not match wire count");
    }
    return project_out(state.amplitudes(), state.dims(), wires, detail::bit_vector(bits)).squaredNorm();
}

/// Probability of P1 as realized by the ancilla circuit.
inline double injection_p1(const PureState &state, const InjectionSpec &spec) {
    const auto c = detail::run_and_circuit(state, spec);
    const std::vector<std::size_t> r = {c.readout};
    return project_out(c.amps, c.dims, r, detail::basis_vector(2, 1)).squaredNorm();
}

/// Post-measurement state for a given branch. Throws NumericalError when the
/// branch has zero probability, or if the work ancillas fail to return to |0>.
inline InjectionResult inject_branch(const PureState &state, const InjectionSpec &spec, InjectionBranch branch) {
    const auto c = detail::run_and_circuit(state, spec);
    const std::vector<std::size_t> r = {c.readout};
    const double p1 = project_out(c.amps, c.dims, r, detail::basis_vector(2, 1)).squaredNorm();
    const std::size_t bit = branch == InjectionBranch::P1 ? 1 : 0;
    CVector rest = project_out(c.amps, c.dims, r, detail::basis_vector(2, bit));
    Dims dims = remove_subsystems(c.dims, r);
    const double p = rest.squaredNorm();
    if (!(p > 1e-300)) {
        throw NumericalError(std::string("inject: branch ") + branch_name(branch) + " has zero probability");
    }
    if (!c.work.empty()) {
        // The work ancillas sit just before the readout ancilla, which was the last wire.
        const CVector zeros = detail::basis_vector(std::size_t{1} << c.work.size(), 0);
        CVector clean = project_out(rest, dims, c.work, zeros);
        if (std::abs(clean.squaredNorm() - p) > 1e-9) {
            throw NumericalError("inject: work ancillas did not return to |0>");
        }
        dims = remove_subsystems(dims, c.work);
        rest = std::move(clean);
    }
    for (std::size_t i = 0; i < spec.n(); ++i) {
        if (spec.bitstring[i] == 0) {
            rest = apply_on(rest, dims, gates::X(), std::vector<std::size_t>{spec.target_tails[i]});
        }
    }
    return {branch, p, p1, PureState::normalized(rest, dims)};
}

/// Measures {P0, P1} through the ancilla circuit and a Z readout of the
/// ancilla (1 means P1).
inline InjectionResult inject(const PureState &state, const InjectionSpec &spec, RngStream &rng) {
    const double p1 = injection_p1(state, spec);
    const double w[2] = {std::max(0.0, 1.0 - p1), p1};
    const auto branch = static_cast<InjectionBranch>(rng.sample_discrete(w));
    return inject_branch(state, spec, branch);
}

/// Exact-projector injection of an arbitrary input |psi> on the tails:
/// outcome 0 is the projector |conj psi><conj psi|, after which the heads of
/// a program state hold U|psi>. Outcome 1 is the complement.
inline InjectionResult inject_state(const PureState &state, std::span<const std::size_t> wires, const CVector &psi,
                                    RngStream &rng) {
    detail::check_subsystem_list(state.dims(), wires, "inject_state");
    std::size_t dim = 1;
    for (auto w : wires) {
        dim *= state.dims()[w];
    }
    if (static_cast<std::size_t>(psi.size()) != dim || std::abs(psi.norm() - 1.0) > 1e-9) {
        throw ArgumentError("inject_state: input must be a unit vector of dimension " + std::to_string(dim));
    }
    const CVector bra = psi.conjugate();
    const CMatrix p0 = bra * bra.adjoint();
    const CVector a0 = apply_on(state.amplitudes(), state.dims(), p0, wires);
    const double prob0 = a0.squaredNorm();
    const double w[2] = {prob0, std::max(0.0, 1.0 - prob0)};
    const std::size_t k = rng.sample_discrete(w);
    const CVector post = k == 0 ? a0 : CVector(state.amplitudes() - a0);
    return {k == 0 ? InjectionBranch::P0 : InjectionBranch::P1, w[k], w[1],
            PureState::normalized(post, state.dims())};
}

struct TailSample {
    std::size_t bit = 0;
    double probability = 0.0;
    PureState post;  // the tail stays, collapsed to |bit>
};

/// Z measurement of one qubit tail.
inline TailSample sample_tail_Z(const PureState &state, std::size_t tail, RngStream &rng) {
    const std::vector<std::size_t> w = {tail};
    detail::check_qubit_wires(state.dims(), w, "sample_tail_Z");
    CVector branches[2];
    double probs[2];
    for (std::size_t b = 0; b < 2; ++b) {
        branches[b] = apply_on(state.amplitudes(), state.dims(), b == 0 ? gates::P0() : gates::P1(), w);
        probs[b] = branches[b].squaredNorm();
    }
    const std::size_t bit = rng.sample_discrete(probs);
    return {bit, probs[bit], PureState::normalized(branches[bit], state.dims())};
}

struct ContractResult {
    std::size_t outcome = 0;
    double probability = 0.0;
    std::optional<PureState> post;  // remaining wires; empty when postselection vanished
    bool vanished = false;          // postselected outcome had zero amplitude
};

/// Bell measurement of wires a and b in the standard basis for their
/// dimension. With postselect_trivial the outcome is forced to k = 0.
inline ContractResult contract(const PureState &state, std::size_t a, std::size_t b, RngStream &rng,
                               bool postselect_trivial = false) {
    if (a >= state.dims().size() || b >= state.dims().size() || a == b) {
        throw ArgumentError("contract: invalid wire pair");
    }
    if (state.dims()[a] != state.dims()[b]) {
        throw DimensionError("contract: endpoints have different dimensions");
    }
    const BellBasis basis = BellBasis::standard(state.dims()[a]);
    if (postselect_trivial) {
        const std::vector<std::size_t> sel = {a, b};
        const double p = project_out(state.amplitudes(), state.dims(), sel, basis.vector(0)).squaredNorm();
        if (p < 1e-24) {
            return {0, p, std::nullopt, true};
        }
        auto r = bell_project(state, a, b, basis, 0);
        return {0, r.probability, std::move(r.post), false};
    }
    auto r = bell_measure_pair(state, a, b, basis, rng);
    return {r.outcome, r.probability, std::move(r.post), false};
}

/// |omega_U> split into per-qubit heads and tails when d = 2^n (heads
/// 0..n-1, tails n..2n-1); a single (head, tail) pair otherwise.
inline PureState program_state(const StoredProgram &p) {
    const std::size_t d = p.d();
    if (!is_power_of_two(d)) {
        return PureState(p.vector(), {d, d}, 1e-9);
    }
    std::size_t n = 0;
    while ((std::size_t{1} << n) < d) {
        ++n;
    }
    return PureState(p.vector(), Dims(2 * n, 2), 1e-9);
}

// ---------------------------------------------------------------------------
// Circuit IR
// ---------------------------------------------------------------------------

struct TailedGate {
    CMatrix matrix;
    std::vector<Endpoint> targets;
};

struct Contraction {
    Endpoint a;
    Endpoint b;
};

class TailedCircuit {
   public:
    TailedCircuit(std::size_t qubit_wires, std::size_t ebit_wires, std::size_t ebit_dim = 2)
        : TailedCircuit(qubit_wires, Dims(ebit_wires, ebit_dim)) {
    }
    TailedCircuit(std::size_t qubit_wires, Dims ebit_dims) : qubits_(qubit_wires), ebit_dims_(std::move(ebit_dims)) {
        for (auto d : ebit_dims_) {
            if (d < 2) {
                throw ValidationError("TailedCircuit: ebit dimension must be at least 2");
            }
        }
        if (qubits_ + ebit_dims_.size() == 0) {
            throw ValidationError("TailedCircuit: no wires");
        }
    }

    std::size_t qubit_wires() const {
        return qubits_;
    }
    std::size_t ebit_wires() const {
        return ebit_dims_.size();
    }
    const Dims &ebit_dims() const {
        return ebit_dims_;
    }
    const std::vector<TailedGate> &gates() const {
        return gates_;
    }
    const std::vector<Contraction> &contractions() const {
        return contractions_;
    }
    const std::optional<InjectionSpec> &injection() const {
        return injection_;
    }
    const std::optional<ReadoutSpec> &readout() const {
        return readout_;
    }
    bool postselected_topological() const {
        return postselected_;
    }

    std::size_t wire_count() const {
        return 2 * ebit_dims_.size() + qubits_;
    }
    Dims wire_dims() const {
        Dims d = ebit_dims_;
        d.insert(d.end(), ebit_dims_.begin(), ebit_dims_.end());
        d.insert(d.end(), qubits_, 2);
        return d;
    }
    /// Position of an endpoint in the simulated layout.
    std::size_t wire(const Endpoint &e) const {
        check_endpoint(e);
        switch (e.kind) {
            case WireKind::Head:
                return e.index;
            case WireKind::Tail:
                return ebit_dims_.size() + e.index;
            default:
                return 2 * ebit_dims_.size() + e.index;
        }
    }
    Endpoint endpoint_at(std::size_t w) const {
        const std::size_t e = ebit_dims_.size();
        if (w < e) {
            return Endpoint::head(w);
        }
        if (w < 2 * e) {
            return Endpoint::tail(w - e);
        }
        if (w < wire_count()) {
            return Endpoint::qubit(w - 2 * e);
        }
        throw ValidationError("TailedCircuit: wire " + std::to_string(w) + " out of range");
    }
    std::size_t dim_of(const Endpoint &e) const {
        check_endpoint(e);
        return e.kind == WireKind::Qubit ? 2 : ebit_dims_[e.index];
    }

    TailedCircuit &gate(const CMatrix &m, std::vector<Endpoint> targets) {
        if (targets.empty()) {
            throw ValidationError("TailedCircuit: gate without targets");
        }
        std::size_t dim = 1;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            check_endpoint(targets[i]);
            if (targets[i].kind == WireKind::Tail) {
                throw ValidationError("TailedCircuit: gate targets tail " + targets[i].str());
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (targets[j] == targets[i]) {
                    throw ValidationError("TailedCircuit: repeated gate target " + targets[i].str());
                }
            }
            dim *= dim_of(targets[i]);
        }
        if (m.rows() != static_cast<Eigen::Index>(dim) || m.cols() != m.rows()) {
            throw ValidationError("TailedCircuit: gate of shape " + shape_str(m) + " on targets of dimension " +
                                  std::to_string(dim));
        }
        if (unitary_residual(m) > 1e-9) {
            throw ValidationError("TailedCircuit: gate is not unitary");
        }
        gates_.push_back({m, std::move(targets)});
        return *this;
    }

    TailedCircuit &contract(Endpoint a, Endpoint b) {
        check_endpoint(a);
        check_endpoint(b);
        if (a == b) {
            throw ValidationError("TailedCircuit: contraction of " + a.str() + " with itself");
        }
        if (dim_of(a) != dim_of(b)) {
            throw ValidationError("TailedCircuit: contraction " + a.str() + "-" + b.str() +
                                  " joins different dimensions");
        }
        for (const auto &c : contractions_) {
            for (const auto &e : {a, b}) {
                if (c.a == e || c.b == e) {
                    throw ValidationError("TailedCircuit: endpoint " + e.str() + " already contracted");
                }
            }
        }
        contractions_.push_back({a, b});
        return *this;
    }

    TailedCircuit &set_injection(InjectionSpec spec) {
        spec.check();
        for (auto w : spec.target_tails) {
            if (w >= wire_count() || endpoint_at(w).kind != WireKind::Tail || wire_dims()[w] != 2) {
                throw ValidationError("TailedCircuit: injection target " + std::to_string(w) + " is not a qubit tail");
            }
        }
        injection_ = std::move(spec);
        return *this;
    }

    TailedCircuit &set_readout(ReadoutSpec spec) {
        std::size_t dim = 1;
        for (auto w : spec.target_heads) {
            if (w >= wire_count() || endpoint_at(w).kind == WireKind::Tail) {
                throw ValidationError("TailedCircuit: readout target " + std::to_string(w) + " is not a head");
            }
            dim *= wire_dims()[w];
        }
        if (spec.observable.dim() != dim) {
            throw ValidationError("TailedCircuit: observable dimension does not match readout targets");
        }
        readout_ = std::move(spec);
        return *this;
    }

    TailedCircuit &set_postselected_topological(bool on) {
        postselected_ = on;
        return *this;
    }

    /// Time-flow check. Ebits and qubits sharing a gate form one block; a
    /// head-tail contraction sends the output of the head's block into the
    /// input of the tail's block. A directed cycle is a closed time loop.
    void validate() const {
        if (postselected_) {
            return;
        }
        const std::size_t e = ebit_dims_.size();
        std::vector<std::size_t> parent(e + qubits_);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](std::size_t x) {
            while (parent[x] != x) {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            return x;
        };
        auto node = [&](const Endpoint &p) { return p.kind == WireKind::Qubit ? e + p.index : p.index; };
        for (const auto &g : gates_) {
            for (std::size_t i = 1; i < g.targets.size(); ++i) {
                parent[find(node(g.targets[i]))] = find(node(g.targets[0]));
            }
        }
        const std::size_t nodes = parent.size();
        std::vector<std::vector<std::size_t>> adj(nodes);
        for (const auto &c : contractions_) {
            const Endpoint *h = nullptr;
            const Endpoint *t = nullptr;
            for (const auto *p : {&c.a, &c.b}) {
                if (p->kind == WireKind::Head) {
                    h = p;
                } else if (p->kind == WireKind::Tail) {
                    t = p;
                }
            }
            if (h == nullptr || t == nullptr) {
                continue;
            }
            const std::size_t from = find(node(*h));
            const std::size_t to = find(node(*t));
            if (from == to) {
                throw ValidationError("TailedCircuit: contraction " + c.a.str() + "-" + c.b.str() +
                                      " closes a time loop");
            }
            adj[from].push_back(to);
        }
        std::vector<int> color(nodes, 0);
        auto dfs = [&](auto &&self, std::size_t v) -> bool {
            color[v] = 1;
            for (auto w : adj[v]) {
                if (color[w] == 1 || (color[w] == 0 && self(self, w))) {
                    return true;
                }
            }
            color[v] = 2;
            return false;
        };
        for (std::size_t v = 0; v < nodes; ++v) {
            if (color[v] == 0 && dfs(dfs, v)) {
                throw ValidationError("TailedCircuit: contractions create a closed time loop");
            }
        }
    }

   private:
    void check_endpoint(const Endpoint &e) const {
        const std::size_t limit = e.kind == WireKind::Qubit ? qubits_ : ebit_dims_.size();
        if (e.index >= limit) {
            throw ValidationError("TailedCircuit: endpoint " + e.str() + " does not exist");
        }
    }

    std::size_t qubits_;
    Dims ebit_dims_;
    std::vector<TailedGate> gates_;
    std::vector<Contraction> contractions_;
    std::optional<InjectionSpec> injection_;
    std::optional<ReadoutSpec> readout_;
    bool postselected_ = false;
};

/// Gates applied in order to |omega>^{(x)E} (x) |0>^{(x)Q}; contractions,
/// injection and readout are not performed.
inline PureState simulate(const TailedCircuit &c) {
    c.validate();
    const std::size_t e = c.ebit_wires();
    const Dims dims = c.wire_dims();
    // Build in (h0, t0, h1, t1, ..., qubits) order, then move heads first.
    CVector v = CVector::Ones(1);
    Dims paired;
    for (auto d : c.ebit_dims()) {
        v = kron(v, ebit(d).amplitudes());
        paired.push_back(d);
        paired.push_back(d);
    }
    for (std::size_t q = 0; q < c.qubit_wires(); ++q) {
        v = kron(v, detail::basis_vector(2, 0));
        paired.push_back(2);
    }
    std::vector<std::size_t> perm(paired.size());
    for (std::size_t i = 0; i < e; ++i) {
        perm[i] = 2 * i;
        perm[e + i] = 2 * i + 1;
    }
    for (std::size_t q = 0; q < c.qubit_wires(); ++q) {
        perm[2 * e + q] = 2 * e + q;
    }
    v = permute_subsystems(v, paired, perm);
    for (const auto &g : c.gates()) {
        std::vector<std::size_t> w;
        for (const auto &t : g.targets) {
            w.push_back(c.wire(t));
        }
        v = apply_on(v, dims, g.matrix, w);
    }
    return PureState::normalized(v, dims);
}

// ---------------------------------------------------------------------------
// Sampling a circuit shot by shot
// ---------------------------------------------------------------------------

/// Uncorrected byproduct left by a contraction. It is recorded, never
/// commuted through later gates.
struct PauliFrame {
    Endpoint a;
    Endpoint b;
    std::size_t outcome = 0;
    std::string label;
};

struct RunRecord {
    std::uint64_t shot = 0;
    std::optional<InjectionBranch> injection_branch;
    std::vector<std::size_t> bell_outcomes;
    std::vector<PauliFrame> frames;
    std::vector<std::size_t> tail_bits;  // Z outcomes of sampled tails
    std::optional<double> sampled_observable_value;
    std::optional<PureState> post_state;
};

namespace detail {

inline std::size_t live_position(const std::vector<Endpoint> &live, const Endpoint &e) {
    const auto it = std::find(live.begin(), live.end(), e);
    if (it == live.end()) {
        throw ValidationError("endpoint " + e.str() + " is no longer present");
    }
    return static_cast<std::size_t>(it - live.begin());
}

/// Eigenvalue index drawn from the Born distribution of `obs` on `wires`.
inline double sample_observable(const PureState &state, std::span<const std::size_t> wires, const HermitianEigen &eig,
                                RngStream &rng) {
    const DensityOperator rho = reduced_state(state, wires);
    std::vector<double> p(static_cast<std::size_t>(eig.values.size()));
    for (std::size_t j = 0; j < p.size(); ++j) {
        const auto v = eig.vectors.col(static_cast<Eigen::Index>(j));
        p[j] = std::max(0.0, v.dot(rho.matrix() * v).real());
    }
    return eig.values(static_cast<Eigen::Index>(rng.sample_discrete(p)));
}

}  // namespace detail

/// One literal execution: simulate, contract in order, inject, read out.
inline RunRecord execute_shot(const TailedCircuit &c, RngStream &rng, bool keep_state = false) {
    PureState state = simulate(c);
    std::vector<Endpoint> live;
    for (std::size_t w = 0; w < c.wire_count(); ++w) {
        live.push_back(c.endpoint_at(w));
    }
    RunRecord rec;
    for (const auto &k : c.contractions()) {
        const std::size_t pa = detail::live_position(live, k.a);
        const std::size_t pb = detail::live_position(live, k.b);
        const std::size_t d = state.dims()[pa];
        auto r = contract(state, pa, pb, rng, c.postselected_topological());
        if (r.vanished) {
            throw NumericalError("execute_shot: postselected contraction " + k.a.str() + "-" + k.b.str() +
                                 " has zero amplitude");
        }
        rec.bell_outcomes.push_back(r.outcome);
        rec.frames.push_back({k.a, k.b, r.outcome, PauliBasis::standard(d).label(r.outcome)});
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::max(pa, pb)));
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::min(pa, pb)));
        if (live.empty()) {
            state = PureState(CVector::Ones(1), {1});
        } else {
            state = std::move(*r.post);
        }
    }
    if (c.injection()) {
        InjectionSpec spec = *c.injection();
        for (auto &w : spec.target_tails) {
            w = detail::live_position(live, c.endpoint_at(w));
        }
        auto r = inject(state, spec, rng);
        rec.injection_branch = r.branch;
        state = std::move(r.post);
    }
    if (c.readout()) {
        std::vector<std::size_t> wires;
        for (auto w : c.readout()->target_heads) {
            wires.push_back(detail::live_position(live, c.endpoint_at(w)));
        }
        const auto eig = hermitian_eigen(c.readout()->observable.matrix());
        rec.sampled_observable_value = detail::sample_observable(state, wires, eig, rng);
    }
    if (keep_state) {
        rec.post_state = std::move(state);
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Algorithm readout
// ---------------------------------------------------------------------------

struct BranchStats {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;  // sample variance of the eigenvalue draws
};

struct AlgorithmEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t shots = 0;
    double p1_exact = 0.0;
    BranchStats p1;
    BranchStats p0;
    double trace_of_O = 0.0;  // of O extended by identity over unread heads
};

struct AlgorithmOptions {
    unsigned threads = 1;
};

namespace detail {

inline BranchStats branch_stats(const std::vector<double> &values, const std::vector<std::uint8_t> &branch,
                                std::uint8_t which) {
    BranchStats s;
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (branch[i] == which) {
            ++s.count;
            sum += values[i];
        }
    }
    if (s.count == 0) {
        return s;
    }
    s.mean = sum / static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (branch[i] == which) {
                ss += (values[i] - s.mean) * (values[i] - s.mean);
            }
        }
        s.variance = ss / static_cast<double>(s.count - 1);
    }
    return s;
}

}  // namespace detail

/// Combines per-shot eigenvalue draws tagged with their injection branch
/// (1 = P1). `trace_of_O` is tr(O) over the full head space of dimension
/// `head_dim` = 2^n.
inline AlgorithmEstimate estimate_from_branches(const std::vector<double> &values,
                                                const std::vector<std::uint8_t> &branch, double trace_of_O,
                                                std::size_t head_dim) {
    if (values.size() != branch.size()) {
        throw ArgumentError("estimate_from_branches: values and branches differ in length");
    }
    const double scale = static_cast<double>(head_dim - 1);
    AlgorithmEstimate out;
    out.shots = values.size();
    out.trace_of_O = trace_of_O;
    out.p1 = detail::branch_stats(values, branch, 1);
    out.p0 = detail::branch_stats(values, branch, 0);

    struct Est {
        double value;
        double se;
        std::size_t count;
    };
    std::vector<Est> usable;
    if (out.p1.count >= 2) {
        usable.push_back({out.p1.mean, std::sqrt(out.p1.variance / static_cast<double>(out.p1.count)), out.p1.count});
    }
    if (out.p0.count >= 2) {
        usable.push_back({trace_of_O - scale * out.p0.mean,
                          scale * std::sqrt(out.p0.variance / static_cast<double>(out.p0.count)), out.p0.count});
    }
    if (usable.empty()) {
        throw EstimationError("run_algorithm: no branch collected two or more samples");
    }
    std::vector<Est> exact;
    for (const auto &u : usable) {
        if (u.se == 0.0) {
            exact.push_back(u);
        }
    }
    if (!exact.empty()) {
        // Zero spread: the branch determines the value outright.
        double num = 0.0;
        std::size_t cnt = 0;
        for (const auto &u : exact) {
            num += u.value * static_cast<double>(u.count);
            cnt += u.count;
        }
        out.value = num / static_cast<double>(cnt);
        out.standard_error = 0.0;
        return out;
    }
    double wsum = 0.0;
    double vsum = 0.0;
    for (const auto &u : usable) {
        const double w = 1.0 / (u.se * u.se);
        wsum += w;
        vsum += w * u.value;
    }
    out.value = vsum / wsum;
    out.standard_error = std::sqrt(1.0 / wsum);
    return out;
}

/// Estimates o_f = <psi_f|O|psi_f>, psi_f = U|b>, from repeated injection
/// and readout on a program state whose every tail is injected.
///
/// Branch P1 samples O on U|b> directly. Branch P0 leaves the heads in
/// (I - U|b><b|U^dag)/(2^n - 1), so its mean is (tr O - o_f)/(2^n - 1); the
/// two estimates are combined by inverse-variance weighting.
inline AlgorithmEstimate run_algorithm(const PureState &state, const ReadoutSpec &readout,
                                       const InjectionSpec &injection, std::size_t shots, RngStream &rng,
                                       AlgorithmOptions opts = {}) {
    if (shots == 0) {
        throw ArgumentError("run_algorithm: shots must be at least 1");
    }
    injection.check();
    const Dims &dims = state.dims();
    // Every wire is either an injected tail or a head.
    std::vector<std::size_t> heads;
    for (std::size_t w = 0; w < dims.size(); ++w) {
        if (std::find(injection.target_tails.begin(), injection.target_tails.end(), w) ==
            injection.target_tails.end()) {
            heads.push_back(w);
        }
    }
    std::size_t head_dim = 1;
    for (auto h : heads) {
        head_dim *= dims[h];
    }
    const std::size_t n = injection.n();
    if (head_dim != (std::size_t{1} << n)) {
        throw ConfigurationError("run_algorithm: every tail of the program must be injected");
    }
    std::size_t read_dim = 1;
    for (auto w : readout.target_heads) {
        if (std::find(heads.begin(), heads.end(), w) == heads.end()) {
            throw ConfigurationError("run_algorithm: readout target " + std::to_string(w) + " is not a head");
        }
        read_dim *= dims[w];
    }
    if (read_dim != readout.observable.dim()) {
        throw DimensionError("run_algorithm: observable dimension does not match readout targets");
    }
    const double tr_o = readout.trace_of_O * static_cast<double>(head_dim / read_dim);

    // Born distributions of the eigenvalues of O in each branch, each
    // computed from the post state of the actual ancilla circuit.
    const auto eig = hermitian_eigen(readout.observable.matrix());
    const double p1 = injection_p1(state, injection);
    std::vector<double> dist[2];
    for (std::size_t b = 0; b < 2; ++b) {
        const double pb = b == 1 ? p1 : 1.0 - p1;
        if (pb < 1e-15) {
            continue;
        }
        const auto post = inject_branch(state, injection, static_cast<InjectionBranch>(b)).post;
        const DensityOperator rho = reduced_state(post, readout.target_heads);
        for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
            const auto v = eig.vectors.col(j);
            dist[b].push_back(std::max(0.0, v.dot(rho.matrix() * v).real()));
        }
    }

    std::vector<double> values(shots);
    std::vector<std::uint8_t> branch(shots);
    const std::uint64_t base = rng.next_u64();
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            RngStream s(base, i);
            const double w[2] = {std::max(0.0, 1.0 - p1), p1};
            const std::size_t b = s.sample_discrete(w);
            branch[i] = static_cast<std::uint8_t>(b);
            values[i] = eig.values(static_cast<Eigen::Index>(s.sample_discrete(dist[b])));
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min<std::size_t>(opts.threads, shots));
    if (threads == 1) {
        work(0, shots);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (shots + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(shots, b + chunk);
            if (b < e) {
                pool.emplace_back(work, b, e);
            }
        }
        for (auto &th : pool) {
            th.join();
        }
    }

    AlgorithmEstimate out = estimate_from_branches(values, branch, tr_o, head_dim);
    out.p1_exact = p1;
    return out;
}

inline AlgorithmEstimate run_algorithm(const StoredProgram &program, const ReadoutSpec &readout,
                                       const InjectionSpec &injection, std::size_t shots, RngStream &rng,
                                       AlgorithmOptions opts = {}) {
    return run_algorithm(program_state(program), readout, injection, shots, rng, opts);
}

/// The circuit must be a pure program: no qubit wires and no contractions.
inline AlgorithmEstimate run_algorithm(const TailedCircuit &circuit, const ReadoutSpec &readout,
                                       const InjectionSpec &injection, std::size_t shots, RngStream &rng,
                                       AlgorithmOptions opts = {}) {
    if (circuit.qubit_wires() != 0 || !circuit.contractions().empty()) {
        throw ConfigurationError("run_algorithm: circuit must have no qubit wires and no contractions");
    }
    return run_algorithm(simulate(circuit), readout, injection, shots, rng, opts);
}

/// Exact <psi_f|O|psi_f> with psi_f the head state of the P1 branch.
inline double exact_readout(const PureState &state, const ReadoutSpec &readout, const InjectionSpec &injection) {
    const auto post = inject_branch(state, injection, InjectionBranch::P1).post;
    return expectation(readout.observable, reduced_state(post, readout.target_heads));
}

// ---------------------------------------------------------------------------
// Topological diagrams
// ---------------------------------------------------------------------------

struct TopoEndpoint {
    std::size_t vertex = 0;
    WireKind kind = WireKind::Head;  // Head or Tail
    std::size_t index = 0;

    bool operator==(const TopoEndpoint &) const = default;
    std::string str() const {
        return std::to_string(vertex) + (kind == WireKind::Head ? ".h" : ".t") + std::to_string(index);
    }
};

/// A vertex is a Choi state (G (x) I)|omega>^{(x)w}: w heads carrying the
/// gate and w untouched tails. A crossing has w = 2, a plain loop w = 1.
struct TopoVertex {
    UnitaryOp gate;
    std::size_t wires = 1;
};

struct TopoSegment {
    TopoEndpoint a;
    TopoEndpoint b;
};

struct TopoDiagram {
    std::size_t d = 2;
    std::vector<TopoVertex> vertices;
    std::vector<TopoSegment> segments;
    std::vector<TopoEndpoint> open_endpoints;
    bool postselected = true;  // closed loops are only meaningful postselected

    std::size_t add_vertex(UnitaryOp gate, std::size_t wires = 1) {
        vertices.push_back({std::move(gate), wires});
        return vertices.size() - 1;
    }
    void add_segment(TopoEndpoint a, TopoEndpoint b) {
        segments.push_back({a, b});
    }

    void validate() const {
        if (d < 2) {
            throw ValidationError("TopoDiagram: wire dimension must be at least 2");
        }
        std::size_t endpoints = 0;
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            const auto &x = vertices[v];
            if (x.wires == 0) {
                throw ValidationError("TopoDiagram: vertex " + std::to_string(v) + " has no wires");
            }
            std::size_t dim = 1;
            for (std::size_t i = 0; i < x.wires; ++i) {
                dim *= d;
            }
            if (x.gate.dim() != dim) {
                throw ValidationError("TopoDiagram: vertex " + std::to_string(v) + " gate has dimension " +
                                      std::to_string(x.gate.dim()) + ", expected " + std::to_string(dim));
            }
            endpoints += 2 * x.wires;
        }
        std::vector<TopoEndpoint> seen;
        auto note = [&](const TopoEndpoint &e) {
            if (e.vertex >= vertices.size() || e.index >= vertices[e.vertex].wires ||
                e.kind == WireKind::Qubit) {
                throw ValidationError("TopoDiagram: endpoint " + e.str() + " does not exist");
            }
            if (std::find(seen.begin(), seen.end(), e) != seen.end()) {
                throw ValidationError("TopoDiagram: endpoint " + e.str() + " used twice");
            }
            seen.push_back(e);
        };
        for (const auto &s : segments) {
            note(s.a);
            note(s.b);
        }
        for (const auto &e : open_endpoints) {
            note(e);
        }
        if (seen.size() != endpoints) {
            throw ValidationError("TopoDiagram: " + std::to_string(endpoints - seen.size()) +
                                  " endpoints are neither contracted nor declared open");
        }
        if (postselected) {
            return;
        }
        std::vector<std::vector<std::size_t>> adj(vertices.size());
        for (const auto &s : segments) {
            if (s.a.kind == s.b.kind) {
                continue;
            }
            const auto &h = s.a.kind == WireKind::Head ? s.a : s.b;
            const auto &t = s.a.kind == WireKind::Head ? s.b : s.a;
            adj[h.vertex].push_back(t.vertex);
        }
        std::vector<int> color(vertices.size(), 0);
        auto dfs = [&](auto &&self, std::size_t v) -> bool {
            color[v] = 1;
            for (auto w : adj[v]) {
                if (color[w] == 1 || (color[w] == 0 && self(self, w))) {
                    return true;
                }
            }
            color[v] = 2;
            return false;
        };
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            if (color[v] == 0 && dfs(dfs, v)) {
                throw ValidationError("TopoDiagram: cyclic time flow in a non-postselected diagram");
            }
        }
    }
};

struct TopoValue {
    cplx amplitude{0.0, 0.0};        // closed: the overlap; open: norm of the open state
    std::optional<PureState> state;  // open endpoints in declared order
    bool vanished = false;
};

/// <(x) Bell segments | (x) vertex Choi states>, exact and unnormalized
/// (each segment projects onto <omega|).
inline TopoValue eval_topological(const TopoDiagram &g) {
    g.validate();
    if (g.vertices.empty()) {
        return {cplx(1.0, 0.0), std::nullopt, false};
    }
    CVector v = CVector::Ones(1);
    Dims dims;
    std::vector<TopoEndpoint> live;
    for (std::size_t x = 0; x < g.vertices.size(); ++x) {
        const auto &vx = g.vertices[x];
        v = kron(v, vec(vx.gate.matrix()));
        for (std::size_t i = 0; i < vx.wires; ++i) {
            live.push_back({x, WireKind::Head, i});
        }
        for (std::size_t i = 0; i < vx.wires; ++i) {
            live.push_back({x, WireKind::Tail, i});
        }
        dims.insert(dims.end(), 2 * vx.wires, g.d);
    }
    const CVector omega = vec(identity(g.d));
    for (const auto &s : g.segments) {
        const auto pa = static_cast<std::size_t>(std::find(live.begin(), live.end(), s.a) - live.begin());
        const auto pb = static_cast<std::size_t>(std::find(live.begin(), live.end(), s.b) - live.begin());
        const std::vector<std::size_t> sel = {pa, pb};
        v = project_out(v, dims, sel, omega);
        dims = remove_subsystems(dims, sel);
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::max(pa, pb)));
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::min(pa, pb)));
    }
    if (live.empty()) {
        return {v(0), std::nullopt, false};
    }
    std::vector<std::size_t> perm;
    for (const auto &e : g.open_endpoints) {
        perm.push_back(static_cast<std::size_t>(std::find(live.begin(), live.end(), e) - live.begin()));
    }
    v = permute_subsystems(v, dims, perm);
    const double norm = v.norm();
    TopoValue out;
    out.amplitude = cplx(norm, 0.0);
    if (norm < 1e-300) {
        out.vanished = true;
        return out;
    }
    out.state = PureState::normalized(v, permute_dims(dims, perm));
    return out;
}

/// Single loop: one vertex with its head contracted to its own tail.
inline TopoDiagram circle(const UnitaryOp &u) {
    TopoDiagram g;
    g.d = u.dim();
    const auto v = g.add_vertex(u, 1);
    g.add_segment({v, WireKind::Head, 0}, {v, WireKind::Tail, 0});
    return g;
}

}  // namespace qvn
