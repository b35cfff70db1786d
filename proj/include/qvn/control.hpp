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

// Classical control: schedules of composition, injection and readout run
// shot by shot against a memory unit. Plus the one quantum-control
// primitive, a controlled black-box gate built from two controlled swaps.
//
// Schedule text:
//
//   QVNS1 shots=<n> seed=<u64>
//   store addr=<a> file=<path> copies=<c> [kind=program|data]
//   restore addr=<a> copies=<c>
//   compose a=<a1> b=<a2> strategy=rus|table|symmetric dest=<a3>
//   inject target=<a> [bits=<01..>] [mode=monolithic|cascade]
//   readout target=<a> obs=<Pauli string>
//   sample-tail target=<a> tail=<i>
//
// `store` lines are memory setup and are resolved by the caller; the rest
// run in order once per shot.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qvn/description.hpp"
#include "qvn/gates.hpp"
#include "qvn/memory.hpp"
#include "qvn/tailed.hpp"
#include "qvn/uqt.hpp"

namespace qvn {

// ---------------------------------------------------------------------------
// Controlled unknown gate
// ---------------------------------------------------------------------------

/// CSWAP (I (x) I (x) U) CSWAP on (control, target, ancilla), followed by
/// diag(e^{-i theta}, 1) on the control. With the ancilla in the known
/// eigenstate |phi> (U|phi> = e^{i theta}|phi>) this is exactly
/// CU (x) I on any control and target input. U enters only as a gate on the
/// ancilla wire.
inline UnitaryOp controlled_unknown(const UnitaryOp &u, const PureState &eigenstate, cplx eigenvalue,
                                    double tol = 1e-9) {
    const std::size_t d = u.dim();
    if (eigenstate.dim() != d) {
        throw DimensionError("controlled_unknown: eigenstate has dimension " + std::to_string(eigenstate.dim()) +
                             ", gate " + std::to_string(d));
    }
    if (std::abs(std::abs(eigenvalue) - 1.0) > tol) {
        throw ArgumentError("controlled_unknown: eigenvalue must have unit modulus");
    }
    const CVector &phi = eigenstate.amplitudes();
    const double residual = (u.matrix() * phi - eigenvalue * phi).norm();
    if (residual > tol) {
        throw PreconditionError("controlled_unknown: declared eigenstate has residual " + std::to_string(residual));
    }
    const CMatrix cswap = gates::CSWAP(d);
    const CMatrix ua = kron(identity(2 * d), u.matrix());
    CMatrix fix = CMatrix::Identity(2, 2);
    fix(0, 0) = std::conj(eigenvalue);
    return UnitaryOp(kron(fix, identity(d * d)) * cswap * ua * cswap, 1e-9);
}

/// Reduced (control, target) state after the circuit with the ancilla fed
/// `ancilla`.
inline DensityOperator controlled_unknown_output(const UnitaryOp &circuit, const DensityOperator &control_target,
                                                 const DensityOperator &ancilla) {
    const DensityOperator in = control_target.tensor(ancilla);
    if (in.dim() != circuit.dim()) {
        throw DimensionError("controlled_unknown_output: inputs do not match the circuit");
    }
    const CMatrix out = circuit.matrix() * in.matrix() * circuit.matrix().adjoint();
    const DensityOperator full(out, in.dims(), 1e-9, Check::Structural);
    return partial_trace(full, {0, 1});
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

struct ComposeInstr {
    std::size_t a = 0;
    std::size_t b = 0;
    ByproductStrategy strategy = ByproductStrategy::CorrectionTable;
    std::size_t dest = 0;
};

struct InjectInstr {
    std::size_t target = 0;
    std::vector<std::uint8_t> bits;  // empty means all ones
    AncillaMode mode = AncillaMode::Monolithic;
};

struct ReadoutInstr {
    std::size_t target = 0;
    std::string pauli;  // over {I, X, Y, Z}, one letter per qubit
};

struct RestoreInstr {
    std::size_t address = 0;
    std::size_t copies = 1;
};

struct SampleTailInstr {
    std::size_t target = 0;
    std::size_t tail = 0;
};

using Instruction = std::variant<ComposeInstr, InjectInstr, ReadoutInstr, RestoreInstr, SampleTailInstr>;

inline std::string instruction_name(const Instruction &i) {
    static constexpr const char *names[] = {"compose", "inject", "readout", "restore", "sample-tail"};
    return names[i.index()];
}

struct Schedule {
    std::vector<Instruction> instructions;
    std::size_t shots = 1;
    std::uint64_t seed = 0;
};

struct StoreDirective {
    std::size_t address = 0;
    std::string file;
    std::size_t copies = 1;
    SlotKind kind = SlotKind::Program;
    std::size_t line = 0;
};

struct ScheduleDocument {
    Schedule schedule;
    std::vector<StoreDirective> stores;
};

namespace detail {

inline std::vector<std::uint8_t> parse_bits(const text::Line &line, const text::Field &f) {
    std::vector<std::uint8_t> bits;
    for (char c : f.value) {
        if (c != '0' && c != '1') {
            throw ParseError(line.number, f.column, "bits must be a string of 0 and 1");
        }
        bits.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    if (bits.empty()) {
        throw ParseError(line.number, f.column, "empty bit string");
    }
    return bits;
}

inline std::string bits_string(const std::vector<std::uint8_t> &bits) {
    std::string s;
    for (auto b : bits) {
        s += static_cast<char>('0' + b);
    }
    return s;
}

}  // namespace detail

inline ScheduleDocument parse_schedule(std::string_view doc) {
    const auto lines = text::tokenize(doc);
    if (lines.empty()) {
        throw ParseError(1, 1, "empty document");
    }
    ScheduleDocument out;
    const auto &h = lines.front();
    text::expect_header(h, "QVNS1");
    h.check_keys({"shots", "seed"});
    out.schedule.shots = text::parse_count(h, h.require("shots"));
    if (out.schedule.shots == 0) {
        throw ParseError(h.number, h.require("shots").column, "shots must be at least 1");
    }
    if (const auto *s = h.find("seed")) {
        out.schedule.seed = text::parse_u64(h, *s);
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto &l = lines[i];
        const std::string &op = l.head;
        if (op == "store") {
            l.check_keys({"addr", "file", "copies", "kind"});
            StoreDirective s;
            s.address = text::parse_count(l, l.require("addr"));
            s.file = l.require("file").value;
            s.copies = text::parse_count(l, l.require("copies"));
            s.line = l.number;
            if (const auto *k = l.find("kind")) {
                if (k->value == "data") {
                    s.kind = SlotKind::Data;
                } else if (k->value != "program") {
                    throw ParseError(l.number, k->column, "kind must be program or data");
                }
            }
            out.stores.push_back(std::move(s));
        } else if (op == "compose") {
            l.check_keys({"a", "b", "strategy", "dest"});
            ComposeInstr c;
            c.a = text::parse_count(l, l.require("a"));
            c.b = text::parse_count(l, l.require("b"));
            c.dest = text::parse_count(l, l.require("dest"));
            const auto &sf = l.require("strategy");
            const auto st = parse_strategy(sf.value);
            if (!st) {
                throw ParseError(l.number, sf.column, "unknown strategy '" + sf.value + "'");
            }
            c.strategy = *st;
            out.schedule.instructions.push_back(c);
        } else if (op == "inject") {
            l.check_keys({"target", "bits", "mode"});
            InjectInstr c;
            c.target = text::parse_count(l, l.require("target"));
            if (const auto *b = l.find("bits")) {
                c.bits = detail::parse_bits(l, *b);
            }
            if (const auto *m = l.find("mode")) {
                if (m->value == "cascade") {
                    c.mode = AncillaMode::Cascade;
                } else if (m->value != "monolithic") {
                    throw ParseError(l.number, m->column, "mode must be monolithic or cascade");
                }
            }
            out.schedule.instructions.push_back(c);
        } else if (op == "readout") {
            l.check_keys({"target", "obs"});
            ReadoutInstr c;
            c.target = text::parse_count(l, l.require("target"));
            const auto &o = l.require("obs");
            if (o.value.find_first_not_of("IXYZ") != std::string::npos) {
                throw ParseError(l.number, o.column, "observable must be a Pauli string over I, X, Y, Z");
            }
            c.pauli = o.value;
            out.schedule.instructions.push_back(c);
        } else if (op == "restore") {
            l.check_keys({"addr", "copies"});
            RestoreInstr c;
            c.address = text::parse_count(l, l.require("addr"));
            c.copies = text::parse_count(l, l.require("copies"));
            out.schedule.instructions.push_back(c);
        } else if (op == "sample-tail") {
            l.check_keys({"target", "tail"});
            SampleTailInstr c;
            c.target = text::parse_count(l, l.require("target"));
            c.tail = text::parse_count(l, l.require("tail"));
            out.schedule.instructions.push_back(c);
        } else {
            throw ParseError(l.number, l.head_column == 0 ? 1 : l.head_column,
                             op.empty() ? "missing instruction word" : "unknown instruction '" + op + "'");
        }
    }
    return out;
}

/// Canonical text of a schedule (without store directives).
inline std::string format_schedule(const Schedule &s) {
    std::string out = "QVNS1 shots=" + std::to_string(s.shots) + " seed=" + std::to_string(s.seed) + "\n";
    for (const auto &ins : s.instructions) {
        std::visit(
            [&](const auto &x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, ComposeInstr>) {
                    out += "compose a=" + std::to_string(x.a) + " b=" + std::to_string(x.b) +
                           " strategy=" + std::string(strategy_name(x.strategy)) + " dest=" + std::to_string(x.dest);
                } else if constexpr (std::is_same_v<T, InjectInstr>) {
                    out += "inject target=" + std::to_string(x.target);
                    if (!x.bits.empty()) {
                        out += " bits=" + detail::bits_string(x.bits);
                    }
                    out += x.mode == AncillaMode::Cascade ? " mode=cascade" : " mode=monolithic";
                } else if constexpr (std::is_same_v<T, ReadoutInstr>) {
                    out += "readout target=" + std::to_string(x.target) + " obs=" + x.pauli;
                } else if constexpr (std::is_same_v<T, RestoreInstr>) {
                    out += "restore addr=" + std::to_string(x.address) + " copies=" + std::to_string(x.copies);
                } else {
                    out += "sample-tail target=" + std::to_string(x.target) + " tail=" + std::to_string(x.tail);
                }
            },
            ins);
        out += '\n';
    }
    return out;
}

struct ReadoutEstimate {
    std::size_t instruction = 0;
    std::size_t target = 0;
    std::string observable;
    bool injected = false;
    AlgorithmEstimate estimate;  // with injection: o_f; without: plain mean of the draws
};

struct ExecutionResult {
    std::vector<RunRecord> records;  // one per shot
    std::vector<ReadoutEstimate> estimates;
};

namespace detail {

inline std::size_t qubit_count(std::size_t d) {
    if (!is_power_of_two(d)) {
        throw ConfigurationError("schedule: program dimension " + std::to_string(d) + " is not a qubit register");
    }
    std::size_t n = 0;
    while ((std::size_t{1} << n) < d) {
        ++n;
    }
    return n;
}

/// Adds the failing instruction to the message, keeping the error type.
template <typename F>
auto at_instruction(std::size_t index, const Instruction &ins, F &&f) -> decltype(f()) {
    const std::string where = "instruction " + std::to_string(index) + " (" + instruction_name(ins) + "): ";
    try {
        return f();
    } catch (const OutOfCopiesError &e) {
        throw OutOfCopiesError(where + e.what());
    } catch (const NotFoundError &e) {
        throw NotFoundError(where + e.what());
    } catch (const NotRestorableError &e) {
        throw NotRestorableError(where + e.what());
    }
}

}  // namespace detail

/// Static checks against the memory contents: addresses exist (or are
/// produced by an earlier compose), compose destinations are fresh and
/// unique, each target is read out at most once.
inline void validate_schedule(const MemoryUnit &mem, const Schedule &s) {
    if (s.shots == 0) {
        throw ValidationError("schedule: shots must be at least 1");
    }
    std::set<std::size_t> known;
    std::map<std::size_t, std::size_t> width;  // qubits per address, where known
    for (auto a : mem.addresses()) {
        known.insert(a);
        const MemorySlot &slot = mem.slot(a);
        if (slot.description) {
            width[a] = slot.description->n;
        } else if (!slot.copies.empty() && is_power_of_two(slot.copies.front().d())) {
            width[a] = detail::qubit_count(slot.copies.front().d());
        }
    }
    std::set<std::size_t> dests;
    std::set<std::size_t> read;
    auto need = [&](std::size_t i, std::size_t a) {
        if (!known.count(a)) {
            throw ValidationError("schedule: instruction " + std::to_string(i) + " uses unknown address " +
                                  std::to_string(a));
        }
    };
    for (std::size_t i = 0; i < s.instructions.size(); ++i) {
        std::visit(
            [&](const auto &x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, ComposeInstr>) {
                    need(i, x.a);
                    need(i, x.b);
                    if (known.count(x.dest) || dests.count(x.dest)) {
                        throw ValidationError("schedule: compose destination " + std::to_string(x.dest) +
                                              " is already in use");
                    }
                    dests.insert(x.dest);
                    known.insert(x.dest);
                    if (width.count(x.a)) {
                        width[x.dest] = width[x.a];
                    }
                } else if constexpr (std::is_same_v<T, InjectInstr>) {
                    need(i, x.target);
                } else if constexpr (std::is_same_v<T, ReadoutInstr>) {
                    need(i, x.target);
                    if (read.count(x.target)) {
                        throw ValidationError("schedule: target " + std::to_string(x.target) +
                                              " is read out more than once");
                    }
                    read.insert(x.target);
                    if (x.pauli.empty()) {
                        throw ValidationError("schedule: empty observable");
                    }
                    if (width.count(x.target) && width[x.target] != x.pauli.size()) {
                        throw ValidationError("schedule: observable " + x.pauli + " does not match the " +
                                              std::to_string(width[x.target]) + "-qubit program at " +
                                              std::to_string(x.target));
                    }
                } else if constexpr (std::is_same_v<T, RestoreInstr>) {
                    need(i, x.address);
                    if (x.copies == 0) {
                        throw ValidationError("schedule: restore needs at least one copy");
                    }
                } else {
                    need(i, x.target);
                }
            },
            s.instructions[i]);
    }
}

/// Runs the schedule once per shot with RngStream(seed, shot). Memory is
/// mutated as the instructions say: compose consumes one copy of each input
/// and deposits the result at `dest`; the first inject, readout or
/// sample-tail on a target in a shot consumes one copy of it.
inline ExecutionResult execute(MemoryUnit &mem, const Schedule &s) {
    validate_schedule(mem, s);
    ExecutionResult out;
    if (s.instructions.empty()) {
        return out;
    }
    struct Work {
        PureState state;
        std::size_t n = 0;
        std::optional<InjectionBranch> branch;
        double p1 = 0;
    };
    // Per readout instruction: draws and branches over shots.
    std::map<std::size_t, std::vector<double>> values;
    std::map<std::size_t, std::vector<std::uint8_t>> branches;
    std::map<std::size_t, std::size_t> read_n;
    std::map<std::size_t, bool> read_injected;
    std::map<std::size_t, double> read_p1;

    for (std::size_t shot = 0; shot < s.shots; ++shot) {
        RngStream rng(s.seed, shot);
        RunRecord rec;
        rec.shot = shot;
        std::map<std::size_t, Work> work;
        auto working = [&](std::size_t target) -> Work & {
            auto it = work.find(target);
            if (it == work.end()) {
                const StoredProgram p = mem.fetch_consume(target);
                Work w{program_state(p), detail::qubit_count(p.d()), std::nullopt};
                it = work.emplace(target, std::move(w)).first;
            }
            return it->second;
        };
        for (std::size_t i = 0; i < s.instructions.size(); ++i) {
            const Instruction &ins = s.instructions[i];
            detail::at_instruction(i, ins, [&] {
                std::visit(
                    [&](const auto &x) {
                        using T = std::decay_t<decltype(x)>;
                        if constexpr (std::is_same_v<T, ComposeInstr>) {
                            const StoredProgram p1 = mem.fetch_for_compose(x.a);
                            const StoredProgram p2 = mem.fetch_for_compose(x.b);
                            auto r = compose(p1, p2, x.strategy, rng);
                            rec.bell_outcomes.insert(rec.bell_outcomes.end(), r.outcomes.begin(), r.outcomes.end());
                            if (mem.contains(x.dest)) {
                                mem.deposit(x.dest, std::move(r.program));
                            } else {
                                auto desc = r.program.description();
                                mem.capture({std::move(r.program)}, SlotKind::Program, x.dest, std::move(desc));
                            }
                        } else if constexpr (std::is_same_v<T, InjectInstr>) {
                            Work &w = working(x.target);
                            if (w.branch) {
                                throw ConfigurationError("schedule: target injected twice in one shot");
                            }
                            const auto spec = InjectionSpec::all_tails(w.n, x.bits, x.mode);
                            auto r = inject(w.state, spec, rng);
                            w.branch = r.branch;
                            w.p1 = r.p1;
                            w.state = std::move(r.post);
                            rec.injection_branch = r.branch;
                        } else if constexpr (std::is_same_v<T, ReadoutInstr>) {
                            Work &w = working(x.target);
                            if (x.pauli.size() != w.n) {
                                throw ConfigurationError("schedule: observable " + x.pauli + " does not match a " +
                                                         std::to_string(w.n) + "-qubit program");
                            }
                            std::vector<std::size_t> heads(w.n);
                            std::iota(heads.begin(), heads.end(), 0);
                            const auto eig = hermitian_eigen(gates::pauli_string(x.pauli));
                            const double v = detail::sample_observable(w.state, heads, eig, rng);
                            rec.sampled_observable_value = v;
                            values[i].push_back(v);
                            branches[i].push_back(w.branch ? static_cast<std::uint8_t>(*w.branch) : 0);
                            read_n[i] = w.n;
                            read_injected[i] = w.branch.has_value();
                            read_p1[i] = w.p1;
                        } else if constexpr (std::is_same_v<T, RestoreInstr>) {
                            mem.restore(x.address, x.copies);
                        } else {
                            Work &w = working(x.target);
                            if (x.tail >= w.n) {
                                throw ConfigurationError("schedule: tail " + std::to_string(x.tail) +
                                                         " out of range");
                            }
                            auto r = sample_tail_Z(w.state, w.n + x.tail, rng);
                            rec.tail_bits.push_back(r.bit);
                            w.state = std::move(r.post);
                        }
                    },
                    ins);
            });
        }
        out.records.push_back(std::move(rec));
    }

    for (const auto &[i, v] : values) {
        const auto &ro = std::get<ReadoutInstr>(s.instructions[i]);
        ReadoutEstimate e;
        e.instruction = i;
        e.target = ro.target;
        e.observable = ro.pauli;
        e.injected = read_injected[i];
        const std::size_t head_dim = std::size_t{1} << read_n[i];
        if (e.injected) {
            const double tr = gates::pauli_string(ro.pauli).trace().real();
            e.estimate = estimate_from_branches(v, branches[i], tr, head_dim);
            e.estimate.p1_exact = read_p1[i];
        } else {
            BranchStats st;
            st.count = v.size();
            for (double x : v) {
                st.mean += x;
            }
            st.mean /= static_cast<double>(v.size());
            for (double x : v) {
                st.variance += (x - st.mean) * (x - st.mean);
            }
            st.variance = v.size() > 1 ? st.variance / static_cast<double>(v.size() - 1) : 0.0;
            e.estimate.value = st.mean;
            e.estimate.standard_error = std::sqrt(st.variance / static_cast<double>(v.size()));
            e.estimate.shots = v.size();
            e.estimate.p0 = st;
        }
        out.estimates.push_back(std::move(e));
    }
    return out;
}

}  // namespace qvn
