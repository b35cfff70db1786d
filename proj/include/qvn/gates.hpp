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

#include <numbers>
#include <string_view>

#include "qvn/kernel.hpp"

namespace qvn::gates {

inline CMatrix I2() {
    return identity(2);
}

inline CMatrix X() {
    CMatrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

inline CMatrix Y() {
    CMatrix m(2, 2);
    m << 0, cplx(0, -1), cplx(0, 1), 0;
    return m;
}

inline CMatrix Z() {
    CMatrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

inline CMatrix H() {
    CMatrix m(2, 2);
    const double s = 1.0 / std::numbers::sqrt2;
    m << s, s, s, -s;
    return m;
}

inline CMatrix S() {
    CMatrix m(2, 2);
    m << 1, 0, 0, cplx(0, 1);
    return m;
}

/// T = Z^(1/4).
inline CMatrix T() {
    CMatrix m(2, 2);
    m << 1, 0, 0, std::polar(1.0, std::numbers::pi / 4);
    return m;
}

inline CMatrix Tdg() {
    return T().adjoint();
}

inline CMatrix P0() {
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = 1;
    return m;
}

inline CMatrix P1() {
    CMatrix m = CMatrix::Zero(2, 2);
    m(1, 1) = 1;
    return m;
}

/// |0><0| (x) I + |1><1| (x) u, control most significant.
inline CMatrix controlled(const CMatrix &u) {
    return kron(P0(), identity(u.rows())) + kron(P1(), u);
}

inline CMatrix CX() {
    return controlled(X());
}

inline CMatrix CZ() {
    return controlled(Z());
}

/// Toffoli, controls on the two most significant qubits.
inline CMatrix CCX() {
    return controlled(CX());
}

inline CMatrix SWAP(std::size_t d = 2) {
    CMatrix m = CMatrix::Zero(d * d, d * d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            m(j * d + i, i * d + j) = 1;
        }
    }
    return m;
}

/// Qubit-controlled swap of two d-level systems.
inline CMatrix CSWAP(std::size_t d = 2) {
    return controlled(SWAP(d));
}

/// n-fold Toffoli on n controls plus one target (target least significant).
inline CMatrix multi_controlled_x(std::size_t controls) {
    const std::size_t dim = std::size_t{1} << (controls + 1);
    CMatrix m = identity(dim);
    const std::size_t a = dim - 2;
    const std::size_t b = dim - 1;
    m(a, a) = 0;
    m(b, b) = 0;
    m(a, b) = 1;
    m(b, a) = 1;
    return m;
}

/// Tensor product of single-qubit Paulis from a string over {I,X,Y,Z}.
inline CMatrix pauli_string(std::string_view s) {
    if (s.empty()) {
        throw ArgumentError("pauli_string: empty string");
    }
    CMatrix out = CMatrix::Identity(1, 1);
    for (char c : s) {
        switch (c) {
            case 'I':
                out = kron(out, I2());
                break;
            case 'X':
                out = kron(out, X());
                break;
            case 'Y':
                out = kron(out, Y());
                break;
            case 'Z':
                out = kron(out, Z());
                break;
            default:
                throw ArgumentError(std::string("pauli_string: unknown letter '") + c + "'");
        }
    }
    return out;
}

}  // namespace qvn::gates
