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
#include <string>
#include <vector>

#include "qvn/duality.hpp"

namespace qvn {

/// Shift X|j> = |j+1 mod d>.
inline CMatrix weyl_x(std::size_t d) {
    CMatrix m = CMatrix::Zero(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        m((j + 1) % d, j) = 1.0;
    }
    return m;
}

/// Clock Z|j> = w^j |j>, w = exp(2 pi i / d).
inline CMatrix weyl_z(std::size_t d) {
    CMatrix m = CMatrix::Zero(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        m(j, j) = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(d));
    }
    return m;
}

enum class PauliFamily {
    Weyl,         // X^a Z^b on one d-level system, k = a d + b
    QubitTensor,  // tensor product of qubit X^a Z^b, one base-4 digit per qubit
};

inline bool is_power_of_two(std::size_t d) {
    return d >= 2 && (d & (d - 1)) == 0;
}

/// The d^2 generalized Pauli operators; op(0) = I and tr(op(j)^dag op(k)) = d delta_jk.
class PauliBasis {
   public:
    PauliBasis(std::size_t d, PauliFamily family) : d_(d), family_(family) {
        if (d < 2) {
            throw ArgumentError("PauliBasis: dimension must be at least 2");
        }
        if (family == PauliFamily::QubitTensor && !is_power_of_two(d)) {
            throw ArgumentError("PauliBasis: qubit tensor basis needs a power-of-two dimension, got " +
                                std::to_string(d));
        }
        ops_.reserve(d * d);
        if (family == PauliFamily::Weyl) {
            const CMatrix x = weyl_x(d);
            const CMatrix z = weyl_z(d);
            CMatrix xa = identity(d);
            for (std::size_t a = 0; a < d; ++a) {
                CMatrix op = xa;
                for (std::size_t b = 0; b < d; ++b) {
                    ops_.push_back(op);
                    op = op * z;
                }
                xa = x * xa;
            }
        } else {
            std::size_t n = 0;
            while ((std::size_t{1} << n) < d) {
                ++n;
            }
            const CMatrix single[4] = {identity(2), weyl_z(2), weyl_x(2), weyl_x(2) * weyl_z(2)};
            for (std::size_t k = 0; k < d * d; ++k) {
                CMatrix op = CMatrix::Identity(1, 1);
                for (std::size_t q = 0; q < n; ++q) {
                    const std::size_t digit = (k >> (2 * (n - 1 - q))) & 3u;
                    op = kron(op, single[digit]);
                }
                ops_.push_back(std::move(op));
            }
        }
    }

    /// Qubit tensor basis when d is a power of two, Weyl otherwise.
    static PauliBasis standard(std::size_t d) {
        return PauliBasis(d, is_power_of_two(d) ? PauliFamily::QubitTensor : PauliFamily::Weyl);
    }

    std::size_t d() const {
        return d_;
    }
    PauliFamily family() const {
        return family_;
    }
    std::size_t size() const {
        return ops_.size();
    }
    const CMatrix &op(std::size_t k) const {
        if (k >= ops_.size()) {
            throw ArgumentError("PauliBasis: index " + std::to_string(k) + " out of range");
        }
        return ops_[k];
    }
    const std::vector<CMatrix> &ops() const {
        return ops_;
    }

    /// Human-readable name. In the qubit family the letter Y stands for XZ = -iY.
    std::string label(std::size_t k) const {
        if (family_ == PauliFamily::Weyl) {
            return "X^" + std::to_string(k / d_) + "Z^" + std::to_string(k % d_);
        }
        static constexpr char letters[4] = {'I', 'Z', 'X', 'Y'};
        std::string s;
        for (std::size_t m = d_; m > 1; m >>= 1) {
            s.insert(s.begin(), letters[k & 3u]);
            k >>= 2;
        }
        return s;
    }

   private:
    std::size_t d_;
    PauliFamily family_;
    std::vector<CMatrix> ops_;
};

/// Orthonormal basis |omega_k> = (sigma_k (x) I)|omega> of C^d (x) C^d.
class BellBasis {
   public:
    explicit BellBasis(PauliBasis paulis) : paulis_(std::move(paulis)) {
        vectors_.reserve(paulis_.size());
        for (const auto &s : paulis_.ops()) {
            vectors_.push_back(vec(s));
        }
    }
    static BellBasis standard(std::size_t d) {
        return BellBasis(PauliBasis::standard(d));
    }

    std::size_t d() const {
        return paulis_.d();
    }
    std::size_t size() const {
        return vectors_.size();
    }
    const PauliBasis &paulis() const {
        return paulis_;
    }
    const CVector &vector(std::size_t k) const {
        return vectors_.at(k);
    }
    CMatrix projector(std::size_t k) const {
        return vectors_.at(k) * vectors_.at(k).adjoint();
    }
    std::vector<CMatrix> projectors() const {
        std::vector<CMatrix> out;
        out.reserve(size());
        for (std::size_t k = 0; k < size(); ++k) {
            out.push_back(projector(k));
        }
        return out;
    }
    /// B = sum_k |k><omega_k|, mapping the Bell basis to the computational basis of the pair.
    CMatrix rotation() const {
        const std::size_t n = size();
        CMatrix b(n, n);
        for (std::size_t k = 0; k < n; ++k) {
            b.row(k) = vectors_[k].adjoint();
        }
        return b;
    }

   private:
    PauliBasis paulis_;
    std::vector<CVector> vectors_;
};

}  // namespace qvn
