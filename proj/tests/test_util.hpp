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

#include <gtest/gtest.h>

#include "qvn/kernel.hpp"

namespace qvn::test {

inline ::testing::AssertionResult MatrixNear(const CMatrix &actual, const CMatrix &expected, double tol) {
    if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
        return ::testing::AssertionFailure() << "shape " << shape_str(actual) << " vs " << shape_str(expected);
    }
    const double err = max_abs(actual - expected);
    if (err <= tol) {
        return ::testing::AssertionSuccess();
    }
    return ::testing::AssertionFailure() << "max |difference| = " << err << " > " << tol << "\nactual:\n"
                                         << actual << "\nexpected:\n"
                                         << expected;
}

/// Equality up to a global phase, via |<a|b>| = |a||b|.
inline ::testing::AssertionResult VectorNearUpToPhase(const CVector &a, const CVector &b, double tol) {
    const double overlap = std::abs(a.dot(b));
    const double gap = std::abs(a.norm() * b.norm() - overlap);
    if (gap <= tol) {
        return ::testing::AssertionSuccess();
    }
    return ::testing::AssertionFailure() << "phase-insensitive gap " << gap;
}

inline ::testing::AssertionResult MatrixNearUpToPhase(const CMatrix &a, const CMatrix &b, double tol) {
    const CVector va = Eigen::Map<const CVector>(a.data(), a.size());
    const CVector vb = Eigen::Map<const CVector>(b.data(), b.size());
    return VectorNearUpToPhase(va, vb, tol);
}

}  // namespace qvn::test
