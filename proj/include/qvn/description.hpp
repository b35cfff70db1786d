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

// Classical program descriptions and the QVN1 line format.
//
//   QVN1 name=<token> n=<int>
//   t=<slot> g=<tag> q=<i[,j[,k]]>
//   t=<slot> g=custom q=<...> rows=<d> data=<re,im;re,im;...>
//
// Blank lines and lines starting with '#' are ignored on input; CRLF is
// accepted. Numbers use the shortest representation that round-trips.

#pragma once

#include <algorithm>
#include <charconv>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qvn/gates.hpp"

namespace qvn {

enum class GateTag { H, T, Tdg, X, Z, CX, CZ, CCX, Custom };

inline std::string_view gate_tag_name(GateTag g) {
    switch (g) {
        case GateTag::H:
            return "H";
        case GateTag::T:
            return "T";
        case GateTag::Tdg:
            return "Tdg";
        case GateTag::X:
            return "X";
        case GateTag::Z:
            return "Z";
        case GateTag::CX:
            return "CX";
        case GateTag::CZ:
            return "CZ";
        case GateTag::CCX:
            return "CCX";
        case GateTag::Custom:
            return "custom";
    }
    return "?";
}

inline std::optional<GateTag> parse_gate_tag(std::string_view s) {
    for (GateTag g : {GateTag::H, GateTag::T, GateTag::Tdg, GateTag::X, GateTag::Z, GateTag::CX, GateTag::CZ,
                      GateTag::CCX, GateTag::Custom}) {
        if (gate_tag_name(g) == s) {
            return g;
        }
    }
    return std::nullopt;
}

/// Number of wires a built-in gate acts on (0 for custom).
inline std::size_t gate_arity(GateTag g) {
    switch (g) {
        case GateTag::CX:
        case GateTag::CZ:
            return 2;
        case GateTag::CCX:
            return 3;
        case GateTag::Custom:
            return 0;
        default:
            return 1;
    }
}

struct GateRecord {
    GateTag tag = GateTag::H;
    std::vector<std::size_t> targets;
    std::size_t slot = 0;
    CMatrix matrix;  // custom gates only

    bool operator==(const GateRecord &o) const {
        return tag == o.tag && targets == o.targets && slot == o.slot && matrix.rows() == o.matrix.rows() &&
               matrix.cols() == o.matrix.cols() && (matrix.size() == 0 || matrix == o.matrix);
    }
};

/// Gate list on n qubits. The described unitary is g_last ... g_1; wire 0
/// is the most significant qubit.
struct ProgramDescription {
    std::string name = "program";
    std::size_t n = 1;
    std::vector<GateRecord> gates;

    bool operator==(const ProgramDescription &) const = default;

    std::size_t dim() const {
        return std::size_t{1} << n;
    }

    ProgramDescription &add(GateTag tag, std::vector<std::size_t> targets, std::optional<std::size_t> slot = {}) {
        GateRecord g;
        g.tag = tag;
        g.targets = std::move(targets);
        g.slot = slot ? *slot : next_slot();
        gates.push_back(std::move(g));
        return *this;
    }

    ProgramDescription &add_custom(CMatrix m, std::vector<std::size_t> targets, std::optional<std::size_t> slot = {}) {
        GateRecord g;
        g.tag = GateTag::Custom;
        g.matrix = std::move(m);
        g.targets = std::move(targets);
        g.slot = slot ? *slot : next_slot();
        gates.push_back(std::move(g));
        return *this;
    }

    std::size_t next_slot() const {
        return gates.empty() ? 0 : gates.back().slot + 1;
    }
};

inline CMatrix gate_matrix(const GateRecord &g) {
    switch (g.tag) {
        case GateTag::H:
            return gates::H();
        case GateTag::T:
            return gates::T();
        case GateTag::Tdg:
            return gates::Tdg();
        case GateTag::X:
            return gates::X();
        case GateTag::Z:
            return gates::Z();
        case GateTag::CX:
            return gates::CX();
        case GateTag::CZ:
            return gates::CZ();
        case GateTag::CCX:
            return gates::CCX();
        case GateTag::Custom:
            return g.matrix;
    }
    return g.matrix;
}

inline bool valid_token(std::string_view s) {
    if (s.empty()) {
        return false;
    }
    return std::all_of(s.begin(), s.end(), [](char c) {
        return c > ' ' && c != '=' && c != '#' && static_cast<unsigned char>(c) < 0x7f;
    });
}

/// Throws ValidationError when the description is inconsistent.
inline void validate(const ProgramDescription &d, double tol = kDefaultTolerance) {
    if (!valid_token(d.name)) {
        throw ValidationError("description: name must be a non-empty token without spaces, '=' or '#'");
    }
    if (d.n == 0 || d.n > 12) {
        throw ValidationError("description: qubit count must be in [1, 12], got " + std::to_string(d.n));
    }
    std::size_t last_slot = 0;
    for (std::size_t i = 0; i < d.gates.size(); ++i) {
        const auto &g = d.gates[i];
        const std::string where = "description: gate " + std::to_string(i) + " (" + std::string(gate_tag_name(g.tag)) + ")";
        if (g.slot < last_slot) {
            throw ValidationError(where + ": time slots must be nondecreasing");
        }
        last_slot = g.slot;
        if (g.targets.empty()) {
            throw ValidationError(where + ": no target wires");
        }
        for (std::size_t a = 0; a < g.targets.size(); ++a) {
            if (g.targets[a] >= d.n) {
                throw ValidationError(where + ": wire " + std::to_string(g.targets[a]) + " out of range");
            }
            for (std::size_t b = 0; b < a; ++b) {
                if (g.targets[a] == g.targets[b]) {
                    throw ValidationError(where + ": repeated target wire");
                }
            }
        }
        if (g.tag == GateTag::Custom) {
            const auto expected = static_cast<Eigen::Index>(std::size_t{1} << g.targets.size());
            if (g.matrix.rows() != expected || g.matrix.cols() != expected) {
                throw ValidationError(where + ": matrix " + shape_str(g.matrix) + " does not match " +
                                      std::to_string(g.targets.size()) + " target wires");
            }
            if (!all_finite(g.matrix) || unitary_residual(g.matrix) > tol) {
                throw ValidationError(where + ": matrix is not unitary");
            }
        } else if (g.targets.size() != gate_arity(g.tag)) {
            throw ValidationError(where + ": expects " + std::to_string(gate_arity(g.tag)) + " target wires");
        } else if (g.matrix.size() != 0) {
            throw ValidationError(where + ": only custom gates carry a matrix");
        }
    }
}

/// The unitary g_last ... g_1 on 2^n dimensions.
inline UnitaryOp synthesize_unitary(const ProgramDescription &d) {
    validate(d);
    const Dims dims(d.n, 2);
    const std::size_t dim = d.dim();
    CMatrix u = identity(dim);
    for (const auto &g : d.gates) {
        const CMatrix m = gate_matrix(g);
        for (std::size_t c = 0; c < dim; ++c) {
            u.col(c) = apply_on(u.col(c), dims, m, g.targets);
        }
    }
    return UnitaryOp(std::move(u), 1e-9);
}

/// `first` then `second`; the slots of `second` follow those of `first`.
inline ProgramDescription concatenate(const ProgramDescription &first, const ProgramDescription &second) {
    if (first.n != second.n) {
        throw DimensionError("concatenate: descriptions act on " + std::to_string(first.n) + " and " +
                             std::to_string(second.n) + " qubits");
    }
    ProgramDescription out;
    out.name = first.name + "+" + second.name;
    out.n = first.n;
    out.gates = first.gates;
    const std::size_t offset = first.next_slot();
    for (auto g : second.gates) {
        g.slot += offset;
        out.gates.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

namespace text {

inline std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

inline std::string format_matrix(const CMatrix &m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (!out.empty()) {
                out += ';';
            }
            out += format_double(m(i, j).real());
            out += ',';
            out += format_double(m(i, j).imag());
        }
    }
    return out;
}

struct Field {
    std::string key;
    std::string value;
    std::size_t column = 0;  // 1-based column of the key
};

struct Line {
    std::size_t number = 0;
    std::vector<Field> fields;
    std::string head;  // first word if it has no '=' (e.g. "QVN1"), else empty
    std::size_t head_column = 0;

    const Field *find(std::string_view key) const {
        for (const auto &f : fields) {
            if (f.key == key) {
                return &f;
            }
        }
        return nullptr;
    }
    const Field &require(std::string_view key) const {
        const Field *f = find(key);
        if (f == nullptr) {
            throw ParseError(number, 0, "missing field '" + std::string(key) + "'");
        }
        return *f;
    }
    /// Rejects fields outside `allowed`.
    void check_keys(std::initializer_list<std::string_view> allowed) const {
        for (const auto &f : fields) {
            if (std::find(allowed.begin(), allowed.end(), f.key) == allowed.end()) {
                throw ParseError(number, f.column, "unexpected field '" + f.key + "'");
            }
        }
    }
};

/// Splits a document into non-empty, non-comment lines of key=value words.
inline std::vector<Line> tokenize(std::string_view doc) {
    std::vector<Line> out;
    std::size_t number = 0;
    std::size_t pos = 0;
    while (pos <= doc.size()) {
        std::size_t end = doc.find('\n', pos);
        if (end == std::string_view::npos) {
            end = doc.size();
        }
        std::string_view raw = doc.substr(pos, end - pos);
        ++number;
        pos = end + 1;
        if (!raw.empty() && raw.back() == '\r') {
            raw.remove_suffix(1);
        }
        std::size_t i = 0;
        while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t')) {
            ++i;
        }
        if (i == raw.size() || raw[i] == '#') {
            if (end == doc.size()) {
                break;
            }
            continue;
        }
        Line line;
        line.number = number;
        bool first = true;
        while (i < raw.size()) {
            while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t')) {
                ++i;
            }
            if (i == raw.size()) {
                break;
            }
            const std::size_t start = i;
            while (i < raw.size() && raw[i] != ' ' && raw[i] != '\t') {
                ++i;
            }
            const std::string_view word = raw.substr(start, i - start);
            const std::size_t eq = word.find('=');
            if (eq == std::string_view::npos) {
                if (!first) {
                    throw ParseError(number, start + 1, "expected key=value, got '" + std::string(word) + "'");
                }
                line.head = std::string(word);
                line.head_column = start + 1;
            } else {
                if (eq == 0) {
                    throw ParseError(number, start + 1, "empty key in '" + std::string(word) + "'");
                }
                const std::string key(word.substr(0, eq));
                if (line.find(key) != nullptr) {
                    throw ParseError(number, start + 1, "duplicate field '" + key + "'");
                }
                line.fields.push_back({key, std::string(word.substr(eq + 1)), start + 1});
            }
            first = false;
        }
        out.push_back(std::move(line));
        if (end == doc.size()) {
            break;
        }
    }
    return out;
}

inline std::size_t parse_count(const Line &line, const Field &f) {
    std::size_t v = 0;
    const char *b = f.value.data();
    const char *e = b + f.value.size();
    const auto r = std::from_chars(b, e, v);
    if (f.value.empty() || r.ec != std::errc() || r.ptr != e) {
        throw ParseError(line.number, f.column, "field '" + f.key + "': '" + f.value + "' is not a nonnegative integer");
    }
    return v;
}

inline std::uint64_t parse_u64(const Line &line, const Field &f) {
    std::uint64_t v = 0;
    const char *b = f.value.data();
    const char *e = b + f.value.size();
    const auto r = std::from_chars(b, e, v);
    if (f.value.empty() || r.ec != std::errc() || r.ptr != e) {
        throw ParseError(line.number, f.column, "field '" + f.key + "': '" + f.value + "' is not a nonnegative integer");
    }
    return v;
}

inline double parse_double(const Line &line, const Field &f, std::string_view s) {
    double v = 0;
    const char *b = s.data();
    const char *e = b + s.size();
    const auto r = std::from_chars(b, e, v);
    if (s.empty() || r.ec != std::errc() || r.ptr != e) {
        throw ParseError(line.number, f.column, "field '" + f.key + "': '" + std::string(s) + "' is not a number");
    }
    return v;
}

inline std::vector<std::size_t> parse_index_list(const Line &line, const Field &f) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = f.value.find(',', pos);
        const std::string part = f.value.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        out.push_back(parse_count(line, Field{f.key, part, f.column}));
        if (comma == std::string::npos) {
            break;
        }
        pos = comma + 1;
    }
    return out;
}

/// `rows` x `rows` complex matrix from "re,im;re,im;..." in row-major order.
inline CMatrix parse_matrix(const Line &line, const Field &f, std::size_t rows, std::size_t cols) {
    CMatrix m(rows, cols);
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos <= f.value.size()) {
        std::size_t semi = f.value.find(';', pos);
        if (semi == std::string::npos) {
            semi = f.value.size();
        }
        const std::string_view entry(f.value.data() + pos, semi - pos);
        const std::size_t comma = entry.find(',');
        if (comma == std::string_view::npos) {
            throw ParseError(line.number, f.column, "field '" + f.key + "': entry '" + std::string(entry) +
                                                        "' is not a re,im pair");
        }
        if (count >= rows * cols) {
            throw ParseError(line.number, f.column, "field '" + f.key + "': too many entries");
        }
        const double re = parse_double(line, f, entry.substr(0, comma));
        const double im = parse_double(line, f, entry.substr(comma + 1));
        m(count / cols, count % cols) = cplx(re, im);
        ++count;
        pos = semi + 1;
    }
    if (count != rows * cols) {
        throw ParseError(line.number, f.column, "field '" + f.key + "': expected " + std::to_string(rows * cols) +
                                                    " entries, got " + std::to_string(count));
    }
    return m;
}

inline void expect_header(const Line &line, std::string_view magic) {
    if (line.head != magic) {
        throw ParseError(line.number, line.head_column == 0 ? 1 : line.head_column,
                         "expected header '" + std::string(magic) + "'");
    }
}

}  // namespace text

inline std::string serialize(const ProgramDescription &d) {
    validate(d);
    std::string out = "QVN1 name=" + d.name + " n=" + std::to_string(d.n) + "\n";
    for (const auto &g : d.gates) {
        out += "t=" + std::to_string(g.slot) + " g=" + std::string(gate_tag_name(g.tag)) + " q=";
        for (std::size_t i = 0; i < g.targets.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            out += std::to_string(g.targets[i]);
        }
        if (g.tag == GateTag::Custom) {
            out += " rows=" + std::to_string(g.matrix.rows()) + " data=" + text::format_matrix(g.matrix);
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline ProgramDescription parse_header(const text::Line &line) {
    text::expect_header(line, "QVN1");
    ProgramDescription d;
    d.name = line.require("name").value;
    if (!valid_token(d.name)) {
        throw ParseError(line.number, line.require("name").column, "invalid program name");
    }
    d.n = text::parse_count(line, line.require("n"));
    return d;
}

inline GateRecord parse_gate_line(const text::Line &line) {
    if (!line.head.empty()) {
        throw ParseError(line.number, line.head_column, "unexpected word '" + line.head + "'");
    }
    line.check_keys({"t", "g", "q", "rows", "data"});
    GateRecord g;
    g.slot = text::parse_count(line, line.require("t"));
    const auto &tag = line.require("g");
    const auto parsed = parse_gate_tag(tag.value);
    if (!parsed) {
        throw ParseError(line.number, tag.column, "unknown gate tag '" + tag.value + "'");
    }
    g.tag = *parsed;
    g.targets = text::parse_index_list(line, line.require("q"));
    if (g.tag == GateTag::Custom) {
        const std::size_t rows = text::parse_count(line, line.require("rows"));
        if (rows == 0 || rows > 4096) {
            throw ParseError(line.number, line.require("rows").column, "custom gate size out of range");
        }
        g.matrix = text::parse_matrix(line, line.require("data"), rows, rows);
    } else if (line.find("rows") || line.find("data")) {
        throw ParseError(line.number, 0, "only custom gates take rows/data");
    }
    return g;
}

}  // namespace detail

inline ProgramDescription deserialize(std::string_view doc) {
    const auto lines = text::tokenize(doc);
    if (lines.empty()) {
        throw ParseError(1, 1, "empty document");
    }
    ProgramDescription d = detail::parse_header(lines.front());
    lines.front().check_keys({"name", "n"});
    std::size_t line_no = lines.front().number;
    try {
        validate(d);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            line_no = lines[i].number;
            d.gates.push_back(detail::parse_gate_line(lines[i]));
            validate(d);
        }
    } catch (const ValidationError &e) {
        throw ParseError(line_no, 0, e.what());
    }
    return d;
}

}  // namespace qvn
