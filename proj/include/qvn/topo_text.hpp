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

// Text form of a TopoDiagram:
//
//   TOPO1 d=<wire dim> [flow=postselected|causal]
//   vertex id=<i> wires=<w> g=<tag>          (tags as in QVN1; d = 2 only)
//   vertex id=<i> wires=<w> g=custom data=<re,im;...>
//   segment a=<v>.h<i> b=<v>.t<j>
//   open e=<v>.h<i>
//
// Vertex ids run 0, 1, ... in file order.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "qvn/description.hpp"
#include "qvn/tailed.hpp"

namespace qvn {

namespace detail {

inline TopoEndpoint parse_topo_endpoint(const text::Line &line, const text::Field &f) {
    const std::string &s = f.value;
    const std::size_t dot = s.find('.');
    auto fail = [&] {
        throw ParseError(line.number, f.column, "endpoint '" + s + "' is not of the form <vertex>.h<i> or <vertex>.t<i>");
    };
    if (dot == std::string::npos || dot == 0 || dot + 2 > s.size()) {
        fail();
    }
    const char kind = s[dot + 1];
    if (kind != 'h' && kind != 't') {
        fail();
    }
    TopoEndpoint e;
    try {
        e.vertex = text::parse_count(line, text::Field{f.key, s.substr(0, dot), f.column});
        e.index = text::parse_count(line, text::Field{f.key, s.substr(dot + 2), f.column});
    } catch (const ParseError &) {
        fail();
    }
    e.kind = kind == 'h' ? WireKind::Head : WireKind::Tail;
    return e;
}

}  // namespace detail

inline TopoDiagram parse_topo_diagram(std::string_view doc) {
    const auto lines = text::tokenize(doc);
    if (lines.empty()) {
        throw ParseError(1, 1, "empty document");
    }
    const auto &h = lines.front();
    text::expect_header(h, "TOPO1");
    h.check_keys({"d", "flow"});
    TopoDiagram g;
    g.d = text::parse_count(h, h.require("d"));
    if (g.d < 2 || g.d > 16) {
        throw ParseError(h.number, h.require("d").column, "d must be between 2 and 16");
    }
    if (const auto *f = h.find("flow")) {
        if (f->value == "causal") {
            g.postselected = false;
        } else if (f->value != "postselected") {
            throw ParseError(h.number, f->column, "flow must be postselected or causal");
        }
    }
    std::vector<TopoEndpoint> used;
    auto claim = [&](const text::Line &l, const text::Field &f, const std::string &where) {
        const TopoEndpoint e = detail::parse_topo_endpoint(l, f);
        if (e.vertex >= g.vertices.size()) {
            throw ParseError(l.number, f.column, where + ": vertex " + std::to_string(e.vertex) + " is not defined");
        }
        if (e.index >= g.vertices[e.vertex].wires) {
            throw ParseError(l.number, f.column, where + ": vertex " + std::to_string(e.vertex) + " has " +
                                                     std::to_string(g.vertices[e.vertex].wires) + " wires");
        }
        if (std::find(used.begin(), used.end(), e) != used.end()) {
            throw ParseError(l.number, f.column, where + ": endpoint " + f.value + " is already used");
        }
        used.push_back(e);
        return e;
    };
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto &l = lines[i];
        if (l.head == "vertex") {
            l.check_keys({"id", "wires", "g", "data"});
            const auto &idf = l.require("id");
            if (text::parse_count(l, idf) != g.vertices.size()) {
                throw ParseError(l.number, idf.column, "vertex ids must run 0, 1, ... in order");
            }
            const std::size_t w = text::parse_count(l, l.require("wires"));
            std::size_t dim = 1;
            for (std::size_t k = 0; k < w; ++k) {
                dim *= g.d;
                if (dim > 4096) {
                    throw ParseError(l.number, l.require("wires").column, "vertex too large");
                }
            }
            if (w == 0) {
                throw ParseError(l.number, l.require("wires").column, "a vertex needs at least one wire");
            }
            const auto &gf = l.require("g");
            const auto tag = parse_gate_tag(gf.value);
            if (!tag) {
                throw ParseError(l.number, gf.column, "unknown gate tag '" + gf.value + "'");
            }
            CMatrix m;
            if (*tag == GateTag::Custom) {
                m = text::parse_matrix(l, l.require("data"), dim, dim);
            } else {
                if (l.find("data")) {
                    throw ParseError(l.number, l.find("data")->column, "only custom gates take data");
                }
                if (g.d != 2 || gate_arity(*tag) != w) {
                    throw ParseError(l.number, gf.column, "gate " + gf.value + " does not act on " + std::to_string(w) +
                                                              " wires of dimension " + std::to_string(g.d));
                }
                m = gate_matrix(GateRecord{*tag, {}, 0, {}});
            }
            try {
                g.add_vertex(UnitaryOp(m, 1e-9), w);
            } catch (const ValidationError &e) {
                throw ParseError(l.number, gf.column, std::string("vertex gate: ") + e.what());
            }
        } else if (l.head == "segment") {
            l.check_keys({"a", "b"});
            const std::string where = "segment a=" + l.require("a").value + " b=" + l.require("b").value;
            const TopoEndpoint a = claim(l, l.require("a"), where);
            const TopoEndpoint b = claim(l, l.require("b"), where);
            g.add_segment(a, b);
        } else if (l.head == "open") {
            l.check_keys({"e"});
            g.open_endpoints.push_back(claim(l, l.require("e"), "open e=" + l.require("e").value));
        } else {
            throw ParseError(l.number, l.head_column == 0 ? 1 : l.head_column,
                             l.head.empty() ? "missing line kind" : "unknown line kind '" + l.head + "'");
        }
    }
    try {
        g.validate();
    } catch (const ValidationError &e) {
        throw ParseError(lines.back().number, 0, e.what());
    }
    return g;
}

}  // namespace qvn
