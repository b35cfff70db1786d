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

// qvn: batch front end. Every command writes one JSON document with a
// deterministic "canonical" part and a "meta" part (timing, version).
//
// Exit codes: 0 ok, 1 library error, 2 input file missing or unreadable,
// 3 malformed input, 64 bad command line. Errors go to stderr as a single
// "E_CODE: message" line.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qvn/control.hpp"
#include "qvn/memory.hpp"
#include "qvn/qec.hpp"
#include "qvn/topo_text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char *kVersion = "0.1.0";

struct IoError : qvn::Error {
    explicit IoError(const std::string &what) : qvn::Error("E_IO", what) {
    }
};

struct RunConfig {
    std::vector<std::string> inputs;
    std::optional<std::size_t> shots;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    double tolerance = 1e-9;
    std::string out;
    std::string strategy = "all";
    std::size_t repeats = 100;
    bool records = true;
};

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::ostringstream s;
    s << in.rdbuf();
    if (in.bad()) {
        throw IoError("cannot read '" + path + "'");
    }
    return s.str();
}

// Parse errors get the file name in front.
template <typename F>
auto parse_file(const std::string &path, F &&parse) {
    const std::string text = read_file(path);
    try {
        return parse(text);
    } catch (const qvn::ParseError &e) {
        throw qvn::Error(e.code(), path + ": " + e.what());
    }
}

json cplx_json(qvn::cplx c) {
    return json::array({c.real(), c.imag()});
}

json matrix_json(const qvn::CMatrix &m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(cplx_json(m(i, j)));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json real_matrix_json(const qvn::RMatrix &m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json branch_json(const qvn::BranchStats &b) {
    return {{"count", b.count}, {"mean", b.mean}, {"variance", b.variance}};
}

void emit(const RunConfig &cfg, json canonical, std::chrono::steady_clock::time_point start) {
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json doc;
    doc["canonical"] = std::move(canonical);
    doc["meta"] = {{"version", kVersion}, {"timestamp", stamp}, {"elapsed_ms", elapsed}, {"threads", cfg.threads}};
    const std::string text = doc.dump(2) + "\n";
    if (cfg.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(cfg.out, std::ios::binary);
    if (!f || !(f << text)) {
        throw IoError("cannot write '" + cfg.out + "'");
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

json cmd_run(const RunConfig &cfg) {
    const std::string &path = cfg.inputs.at(0);
    qvn::ScheduleDocument doc = parse_file(path, [](const std::string &t) { return qvn::parse_schedule(t); });
    if (cfg.shots) {
        doc.schedule.shots = *cfg.shots;
    }
    if (cfg.seed) {
        doc.schedule.seed = *cfg.seed;
    }
    if (doc.schedule.shots == 0) {
        throw qvn::ArgumentError("--shots must be at least 1");
    }
    const fs::path base = fs::path(path).parent_path();
    qvn::MemoryUnit mem;
    for (const auto &s : doc.stores) {
        const std::string file = (base / s.file).string();
        const qvn::ProgramDescription desc =
            parse_file(file, [](const std::string &t) { return qvn::deserialize(t); });
        mem.store(desc, s.copies, s.kind, s.address);
    }
    const qvn::ExecutionResult r = qvn::execute(mem, doc.schedule);
    mem.verify(cfg.tolerance);

    json c;
    c["command"] = "run";
    c["schedule"] = path;
    c["shots"] = doc.schedule.shots;
    c["seed"] = doc.schedule.seed;
    json instr = json::array();
    {
        std::istringstream lines(qvn::format_schedule(doc.schedule));
        std::string line;
        std::getline(lines, line);  // header
        while (std::getline(lines, line)) {
            instr.push_back(line);
        }
    }
    c["instructions"] = std::move(instr);
    json est = json::array();
    for (const auto &e : r.estimates) {
        json j;
        j["instruction"] = e.instruction;
        j["target"] = e.target;
        j["observable"] = e.observable;
        j["injected"] = e.injected;
        j["estimate"] = e.estimate.value;
        j["standard_error"] = e.estimate.standard_error;
        j["shots"] = e.estimate.shots;
        if (e.injected) {
            j["p1_exact"] = e.estimate.p1_exact;
            j["trace_of_O"] = e.estimate.trace_of_O;
            j["branches"] = {{"P1", branch_json(e.estimate.p1)}, {"P0", branch_json(e.estimate.p0)}};
        } else {
            j["branches"] = {{"none", branch_json(e.estimate.p0)}};
        }
        est.push_back(std::move(j));
    }
    c["estimates"] = std::move(est);
    if (cfg.records) {
        json recs = json::array();
        for (const auto &rec : r.records) {
            json j;
            j["shot"] = rec.shot;
            j["bell_outcomes"] = rec.bell_outcomes;
            j["injection_branch"] =
                rec.injection_branch ? json(qvn::branch_name(*rec.injection_branch)) : json(nullptr);
            j["tail_bits"] = rec.tail_bits;
            j["value"] = rec.sampled_observable_value ? json(*rec.sampled_observable_value) : json(nullptr);
            recs.push_back(std::move(j));
        }
        c["records"] = std::move(recs);
    }
    json slots = json::array();
    for (auto a : mem.addresses()) {
        const auto &s = mem.slot(a);
        slots.push_back({{"address", a},
                         {"kind", qvn::slot_kind_name(s.kind)},
                         {"copies", s.copies.size()},
                         {"restorable", s.description.has_value()}});
    }
    json totals = json::object();
    for (auto op : {qvn::AuditOp::Store, qvn::AuditOp::Capture, qvn::AuditOp::Deposit, qvn::AuditOp::Fetch,
                    qvn::AuditOp::Restore}) {
        std::size_t n = 0;
        for (const auto &rec : mem.audit_log()) {
            n += rec.op == op ? rec.count : 0;
        }
        totals[qvn::audit_op_name(op)] = n;
    }
    c["memory"] = {{"slots", std::move(slots)}, {"copies_moved", std::move(totals)}};
    return c;
}

// ---------------------------------------------------------------------------
// compose
// ---------------------------------------------------------------------------

json cmd_compose(const RunConfig &cfg) {
    if (cfg.inputs.size() != 2) {
        throw qvn::ArgumentError("compose needs exactly two program files");
    }
    const auto d1 = parse_file(cfg.inputs[0], [](const std::string &t) { return qvn::deserialize(t); });
    const auto d2 = parse_file(cfg.inputs[1], [](const std::string &t) { return qvn::deserialize(t); });
    const qvn::StoredProgram p1 = qvn::synthesize(d1);
    const qvn::StoredProgram p2 = qvn::synthesize(d2);
    if (p1.d() != p2.d()) {
        throw qvn::DimensionError("compose: programs act on dimensions " + std::to_string(p1.d()) + " and " +
                                  std::to_string(p2.d()));
    }
    const qvn::CMatrix product =
        qvn::synthesize_unitary(d2).matrix() * qvn::synthesize_unitary(d1).matrix();
    const qvn::CVector want = qvn::vec(product);

    std::vector<qvn::ByproductStrategy> strategies;
    if (cfg.strategy == "all") {
        strategies = {qvn::ByproductStrategy::RepeatUntilSuccess, qvn::ByproductStrategy::CorrectionTable,
                      qvn::ByproductStrategy::SymmetricPair};
    } else if (const auto s = qvn::parse_strategy(cfg.strategy)) {
        strategies = {*s};
    } else {
        throw qvn::ArgumentError("unknown strategy '" + cfg.strategy + "'; use rus, table, symmetric or all");
    }
    if (cfg.repeats == 0) {
        throw qvn::ArgumentError("--repeats must be at least 1");
    }
    const std::uint64_t seed = cfg.seed.value_or(0);

    json c;
    c["command"] = "compose";
    c["first"] = cfg.inputs[0];
    c["second"] = cfg.inputs[1];
    c["d"] = p1.d();
    c["seed"] = seed;
    c["repeats"] = cfg.repeats;
    json out = json::array();
    for (std::size_t si = 0; si < strategies.size(); ++si) {
        const auto st = strategies[si];
        std::vector<double> fid(cfg.repeats);
        std::vector<std::size_t> trials(cfg.repeats);
        std::vector<std::string> failure(cfg.repeats);
        // Repeat r always draws from stream (seed, si * repeats + r).
        auto work = [&](std::size_t lo, std::size_t step) {
            for (std::size_t r = lo; r < cfg.repeats; r += step) {
                qvn::RngStream rng(seed, si * cfg.repeats + r);
                try {
                    const auto res = qvn::compose(p1, p2, st, rng);
                    fid[r] = qvn::program_fidelity(res.program.vector(), want);
                    trials[r] = res.shots_used;
                } catch (const qvn::Error &e) {
                    failure[r] = e.code() + ": " + e.what();
                }
            }
        };
        const unsigned t = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.repeats)));
        std::vector<std::thread> pool;
        for (unsigned k = 1; k < t; ++k) {
            pool.emplace_back(work, k, t);
        }
        work(0, t);
        for (auto &th : pool) {
            th.join();
        }
        for (const auto &f : failure) {
            if (!f.empty()) {
                throw qvn::ConfigurationError("compose (" + std::string(qvn::strategy_name(st)) + "): " + f);
            }
        }
        double fmin = 1.0;
        double tsum = 0;
        std::size_t tmin = trials[0];
        std::size_t tmax = trials[0];
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
            fmin = std::min(fmin, fid[r]);
            tsum += static_cast<double>(trials[r]);
            tmin = std::min(tmin, trials[r]);
            tmax = std::max(tmax, trials[r]);
        }
        const double tmean = tsum / static_cast<double>(cfg.repeats);
        double tvar = 0;
        for (auto x : trials) {
            tvar += (static_cast<double>(x) - tmean) * (static_cast<double>(x) - tmean);
        }
        tvar = cfg.repeats > 1 ? tvar / static_cast<double>(cfg.repeats - 1) : 0.0;
        json j;
        j["strategy"] = qvn::strategy_name(st);
        j["min_fidelity"] = fmin;
        j["first_fidelity"] = fid[0];
        j["trials"] = {{"mean", tmean},
                       {"standard_error", std::sqrt(tvar / static_cast<double>(cfg.repeats))},
                       {"min", tmin},
                       {"max", tmax}};
        if (st == qvn::ByproductStrategy::RepeatUntilSuccess) {
            j["trials"]["expected_mean"] = static_cast<double>(p1.d() * p1.d());
        }
        out.push_back(std::move(j));
    }
    c["strategies"] = std::move(out);
    return c;
}

// ---------------------------------------------------------------------------
// qec-check
// ---------------------------------------------------------------------------

json cmd_qec_check(const RunConfig &cfg) {
    const std::string &path = cfg.inputs.at(0);
    const qvn::CodeDocument doc =
        parse_file(path, [](const std::string &t) { return qvn::parse_code_document(t); });
    const auto &code = doc.code;
    if (doc.errors.size() == 0) {
        throw qvn::ValidationError(path + ": no error lines");
    }
    json c;
    c["command"] = "qec-check";
    c["input"] = path;
    c["code"] = {{"name", code.name()}, {"n", code.n()}, {"k", code.k()}, {"distance", code.distance()}};
    c["errors"] = doc.errors.labels;
    c["tolerance"] = cfg.tolerance;

    const qvn::KLResult kl = qvn::check_kl(code, doc.errors, cfg.tolerance);
    c["knill_laflamme"] = {{"satisfied", kl.satisfied},
                           {"residual", kl.residual},
                           {"c", matrix_json(kl.c)},
                           {"residuals", real_matrix_json(kl.residuals)}};
    const qvn::DetectionResult det = qvn::check_detection(code, doc.errors, cfg.tolerance);
    json e = json::array();
    for (auto x : det.e) {
        e.push_back(cplx_json(x));
    }
    c["detection"] = {{"satisfied", det.satisfied}, {"residual", det.residual}, {"e", std::move(e)},
                      {"residuals", det.residuals}};

    if (!kl.satisfied) {
        c["recovery"] = nullptr;
        return c;
    }
    const qvn::Recovery rec = qvn::build_recovery(code, doc.errors, cfg.tolerance);
    json r = {{"rank", rec.rank}, {"completed", rec.completed}};
    // Worst trace distance after noise then recovery, over logical basis
    // states and their pairwise superpositions.
    std::optional<qvn::KrausChannel> noise;
    try {
        noise = qvn::noise_channel(doc.errors, {}, cfg.tolerance);
    } catch (const qvn::NotCptpError &) {
    }
    if (noise) {
        const std::size_t kd = code.logical_dim();
        std::vector<qvn::CVector> inputs;
        for (std::size_t i = 0; i < kd; ++i) {
            inputs.push_back(qvn::CVector::Unit(static_cast<Eigen::Index>(kd), static_cast<Eigen::Index>(i)));
            for (std::size_t j = i + 1; j < kd; ++j) {
                qvn::CVector v = qvn::CVector::Zero(static_cast<Eigen::Index>(kd));
                v(static_cast<Eigen::Index>(i)) = 1.0 / std::sqrt(2.0);
                v(static_cast<Eigen::Index>(j)) = 1.0 / std::sqrt(2.0);
                inputs.push_back(v);
                v(static_cast<Eigen::Index>(j)) = qvn::cplx(0, 1.0 / std::sqrt(2.0));
                inputs.push_back(v);
            }
        }
        double worst = 0;
        for (const auto &a : inputs) {
            const qvn::CVector psi = code.isometry() * a;
            const qvn::CMatrix rho = psi * psi.adjoint();
            qvn::CMatrix noisy = qvn::CMatrix::Zero(rho.rows(), rho.cols());
            for (const auto &k : noise->kraus_ops()) {
                noisy += k * rho * k.adjoint();
            }
            qvn::CMatrix fixed = qvn::CMatrix::Zero(rho.rows(), rho.cols());
            for (const auto &k : rec.kraus) {
                fixed += k * noisy * k.adjoint();
            }
            worst = std::max(worst, qvn::trace_distance(fixed, rho));
        }
        r["worst_trace_distance"] = worst;
    } else {
        r["worst_trace_distance"] = nullptr;
    }
    c["recovery"] = std::move(r);
    return c;
}

// ---------------------------------------------------------------------------
// topo-eval
// ---------------------------------------------------------------------------

json cmd_topo_eval(const RunConfig &cfg) {
    const std::string &path = cfg.inputs.at(0);
    const qvn::TopoDiagram g = parse_file(path, [](const std::string &t) { return qvn::parse_topo_diagram(t); });
    const qvn::TopoValue v = qvn::eval_topological(g);
    json c;
    c["command"] = "topo-eval";
    c["input"] = path;
    c["d"] = g.d;
    c["vertices"] = g.vertices.size();
    c["segments"] = g.segments.size();
    c["open_endpoints"] = g.open_endpoints.size();
    c["amplitude"] = cplx_json(v.amplitude);
    c["abs"] = std::abs(v.amplitude);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.15f%+.15fi", v.amplitude.real(), v.amplitude.imag());
    c["amplitude_text"] = buf;
    c["vanished"] = v.vanished;
    if (v.state) {
        json amps = json::array();
        for (Eigen::Index i = 0; i < v.state->amplitudes().size(); ++i) {
            amps.push_back(cplx_json(v.state->amplitudes()(i)));
        }
        c["open_state"] = std::move(amps);
    }
    return c;
}

int report(const std::string &code, const std::string &msg, int status) {
    std::string line = code + ": " + msg;
    for (char &ch : line) {
        if (ch == '\n' || ch == '\r') {
            ch = ' ';
        }
    }
    std::cerr << line << "\n";
    return status;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"qvn: stored quantum programs, composition, tailed readout, codes and diagrams"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    RunConfig cfg;
    std::size_t shots = 0;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--threads", cfg.threads, "worker threads (results do not depend on it)")
            ->check(CLI::Range(1u, 256u));
        sub->add_option("--tolerance", cfg.tolerance, "numerical tolerance for checks")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", cfg.out, "write the JSON report here instead of stdout");
    };
    auto *run = app.add_subcommand("run", "execute a schedule file");
    run->add_option("schedule", cfg.inputs, "schedule (QVNS1)")->required()->expected(1);
    auto *run_shots = run->add_option("--shots", shots, "override the schedule's shot count");
    auto *run_seed = run->add_option("--seed", seed, "override the schedule's seed");
    run->add_flag("!--no-records", cfg.records, "omit per-shot records");
    common(run);

    auto *comp = app.add_subcommand("compose", "compose two program descriptions and check the result");
    comp->add_option("programs", cfg.inputs, "first then second program (QVN1)")->required()->expected(2);
    comp->add_option("--strategy", cfg.strategy, "rus, table, symmetric or all");
    comp->add_option("--repeats", cfg.repeats, "runs per strategy");
    auto *comp_seed = comp->add_option("--seed", seed, "base seed (default 0)");
    common(comp);

    auto *qec = app.add_subcommand("qec-check", "Knill-Laflamme and detection checks for a code file");
    qec->add_option("code", cfg.inputs, "code file (QVN1 with code/error lines)")->required()->expected(1);
    common(qec);

    auto *topo = app.add_subcommand("topo-eval", "evaluate a diagram file");
    topo->add_option("diagram", cfg.inputs, "diagram (TOPO1)")->required()->expected(1);
    common(topo);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        return report("E_USAGE", e.what(), 64);
    }
    if (run_shots->count() > 0) {
        cfg.shots = shots;
    }
    if (run_seed->count() > 0 || comp_seed->count() > 0) {
        cfg.seed = seed;
    }

    const auto start = std::chrono::steady_clock::now();
    try {
        json c;
        if (run->parsed()) {
            c = cmd_run(cfg);
        } else if (comp->parsed()) {
            c = cmd_compose(cfg);
        } else if (qec->parsed()) {
            c = cmd_qec_check(cfg);
        } else {
            c = cmd_topo_eval(cfg);
        }
        emit(cfg, std::move(c), start);
    } catch (const IoError &e) {
        return report(e.code(), e.what(), 2);
    } catch (const qvn::Error &e) {
        return report(e.code(), e.what(), e.code() == "E_PARSE" ? 3 : 1);
    } catch (const std::exception &e) {
        return report("E_INTERNAL", e.what(), 1);
    }
    return 0;
}
