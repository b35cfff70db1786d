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

// Drives the built qvn binary through the shell.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string sample(const char *name) {
    return std::string(QVN_SAMPLES_DIR) + "/" + name;
}

Outcome qvn(const std::string &args) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / ("qvn_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
    const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd =
        std::string(QVN_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    Outcome o;
    o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

json canonical(const Outcome &o) {
    return json::parse(o.out).at("canonical");
}

void expect_error_line(const Outcome &o, int status, const std::string &code) {
    EXPECT_EQ(o.status, status) << o.err;
    EXPECT_TRUE(o.out.empty());
    ASSERT_FALSE(o.err.empty());
    EXPECT_EQ(o.err.find('\n'), o.err.size() - 1) << "more than one line: " << o.err;
    EXPECT_TRUE(std::regex_search(o.err, std::regex("^E_[A-Z_]+: "))) << o.err;
    EXPECT_EQ(o.err.rfind(code + ": ", 0), 0u) << o.err;
}

}  // namespace

TEST(Cli, RunThDemoEstimatesZero) {
    const Outcome o = qvn("run " + sample("th_demo.qvns"));
    ASSERT_EQ(o.status, 0) << o.err;
    const json c = canonical(o);
    ASSERT_EQ(c["estimates"].size(), 1u);
    const double v = c["estimates"][0]["estimate"];
    const double se = c["estimates"][0]["standard_error"];
    EXPECT_GT(se, 0.0);
    EXPECT_LE(std::abs(v), 3 * se);
    EXPECT_EQ(c["records"].size(), 4000u);
    EXPECT_EQ(c["memory"]["copies_moved"]["restore"], 8000u);
    EXPECT_TRUE(json::parse(o.out)["meta"].contains("timestamp"));
}

TEST(Cli, RunIsDeterministic) {
    const std::string args = "run " + sample("th_demo.qvns") + " --shots 300 --seed 12";
    const Outcome a = qvn(args);
    const Outcome b = qvn(args + " --threads 3");
    ASSERT_EQ(a.status, 0);
    ASSERT_EQ(b.status, 0);
    EXPECT_EQ(canonical(a).dump(), canonical(b).dump());
    const Outcome other = qvn("run " + sample("th_demo.qvns") + " --shots 300 --seed 13");
    EXPECT_NE(canonical(a)["records"].dump(), canonical(other)["records"].dump());
}

TEST(Cli, ComposeFidelityAndTrials) {
    const Outcome o = qvn("compose " + sample("h.qvn") + " " + sample("t.qvn") + " --repeats 2000 --threads 4");
    ASSERT_EQ(o.status, 0) << o.err;
    const json c = canonical(o);
    ASSERT_EQ(c["strategies"].size(), 3u);
    for (const auto &s : c["strategies"]) {
        EXPECT_GE(s["min_fidelity"].get<double>(), 1 - 1e-10) << s["strategy"];
    }
    const auto &rus = c["strategies"][0];
    EXPECT_EQ(rus["strategy"], "rus");
    const double mean = rus["trials"]["mean"];
    const double se = rus["trials"]["standard_error"];
    EXPECT_LE(std::abs(mean - 4.0), 3 * se);
    EXPECT_EQ(c["strategies"][1]["trials"]["max"], 1u);

    const Outcome again = qvn("compose " + sample("h.qvn") + " " + sample("t.qvn") + " --repeats 2000");
    EXPECT_EQ(canonical(o).dump(), canonical(again).dump());
}

TEST(Cli, ComposeIdentity) {
    const Outcome o = qvn("compose " + sample("id.qvn") + " " + sample("id.qvn") + " --repeats 5 --strategy table");
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_NEAR(canonical(o)["strategies"][0]["min_fidelity"].get<double>(), 1.0, 1e-15);
}

TEST(Cli, QecCheck) {
    const Outcome ok = qvn("qec-check " + sample("rep3.qvn"));
    ASSERT_EQ(ok.status, 0) << ok.err;
    const json c = canonical(ok);
    EXPECT_TRUE(c["knill_laflamme"]["satisfied"].get<bool>());
    EXPECT_TRUE(c["detection"]["satisfied"].get<bool>());
    EXPECT_LE(c["recovery"]["worst_trace_distance"].get<double>(), 1e-10);
    EXPECT_EQ(c["knill_laflamme"]["c"].size(), 4u);

    const Outcome bad = qvn("qec-check " + sample("rep3_phase.qvn"));
    ASSERT_EQ(bad.status, 0) << bad.err;
    const json d = canonical(bad);
    EXPECT_FALSE(d["knill_laflamme"]["satisfied"].get<bool>());
    EXPECT_GE(d["knill_laflamme"]["residual"].get<double>(), 0.1);
    EXPECT_TRUE(d["recovery"].is_null());
}

TEST(Cli, TopoCircleT) {
    const Outcome o = qvn("topo-eval " + sample("circle_t.topo"));
    ASSERT_EQ(o.status, 0) << o.err;
    const json c = canonical(o);
    const std::complex<double> want = (1.0 + std::polar(1.0, std::acos(-1.0) / 4)) / 2.0;
    EXPECT_LE(std::abs(std::complex<double>(c["amplitude"][0], c["amplitude"][1]) - want), 1e-12);
    // At least 12 digits after the point in the printed value.
    const std::string text = c["amplitude_text"];
    EXPECT_TRUE(std::regex_search(text, std::regex("^0\\.8535533905932[0-9]*\\+0\\.3535533905932[0-9]*i$"))) << text;
}

TEST(Cli, TopoMalformedNamesTheSegment) {
    const Outcome o = qvn("topo-eval " + sample("broken.topo"));
    expect_error_line(o, 3, "E_PARSE");
    EXPECT_NE(o.err.find("segment a=0.h0 b=1.t0"), std::string::npos) << o.err;
    EXPECT_NE(o.err.find("line 3"), std::string::npos) << o.err;
}

TEST(Cli, MissingFileExitsTwo) {
    expect_error_line(qvn("run /nonexistent/schedule.qvns"), 2, "E_IO");
    expect_error_line(qvn("compose /nonexistent/a.qvn " + sample("t.qvn")), 2, "E_IO");
    expect_error_line(qvn("qec-check /nonexistent/code.qvn"), 2, "E_IO");
    expect_error_line(qvn("topo-eval /nonexistent/d.topo"), 2, "E_IO");
}

TEST(Cli, OtherErrorPaths) {
    expect_error_line(qvn(""), 64, "E_USAGE");
    expect_error_line(qvn("run"), 64, "E_USAGE");
    expect_error_line(qvn("run " + sample("th_demo.qvns") + " --threads 0"), 64, "E_USAGE");
    expect_error_line(qvn("compose " + sample("h.qvn") + " " + sample("t.qvn") + " --strategy magic"), 1,
                      "E_ARGUMENT");
    expect_error_line(qvn("compose " + sample("h.qvn") + " " + sample("cz.qvn")), 1, "E_DIMENSION");
    // A description handed to the wrong parser.
    expect_error_line(qvn("run " + sample("h.qvn")), 3, "E_PARSE");
    expect_error_line(qvn("topo-eval " + sample("rep3.qvn")), 3, "E_PARSE");
}

TEST(Cli, OutFlagWritesFile) {
    const fs::path dst = fs::temp_directory_path() / ("qvn_cli_out_" + std::to_string(::getpid()) + ".json");
    const Outcome o = qvn("topo-eval " + sample("circle_t.topo") + " --out " + dst.string());
    ASSERT_EQ(o.status, 0) << o.err;
    EXPECT_TRUE(o.out.empty());
    const json doc = json::parse(slurp(dst));
    EXPECT_EQ(doc["canonical"]["command"], "topo-eval");
    fs::remove(dst);
}
