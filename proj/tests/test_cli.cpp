#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sobdde/commands.hpp"

using namespace sobdde;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("sobdde_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string file(const std::string& name, const std::string& content) const {
        const fs::path p = dir_ / name;
        std::ofstream(p) << content;
        return p.string();
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Outcome run(const std::string& args, const std::string& env = "") const {
        const std::string out = path("stdout.txt"), err = path("stderr.txt");
        const std::string cmd = env + " '" + std::string(SOBDDE_CLI_PATH) + "' " + args + " > '" + out + "' 2> '" + err + "'";
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    fs::path dir_;
};

const char* kPureDelay = R"({
  "rhs": {"builtin": "pure_delay", "params": {"a": 1.0}},
  "dim": 1, "R": 1.0, "r": 1.0,
  "phi": {"kind": "const", "params": {"value": 1.0}},
  "p": 2, "h": 1e-3, "t_end": 2.0
})";

const char* kPureDelayWide = R"({
  "rhs": {"builtin": "pure_delay", "params": {"a": 1.0}},
  "dim": 1, "R": 1.5, "r": 1.0,
  "phi": {"kind": "const", "params": {"value": 1.0}},
  "p": 2, "h": 1e-3, "t_end": 2.0
})";

const char* kZeroField = R"({
  "rhs": {"expr": ["0", "0"]},
  "dim": 2, "R": 1.0, "r": 0.5,
  "phi": {"kind": "linear", "params": {"offset": [1.0, -2.0], "slope": [0.5, 3.0]}},
  "p": 2, "h": 1e-2, "t_end": 1.5
})";

// x' = x^2, x(0) = 2 blows up at t = 1/2.
const char* kBlowup = R"({
  "rhs": {"expr": ["x1^2"]},
  "dim": 1, "R": 1.0, "r": 0.5,
  "phi": {"kind": "const", "params": {"value": 2.0}},
  "p": 1, "h": 1e-3, "t_end": 2.0
})";

const char* kMackeyGlass = R"({
  "rhs": {"builtin": "mackey_glass"},
  "dim": 1, "R": 1.0, "r": 0.9,
  "phi": {"kind": "kink", "params": {"at": -0.5, "scale": 0.4, "offset": 0.8}},
  "p": 1, "h": 1e-3, "t_end": 1.5
})";

std::vector<std::vector<std::string>> read_table(const std::string& p) {
    std::ifstream is(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        if (!line.empty() && line.back() == ',') row.emplace_back();
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST_F(CliTest, SolveZeroFieldIsConstantAfterZero) {
    const Outcome r = run("solve --spec " + file("zero.json", kZeroField) + " --out " + path("z"));
    ASSERT_EQ(r.code, 0) << r.err;
    const GridFunction x = read_csv(path("z.traj.csv"));
    EXPECT_DOUBLE_EQ(x.a(), -1.0);
    EXPECT_DOUBLE_EQ(x.b(), 1.5);
    for (std::size_t k = 100; k < x.nodes(); ++k) {
        EXPECT_EQ(x.value(k)[0], 1.0);
        EXPECT_EQ(x.value(k)[1], -2.0);
    }
    const auto diag = nlohmann::json::parse(slurp(path("z.diag.json")));
    EXPECT_FALSE(diag["escaped"].get<bool>());
    EXPECT_DOUBLE_EQ(diag["t_reached"].get<double>(), 1.5);
    EXPECT_FALSE(diag["windows"].empty());
}

TEST_F(CliTest, SolveBlowupExitsTwo) {
    const Outcome r = run("solve --spec " + file("b.json", kBlowup) + " --out " + path("b"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("escaped"), std::string::npos);
    const auto diag = nlohmann::json::parse(slurp(path("b.diag.json")));
    EXPECT_TRUE(diag["escaped"].get<bool>());
    EXPECT_GT(diag["t_reached"].get<double>(), 0.3);
    EXPECT_LT(diag["t_reached"].get<double>(), 0.5);
}

TEST_F(CliTest, MalformedJsonCitesPosition) {
    const Outcome r = run("solve --spec " + file("bad.json", "{\"dim\": 1,\n \"R\": }") + " --out " + path("x"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("malformed JSON at byte 18"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, InputErrorsNameTheField) {
    auto spec = nlohmann::json::parse(kPureDelay);
    auto check = [&](nlohmann::json j, const std::string& needle) {
        const Outcome r = run("solve --spec " + file("s.json", j.dump()) + " --out " + path("x"));
        EXPECT_EQ(r.code, 1) << needle;
        EXPECT_NE(r.err.find(needle), std::string::npos) << r.err;
    };
    auto j = spec;
    j.erase("h");
    check(j, "field 'h': missing");
    j = spec;
    j["r"] = 1.5;
    check(j, "field 'r'");
    j = spec;
    j["h"] = 0.3;
    check(j, "field 'R'");
    j = spec;
    j["phi"] = {{"kind", "bump"}};
    check(j, "field 'phi.kind'");
    j = spec;
    j["phi"]["params"]["value"] = {1.0, 2.0};
    check(j, "field 'phi.params.value'");
    j = spec;
    j["rhs"] = {{"expr", {"x1 + y2"}}};
    check(j, "field 'rhs.expr'");
    j = spec;
    j["solver"] = {{"contraction_target", 1.5}};
    check(j, "field 'solver'");
    j = spec;
    j["phi"] = to_json(GridFunction::constant(-2.0, 0.0, 10, {1.0}));
    check(j, "field 'phi': domain");
    j = spec;
    j["typo"] = 1;
    check(j, "field 'typo': unknown");
}

TEST_F(CliTest, UsageErrorsNeverCrash) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("bogus").code, 1);
    EXPECT_EQ(run("solve").code, 1);
    EXPECT_EQ(run("solve --spec " + path("missing.json")).code, 1);
    EXPECT_EQ(run("--help").code, 0);
    const std::string spec = file("p.json", kPureDelay);
    const std::string dir = file("d.json", R"({"xi": 1})");
    EXPECT_EQ(run("sens --spec " + spec + " --dir " + dir + " --eps 1e-2,abc").code, 1);
    EXPECT_EQ(run("sens --spec " + spec + " --dir " + file("d2.json", R"({"chi": "one"})")).code, 1);
    EXPECT_EQ(run("sweep --spec " + spec + " --r-min 0.5 --r-max 2 --out " + path("s")).code, 1);
}

TEST_F(CliTest, TrajectoryCsvRoundTripIsBitExact) {
    const std::string spec = file("mg.json", kMackeyGlass);
    ASSERT_EQ(run("solve --spec " + spec + " --out " + path("mg")).code, 0);
    const ProblemSpec ps = load_problem(spec);
    const SolveResult sol = solve(ps.phi, ps.r, ps.model, ps.cfg);
    const GridFunction back = read_csv(path("mg.traj.csv"));
    ASSERT_EQ(back.nodes(), sol.trajectory.nodes());
    EXPECT_TRUE(std::ranges::equal(back.values(), sol.trajectory.values()));
}

TEST_F(CliTest, SensDelayDirectionMatchesClosedForm) {
    const Outcome r = run("sens --spec " + file("p.json", kPureDelay) + " --dir " + file("d.json", R"({"chi": "zero", "xi": 1})") +
                      " --out " + path("s"));
    ASSERT_EQ(r.code, 0) << r.err;
    const GridFunction dx = read_csv(path("s.dx.csv"));
    double worst = 0.0;
    for (std::size_t k = 0; k < dx.nodes(); ++k) {
        const double t = dx.node(k);
        const double want = t > 1.0 ? -(t - 1.0) : 0.0;
        worst = std::max(worst, std::abs(dx.value(k)[0] - want));
    }
    EXPECT_LT(worst, 1e-12);
    EXPECT_FALSE(fs::exists(path("s.fd_table.csv")));
}

TEST_F(CliTest, SensZeroDirectionGivesZero) {
    const Outcome r =
        run("sens --spec " + file("m.json", kMackeyGlass) + " --dir " + file("d.json", R"({"chi": "zero", "xi": 0})") +
            " --out " + path("z"));
    ASSERT_EQ(r.code, 0) << r.err;
    const GridFunction dx = read_csv(path("z.dx.csv"));
    for (double v : dx.values()) EXPECT_EQ(v, 0.0);
}

TEST_F(CliTest, SensFdTableHasOneRowPerEps) {
    const Outcome r = run("sens --spec " + file("m.json", kMackeyGlass) + " --dir " +
                      file("d.json", R"({"chi": {"kind": "sine", "params": {"amp": 1, "freq": 2}}, "xi": 0.5})") +
                      " --out " + path("f") + " --fd --eps 1e-1,1e-2,1e-3");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_table(path("f.fd_table.csv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"eps", "err", "scheme"}));
    double prev = INFINITY;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double err = std::stod(rows[i][1]);
        EXPECT_LT(err, prev);
        EXPECT_EQ(rows[i][2], "central");
        prev = err;
    }
}

TEST_F(CliTest, SweepPureDelayConsistency) {
    const Outcome r = run("sweep --spec " + file("p.json", kPureDelayWide) + " --r-min 0.5 --r-max 1.5 --steps 11 --out " +
                      path("w") + " --threads 3");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find(" ok"), std::string::npos) << r.out;
    const auto rows = read_table(path("w.sweep.csv"));
    ASSERT_EQ(rows.size(), 12u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"r", "escaped", "t_reached", "x_1", "dxdr_1", "taylor_mismatch",
                                                 "secant_mismatch"}));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double rr = std::stod(rows[i][0]);
        // x(2; r) = 1 + 2 + (2 - r)^2 / 2 + (2 - 2r)_+^3 / 6 + (2 - 3r)_+^4 / 24
        const double want = 3.0 + 0.5 * (2 - rr) * (2 - rr) + std::pow(std::max(0.0, 2 - 2 * rr), 3) / 6.0 +
                            std::pow(std::max(0.0, 2 - 3 * rr), 4) / 24.0;
        EXPECT_NEAR(std::stod(rows[i][3]), want, 5e-6) << rr;
        if (i + 1 < rows.size()) {
            EXPECT_LE(std::stod(rows[i][6]), 1e-2);
        }
    }
    EXPECT_TRUE(rows.back()[6].empty());
}

TEST_F(CliTest, SweepIsDeterministicAcrossThreadCounts) {
    const std::string spec = file("m.json", kMackeyGlass);
    ASSERT_EQ(run("sweep --spec " + spec + " --r-min 0.2 --r-max 1 --steps 9 --threads 1 --out " + path("a")).code, 0);
    ASSERT_EQ(run("sweep --spec " + spec + " --r-min 0.2 --r-max 1 --steps 9 --out " + path("b"), "SOBDDE_THREADS=4").code,
              0);
    const std::string a = slurp(path("a.sweep.csv"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(path("b.sweep.csv")));
    EXPECT_EQ(run("sweep --spec " + spec + " --r-min 0.2 --r-max 1 --out " + path("c"), "SOBDDE_THREADS=zero").code, 1);
}

TEST_F(CliTest, SweepZeroFieldRowsIdentical) {
    ASSERT_EQ(run("sweep --spec " + file("z.json", kZeroField) + " --r-min 0 --r-max 1 --steps 5 --out " + path("z")).code, 0);
    const auto rows = read_table(path("z.sweep.csv"));
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][3], rows[1][3]);
        EXPECT_EQ(rows[i][4], rows[1][4]);
        EXPECT_EQ(std::stod(rows[i][5]), 0.0);
        EXPECT_EQ(std::stod(rows[i][6]), 0.0);
    }
}

TEST_F(CliTest, SweepSinglePointHasNoConsistencyCheck) {
    const Outcome r = run("sweep --spec " + file("p.json", kPureDelay) + " --r-min 0.7 --r-max 0.7 --steps 1 --out " + path("o"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("not checked"), std::string::npos);
    const auto rows = read_table(path("o.sweep.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(std::stod(rows[1][0]), 0.7);
}

TEST_F(CliTest, SweepReportsEscapedRows) {
    const Outcome r = run("sweep --spec " + file("b.json", kBlowup) + " --r-min 0 --r-max 1 --steps 3 --out " + path("e"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_table(path("e.sweep.csv"));
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][1], "1");
}

TEST_F(CliTest, CounterexampleJumpAtKink) {
    ASSERT_EQ(run("counterexample --out " + path("c")).code, 0);
    const auto rows = read_table(path("c.counterexample.csv"));
    ASSERT_EQ(rows.size(), 102u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"c", "value", "left_dq", "right_dq"}));
    const auto& at_kink = rows[51];
    EXPECT_EQ(std::stod(at_kink[0]), 0.5);
    EXPECT_NEAR(std::abs(std::stod(at_kink[2]) - std::stod(at_kink[3])), 2.0, 1e-6);
    const auto& smooth = rows[21];
    EXPECT_EQ(std::stod(smooth[0]), 0.2);
    EXPECT_NEAR(std::stod(smooth[2]), std::stod(smooth[3]), 1e-9);

    ASSERT_EQ(run("counterexample --t 0 --out " + path("t0")).code, 0);
    const auto zero = read_table(path("t0.counterexample.csv"));
    for (std::size_t i = 1; i < zero.size(); ++i) {
        EXPECT_EQ(std::stod(zero[i][2]), 0.0);
        EXPECT_EQ(std::stod(zero[i][3]), 0.0);
    }
}

TEST_F(CliTest, VerifyWritesJsonAndPasses) {
    const Outcome r = run("verify --seed 5 --json " + path("v.json"));
    EXPECT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(slurp(path("v.json")));
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["checks"].size(), verify_check_names().size());
    EXPECT_NE(r.out.find("PASS norm_equivalence"), std::string::npos);
}

TEST(CliGuard, MapsExceptionsToExitCodes) {
    std::ostringstream err;
    EXPECT_EQ(detail::guarded(err, [] () -> int { throw NoConvergence("stalled", 1.2, 4); }), 3);
    EXPECT_NE(err.str().find("window 4"), std::string::npos);
    EXPECT_EQ(detail::guarded(err, [] () -> int { throw InvalidArgument("x"); }), 1);
    EXPECT_EQ(detail::guarded(err, [] () -> int { throw GridMismatch("x"); }), 1);
    EXPECT_EQ(detail::guarded(err, [] () -> int { throw NonFinite("x"); }), 4);
    EXPECT_EQ(detail::guarded(err, [] () -> int { throw 7; }), 4);
    EXPECT_EQ(detail::guarded(err, [] { return 0; }), 0);
}

TEST(CliParse, EpsList) {
    EXPECT_EQ(parse_eps_list("1e-2,1e-3, 1e-4"), (std::vector<double>{1e-2, 1e-3, 1e-4}));
    EXPECT_THROW(parse_eps_list(""), InvalidArgument);
    EXPECT_THROW(parse_eps_list("1e-2,-1"), InvalidArgument);
    EXPECT_THROW(parse_eps_list("0.1x"), InvalidArgument);
}

TEST(CliParse, HistoryGenerators) {
    const auto phi = history_from_json(nlohmann::json::parse(R"({"kind": "kink", "params": {"at": -0.25}})"), 1.0, 4, 1);
    EXPECT_EQ(std::vector<double>(phi.values().begin(), phi.values().end()),
              (std::vector<double>{0.75, 0.5, 0.25, 0.0, 0.25}));
    const auto s = history_from_json(
        nlohmann::json::parse(R"({"kind": "samples", "params": {"t": [-1, -0.5, 0], "x": [0, 2, 1]}})"), 1.0, 4, 1);
    EXPECT_EQ(std::vector<double>(s.values().begin(), s.values().end()), (std::vector<double>{0, 1, 2, 1.5, 1}));
    // GridFunction JSON on a coarser grid is resampled onto the problem grid
    const auto g = history_from_json(to_json(GridFunction::sample(-1.0, 0.0, 2, 1, [](double t) { return Vector{t}; })),
                                     1.0, 4, 1);
    EXPECT_EQ(g.intervals(), 4u);
    EXPECT_DOUBLE_EQ(g.value(1)[0], -0.75);
    EXPECT_THROW(history_from_json(nlohmann::json::parse(R"({"kind": "samples", "params": {"t": [-0.5, 0], "x": [0, 1]}})"),
                                   1.0, 4, 1),
                 InvalidArgument);
}

TEST(CliParse, DirectionForms) {
    const ProblemSpec spec = problem_from_json(nlohmann::json::parse(kPureDelay));
    const auto z = direction_from_json(nlohmann::json::parse(R"({"chi": "zero", "xi": 2})"), spec);
    EXPECT_EQ(z.xi, 2.0);
    EXPECT_TRUE(z.chi.same_grid(spec.phi));
    const auto c = direction_from_json(nlohmann::json::parse(R"({"chi": {"kind": "const", "params": {"value": 3}}})"), spec);
    EXPECT_EQ(c.xi, 0.0);
    EXPECT_EQ(c.chi.value(7)[0], 3.0);
    EXPECT_THROW(direction_from_json(nlohmann::json::parse(R"({"xi": "big"})"), spec), InvalidArgument);
    EXPECT_THROW(direction_from_json(nlohmann::json::parse(R"({"eta": 1})"), spec), InvalidArgument);
}
