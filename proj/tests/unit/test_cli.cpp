#include <gtest/gtest.h>

#include <sstream>

#include "qflow/cli.hpp"
#include "qflow/io.hpp"
#include "support.hpp"

using namespace qflow;
using qflow::test::ScratchDir;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST(Cli, UnknownSubcommandIsAUsageError) {
    const Result r = cli({"levitate"});
    EXPECT_EQ(r.code, exit_usage);
    EXPECT_TRUE(contains(r.err, "flow")) << r.err;
    EXPECT_TRUE(contains(r.err, "selftest")) << r.err;
    EXPECT_EQ(cli({}).code, exit_usage);
    EXPECT_EQ(cli({"flow", "--bogus"}).code, exit_usage);
}

TEST(Cli, HelpExitsCleanly) {
    const Result r = cli({"--help"});
    EXPECT_EQ(r.code, exit_success);
    EXPECT_TRUE(contains(r.out, "continuation"));
}

TEST(Cli, SelftestPasses) {
    const Result r = cli({"selftest"});
    EXPECT_EQ(r.code, exit_success) << r.out << r.err;
    EXPECT_TRUE(contains(r.out, "9 passed, 0 failed")) << r.out;
}

TEST(Cli, ConfigErrorsAreUsageErrors) {
    ScratchDir dir("cli");
    EXPECT_EQ(cli({"flow", "--config", (dir.path() / "missing.cfg").string()}).code, exit_usage);
    const auto cfg = dir.path() / "bad.cfg";
    write_file_atomic(cfg, "mode = flow\nproblem = constant:10\ngrid.n = x\n");
    const Result r = cli({"flow", "--config", cfg.string()});
    EXPECT_EQ(r.code, exit_usage);
    EXPECT_TRUE(contains(r.err, "bad.cfg:3")) << r.err;
}

TEST(Cli, FlowWritesOutputs) {
    ScratchDir dir("cli");
    const auto cfg = dir.path() / "c.cfg";
    const auto out = dir.path() / "run";
    write_file_atomic(cfg, "mode = flow\nproblem = constant:10\ninitial = random:0.2\n"
                           "output = " + out.string() + "\n[grid]\nn = 8\n[flow]\nt_end = 1.0\n");
    const Result r = cli({"flow", "--config", cfg.string(), "--set", "flow.t_end=0.002"});
    ASSERT_EQ(r.code, exit_success) << r.err;
    for (const char* f : {"trajectory.csv", "final_field.qfld", "summary.txt", "manifest.cfg", "run.log"})
        EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
    EXPECT_TRUE(contains(read_file(out / "manifest.cfg"), "t_end = 0.002"));
    EXPECT_TRUE(contains(read_file(out / "run.log"), "default: flow.dt_init = 1e-5"));
    EXPECT_EQ(load_field(out / "final_field.qfld").grid(), TorusGrid(8, 1.0));
    EXPECT_TRUE(contains(read_file(out / "trajectory.csv"), diagnostics_header));
}

TEST(Cli, ManifestReplayReproducesOutputs) {
    ScratchDir dir("cli");
    const auto a = dir.path() / "a";
    const auto b = dir.path() / "b";
    const std::vector<std::string> base{"flow", "--set", "problem=cosine:10,0.3,1,0,0,0",
                                        "initial=random:0.2", "grid.n=8", "flow.t_end=0.002"};
    auto with_output = [&](const std::filesystem::path& o) {
        auto args = base;
        args.push_back("output=" + o.string());
        return args;
    };
    ASSERT_EQ(cli(with_output(a)).code, exit_success);
    ASSERT_EQ(cli(with_output(b)).code, exit_success);
    for (const char* f : {"trajectory.csv", "final_field.qfld", "summary.txt"})
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;

    const auto c = dir.path() / "c";
    const Result replay =
        cli({"flow", "--config", (a / "manifest.cfg").string(), "--set", "output=" + c.string()});
    ASSERT_EQ(replay.code, exit_success) << replay.err;
    EXPECT_EQ(read_file(a / "final_field.qfld"), read_file(c / "final_field.qfld"));
    EXPECT_EQ(read_file(a / "trajectory.csv"), read_file(c / "trajectory.csv"));
}

TEST(Cli, NumericalFailureExitsWithTwo) {
    ScratchDir dir("cli");
    const Result r = cli({"flow", "--set", "problem=constant:10", "initial=cosine:0.5,4,3,0,2",
                          "grid.n=16", "flow.dt_init=0.01", "flow.dt_min=0.01",
                          "output=" + (dir.path() / "o").string()});
    EXPECT_EQ(r.code, exit_numerical) << r.err;
    EXPECT_TRUE(contains(r.err, "[step_underflow]")) << r.err;
}

TEST(Cli, SolveAndBubbleModes) {
    ScratchDir dir("cli");
    const Result s = cli({"solve", "--set", "problem=cosine:10,0.3,1,0,0,0", "grid.n=8",
                          "output=" + (dir.path() / "s").string()});
    ASSERT_EQ(s.code, exit_success) << s.err;
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "s" / "solution.qfld"));

    const Result b = cli({"bubble", "--set", "grid.n=16", "bubble.lambda=20",
                          "output=" + (dir.path() / "b").string()});
    ASSERT_EQ(b.code, exit_success) << b.err;
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "b" / "sites.csv"));

    const Result an = cli({"analyze", "--set", "problem=constant:1", "analyze.k=157.91367041742973",
                           "analyze.field=" + (dir.path() / "b" / "bubble.qfld").string(), "grid.n=16",
                           "output=" + (dir.path() / "a").string()});
    ASSERT_EQ(an.code, exit_success) << an.err;
    EXPECT_EQ(read_file(dir.path() / "a" / "sites.csv"), read_file(dir.path() / "b" / "sites.csv"));
}
