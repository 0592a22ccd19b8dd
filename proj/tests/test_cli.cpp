#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using flowsim::fixtures::read_file;
using flowsim::fixtures::sample_path;

namespace {

struct Out {
    int code;
    std::string out, err;
};

Out run(std::vector<std::string> args) {
    args.insert(args.begin(), "flowsim");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream o, e;
    const int code = flowsim::cli::main(static_cast<int>(argv.size()), argv.data(), o, e);
    return {code, o.str(), e.str()};
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("flowsim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string write(const std::string& name, const std::string& text) {
        const auto p = (dir / name).string();
        std::ofstream(p) << text;
        return p;
    }
};

}  // namespace

TEST_F(Cli, RunWritesCsvNamedAfterTheNetlist) {
    const auto r = run({"run", sample_path("rc.net"), "-o", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "rc.csv"));
    EXPECT_NE(r.out.find("accepted"), std::string::npos);
    EXPECT_NE(r.out.find("Newton"), std::string::npos);
    const auto t = flowsim::read_csv_file((dir / "rc.csv").string());
    EXPECT_EQ(t.columns(), (std::vector<std::string>{"time", "v1", "v2"}));
    EXPECT_EQ(t.column("time").back(), 10e-3);
}

TEST_F(Cli, RunHonoursOutputStatementsAndSvg) {
    const auto r = run({"run", sample_path("vf_drive.net"), "-o", dir.string(), "-q", "--t-end", "0.2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    EXPECT_TRUE(fs::exists(dir / "vf_drive.csv"));
    EXPECT_TRUE(fs::exists(dir / "vf_drive.svg"));
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
    ::setenv("FLOWSIM_OUTPUT_DIR", dir.string().c_str(), 1);
    const auto r = run({"run", sample_path("lag.net"), "-q"});
    ::unsetenv("FLOWSIM_OUTPUT_DIR");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "lag.csv"));
    EXPECT_EQ(flowsim::cli::resolve_output_dir(""), ".");
    EXPECT_EQ(flowsim::cli::resolve_output_dir("x"), "x");
}

TEST_F(Cli, RepeatedRunsAreByteIdentical) {
    ASSERT_EQ(run({"run", sample_path("free_accel.net"), "-q", "-o", (dir / "a").string()}).code, 0);
    ASSERT_EQ(run({"run", sample_path("free_accel.net"), "-q", "-o", (dir / "b").string()}).code, 0);
    EXPECT_EQ(read_file((dir / "a" / "free_accel.csv").string()), read_file((dir / "b" / "free_accel.csv").string()));
}

TEST_F(Cli, OverridesTakePrecedence) {
    const auto r = run({"run", sample_path("rc.net"), "-o", dir.string(), "--method", "rk4", "--step", "1e-4",
                        "--t-end", "1e-3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("rk4"), std::string::npos);
    EXPECT_NE(r.out.find("10 accepted"), std::string::npos) << r.out;
}

TEST_F(Cli, ExitCodesFollowErrorCategories) {
    EXPECT_EQ(run({"run", write("p.net", "block g gian x=u y=v\n")}).code, 1);
    EXPECT_EQ(run({"run", write("a.net", "block g gain x=u y=v\noutvar v = v\n")}).code, 2);
    EXPECT_EQ(run({"run", write("c.net",
                                "block c const y=a value=1e200\nblock m mult_2 x1=a x2=a y=b\n"
                                "block i integrator x=b y=s\noutvar s = s\nsolve method=rk4 t_end=1 h=0.1\n"),
                   "-o", dir.string()})
                  .code,
              3);
    EXPECT_EQ(run({"run", (dir / "missing.net").string()}).code, 4);
    EXPECT_EQ(run({"plot", (dir / "missing.csv").string()}).code, 4);
    const auto bad = run({"run", sample_path("rc.net"), "--solve-faster"});
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(run({}).code, 0);
}

TEST_F(Cli, ErrorMessagesGoToStderr) {
    const auto r = run({"check", write("p.net", "block g gian x=u y=v\n")});
    EXPECT_TRUE(r.out.empty());
    EXPECT_NE(r.err.find("parse error"), std::string::npos);
    EXPECT_NE(r.err.find("p.net:1"), std::string::npos) << r.err;
}

TEST_F(Cli, CheckCountsAndLoops) {
    const auto ok = run({"check", sample_path("free_accel.net")});
    EXPECT_EQ(ok.code, 0);
    EXPECT_NE(ok.out.find("OK, 8 vars, 8 eqns"), std::string::npos) << ok.out;

    const auto loop = write("loop.net", "block s const y=u\nblock a sum_2 x1=u x2=q y=p\nblock b gain x=p y=q k=0.5\n"
                                        "solve method=rk4\n");
    const auto explicit_run = run({"check", loop});
    EXPECT_EQ(explicit_run.code, 2);
    const auto& o = explicit_run.out;
    EXPECT_TRUE(o.find("algebraic loop: a b") != std::string::npos || o.find("algebraic loop: b a") != std::string::npos)
        << o;
    const auto implicit_run = run({"check", loop, "--method", "trbdf2"});
    EXPECT_EQ(implicit_run.code, 0);
}

TEST_F(Cli, ImplicitMethodsSolveAlgebraicLoops) {
    const auto loop = write("loop.net", "block s const y=u value=1\nblock a sum_2 x1=u x2=q y=p\nblock b gain x=p y=q k=0.5\n"
                                        "outvar p = p\nsolve method=backward_euler t_end=1 h=0.5\n");
    ASSERT_EQ(run({"run", loop, "-q", "-o", dir.string()}).code, 0);
    const auto t = flowsim::read_csv_file((dir / "loop.csv").string());
    // p = 1 + 0.5 p
    EXPECT_NEAR(t.column("p").back(), 2.0, 1e-9);
}

TEST_F(Cli, FlattenPrintsCanonicalNetlist) {
    const auto r = run({"flatten", sample_path("free_accel_sub.net")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("block m.w_int integrator x=m.dw y=wrm"), std::string::npos) << r.out;
    EXPECT_EQ(flowsim::cli::flatten_text(r.out), r.out);
    const auto f = run({"flatten", sample_path("rc.net"), "-o", (dir / "flat.net").string()});
    ASSERT_EQ(f.code, 0);
    EXPECT_TRUE(fs::exists(dir / "flat.net"));
}

TEST_F(Cli, PlotSelectsColumns) {
    ASSERT_EQ(run({"run", sample_path("rc.net"), "-q", "-o", dir.string()}).code, 0);
    const auto svg = (dir / "p.svg").string();
    const auto r = run({"plot", (dir / "rc.csv").string(), "-y", "v2", "-o", svg, "--title", "V2", "--width", "640"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto text = read_file(svg);
    EXPECT_NE(text.find("width=\"640\""), std::string::npos);
    EXPECT_EQ(text.find(">v1<"), std::string::npos);
    EXPECT_EQ(run({"plot", (dir / "rc.csv").string(), "-y", "v9", "-o", svg}).code, 4);
}
