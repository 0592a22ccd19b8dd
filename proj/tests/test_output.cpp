#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "flowsim/error.hpp"
#include "flowsim/output.hpp"

using namespace flowsim;

namespace {

WaveformTable sample_table() {
    WaveformTable t({"a", "b"});
    const double r0[] = {0.1, -2.0};
    const double r1[] = {1.0 / 3.0, 1e-300};
    const double r2[] = {-0.0, 6.02214076e23};
    t.append(0.0, r0);
    t.append(0.5, r1);
    t.append(1.0, r2);
    return t;
}

std::string csv_of(const WaveformTable& t) {
    std::ostringstream s;
    write_csv(t, s);
    return s.str();
}

}  // namespace

TEST(Table, Basics) {
    const auto t = sample_table();
    EXPECT_EQ(t.columns(), (std::vector<std::string>{"time", "a", "b"}));
    EXPECT_EQ(t.size(), 3u);
    EXPECT_EQ(t.column_index("b"), 2);
    EXPECT_EQ(t.column_index("zz"), -1);
    EXPECT_EQ(t.column("time"), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Table, AppendRejectsBadRows) {
    auto t = sample_table();
    const double ok[] = {1, 2};
    const double narrow[] = {1};
    EXPECT_THROW(t.append(1.0, ok), std::logic_error);
    EXPECT_THROW(t.append(0.5, ok), std::logic_error);
    EXPECT_THROW(t.append(2.0, narrow), std::logic_error);
}

TEST(Recorder, EveryPoint) {
    Recorder r({"x"}, std::nullopt, 0.0);
    for (double t : {0.0, 0.1, 0.25}) {
        const double v[] = {t * 2};
        r.record(t, v);
    }
    EXPECT_EQ(r.table().size(), 3u);
}

TEST(Recorder, GridTakesFirstPointAtOrAfterEachSlot) {
    Recorder r({"x"}, 0.1, 0.0);
    for (double t : {0.0, 0.04, 0.1, 0.13, 0.19, 0.35, 0.41}) {
        const double v[] = {t};
        r.record(t, v);
    }
    // slots 0, .1, .2, .3, .4 -> points 0, .1, .35 (serves .2 and .3), .41
    EXPECT_EQ(r.table().column("time"), (std::vector<double>{0.0, 0.1, 0.35, 0.41}));
}

TEST(Csv, FormatIsFullPrecision) {
    const auto s = csv_of(sample_table());
    EXPECT_EQ(s.substr(0, s.find('\n')), "time,a,b");
    EXPECT_NE(s.find("0,0.10000000000000001,-2\n"), std::string::npos) << s;
    EXPECT_NE(s.find("1,-0,6.0221407599999999e+23\n"), std::string::npos) << s;
    EXPECT_NE(s.find("0.5,0.33333333333333331,1e-300\n"), std::string::npos) << s;
}

TEST(Csv, RoundTripIsExact) {
    const auto t = sample_table();
    std::istringstream in(csv_of(t));
    const auto back = read_csv(in);
    EXPECT_TRUE(back == t);
    EXPECT_TRUE(std::signbit(back.column("a")[2]));
}

TEST(Csv, QuotesAwkwardHeaders) {
    WaveformTable t({"plain", "with,comma", "say \"hi\""});
    const double v[] = {1, 2, 3};
    t.append(0.0, v);
    const auto s = csv_of(t);
    EXPECT_EQ(s.substr(0, s.find('\n')), "time,plain,\"with,comma\",\"say \"\"hi\"\"\"");
    std::istringstream in(s);
    EXPECT_EQ(read_csv(in).columns(), t.columns());
}

TEST(Csv, MalformedInput) {
    std::istringstream ragged("time,a\n0,1\n1\n");
    EXPECT_THROW(read_csv(ragged), IoError);
    std::istringstream junk("time,a\n0,abc\n");
    EXPECT_THROW(read_csv(junk), IoError);
    std::istringstream empty("");
    EXPECT_THROW(read_csv(empty), IoError);
    EXPECT_THROW(read_csv_file("/nonexistent/dir/x.csv"), IoError);
    EXPECT_THROW(write_csv_file(sample_table(), "/nonexistent/dir/x.csv"), IoError);
}

TEST(Csv, FileRoundTrip) {
    const auto p = (std::filesystem::temp_directory_path() / "flowsim_csv_rt.csv").string();
    write_csv_file(sample_table(), p);
    EXPECT_TRUE(read_csv_file(p) == sample_table());
    std::filesystem::remove(p);
}

TEST(Svg, OnePolylinePerSeriesAndLegend) {
    PlotSpec spec;
    spec.title = "demo <&>";
    const auto svg = emit_svg(sample_table(), spec);
    EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
    std::size_t n = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
    EXPECT_EQ(n, 2u);
    EXPECT_NE(svg.find("demo &lt;&amp;&gt;"), std::string::npos);
    EXPECT_NE(svg.find(">a<"), std::string::npos);
    EXPECT_NE(svg.find(">b<"), std::string::npos);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Svg, SelectedColumnsAndFlatData) {
    WaveformTable t({"flat"});
    for (int i = 0; i < 3; ++i) {
        const double v[] = {5.0};
        t.append(i, v);
    }
    PlotSpec spec;
    spec.y = {"flat"};
    const auto svg = emit_svg(t, spec);
    EXPECT_EQ(svg.find("nan"), std::string::npos);
    EXPECT_EQ(svg.find("inf"), std::string::npos);
}

TEST(Svg, Errors) {
    PlotSpec spec;
    spec.y = {"nope"};
    try {
        emit_svg(sample_table(), spec);
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("a, b"), std::string::npos) << e.what();
    }
    EXPECT_THROW(emit_svg(WaveformTable({"a"}), PlotSpec{}), IoError);
}
