#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "flowsim/block.hpp"
#include "jacobian_check.hpp"

using namespace flowsim;

namespace {

const BlockTemplate& tmpl(const char* name) { return builtin_registry().at(name); }

double eval1(const char* name, const ParamOverrides& o, SignalMap inputs, double t = 0.0,
             const char* out = "y") {
    const auto& t_ = tmpl(name);
    BlockEvalRequest r;
    r.t = t;
    r.signal_values = std::move(inputs);
    return evaluate_outputs(t_, make_params(t_, o), r).at(out);
}

}  // namespace

TEST(Registry, HoldsEveryBuiltin) {
    const auto names = builtin_registry().names();
    for (const char* n : {"const", "step_source", "sine_source", "triangle_source", "pwl20", "sum_2", "sum_3", "gain",
                          "mult_2", "sin_fn", "cos_fn", "pwl10_xy", "comparator", "abc_to_dq", "integrator", "lag_1",
                          "indmc1"}) {
        EXPECT_NE(builtin_registry().find(n), nullptr) << n;
    }
    EXPECT_EQ(names.size(), 17u);
    EXPECT_EQ(builtin_registry().find("no_such"), nullptr);
}

TEST(Params, OverridesAndValidation) {
    const auto& g = tmpl("gain");
    EXPECT_DOUBLE_EQ(make_params(g).reals[0], 1.0);
    EXPECT_DOUBLE_EQ(make_params(g, {{{"k", 4.0}}, {}, {}}).reals[0], 4.0);
    EXPECT_THROW(make_params(g, {{{"kk", 4.0}}, {}, {}}), TemplateError);
    EXPECT_THROW(make_params(tmpl("lag_1"), {{{"tr", 0.0}}, {}, {}}), TemplateError);
    // startup values share the real-override map
    const auto p = make_params(tmpl("integrator"), {{{"y_st", 2.5}}, {}, {}});
    EXPECT_EQ(startup_values(tmpl("integrator"), p).at("y"), 2.5);
}

TEST(Sources, Values) {
    EXPECT_EQ(eval1("const", {{{"value", -3.0}}, {}, {}}, {}), -3.0);
    const ParamOverrides st{{{"t0", 1.0}, {"y0", 2.0}, {"y1", 5.0}}, {}, {}};
    EXPECT_EQ(eval1("step_source", st, {}, 0.999), 2.0);
    EXPECT_EQ(eval1("step_source", st, {}, 1.0), 5.0);
    const ParamOverrides sn{{{"amplitude", 2.0}, {"frequency", 50.0}, {"phase", 0.3}, {"offset", 1.0}}, {}, {}};
    const double t = 0.0123;
    EXPECT_NEAR(eval1("sine_source", sn, {}, t), 1.0 + 2.0 * std::sin(2 * std::numbers::pi * 50 * t + 0.3), 1e-12);
}

TEST(Sources, TriangleShapeAndBreaks) {
    const ParamOverrides o{{{"amplitude", 1.0}, {"period", 2.0}}, {}, {}};
    EXPECT_DOUBLE_EQ(eval1("triangle_source", o, {}, 0.0), -1.0);
    EXPECT_DOUBLE_EQ(eval1("triangle_source", o, {}, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(eval1("triangle_source", o, {}, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(eval1("triangle_source", o, {}, 1.5), 0.0);
    EXPECT_DOUBLE_EQ(eval1("triangle_source", o, {}, 2.0), -1.0);
    const auto& t = tmpl("triangle_source");
    const auto p = make_params(t, o);
    EXPECT_EQ(next_break(t, 0.0, p), 1.0);
    EXPECT_EQ(next_break(t, 0.99, p), 1.0);
    EXPECT_EQ(next_break(t, 1.0, p), 2.0);
    // from an accumulated-rounding time just under a lattice point
    EXPECT_EQ(next_break(t, 3.0 - 1e-15, p), 3.0);
}

TEST(Sources, Pwl20InterpolatesAndBreaksOnPoints) {
    const ParamOverrides o{{{"t1", 0.0}, {"t2", 1.0}, {"t3", 3.0}, {"y1", 0.0}, {"y2", 10.0}, {"y3", 4.0}},
                           {{"n", 3}},
                           {}};
    EXPECT_DOUBLE_EQ(eval1("pwl20", o, {}, -1.0), 0.0);
    EXPECT_DOUBLE_EQ(eval1("pwl20", o, {}, 0.25), 2.5);
    EXPECT_DOUBLE_EQ(eval1("pwl20", o, {}, 2.0), 7.0);
    EXPECT_DOUBLE_EQ(eval1("pwl20", o, {}, 9.0), 4.0);
    const auto& t = tmpl("pwl20");
    const auto p = make_params(t, o);
    EXPECT_EQ(next_break(t, 0.5, p), 1.0);
    EXPECT_EQ(next_break(t, 3.0, p), std::nullopt);
    ParamOverrides bad = o;
    bad.reals["t3"] = 0.5;
    EXPECT_THROW(make_params(t, bad), TemplateError);
}

TEST(Algebra, StaticMaps) {
    EXPECT_DOUBLE_EQ(eval1("sum_2", {{{"k1", 2.0}, {"k2", -1.0}}, {}, {}}, {{"x1", 3.0}, {"x2", 1.0}}), 5.0);
    EXPECT_DOUBLE_EQ(eval1("sum_3", {}, {{"x1", 1.0}, {"x2", 2.0}, {"x3", 3.0}}), 6.0);
    EXPECT_DOUBLE_EQ(eval1("gain", {{{"k", -2.0}}, {}, {}}, {{"x", 3.0}}), -6.0);
    EXPECT_DOUBLE_EQ(eval1("mult_2", {{{"k", 0.5}}, {}, {}}, {{"x1", 3.0}, {"x2", 4.0}}), 6.0);
    EXPECT_DOUBLE_EQ(eval1("sin_fn", {}, {{"x", 0.5}}), std::sin(0.5));
    EXPECT_DOUBLE_EQ(eval1("cos_fn", {}, {{"x", 0.5}}), std::cos(0.5));
}

TEST(Algebra, Pwl10XyClampsOutsideTable) {
    const ParamOverrides o{{{"x1", 0.0}, {"x2", 60.0}, {"y1", 18.0}, {"y2", 180.0}}, {}, {}};
    EXPECT_DOUBLE_EQ(eval1("pwl10_xy", o, {{"x", -5.0}}), 18.0);
    EXPECT_DOUBLE_EQ(eval1("pwl10_xy", o, {{"x", 30.0}}), 99.0);
    EXPECT_DOUBLE_EQ(eval1("pwl10_xy", o, {{"x", 90.0}}), 180.0);
}

TEST(Algebra, Comparator) {
    const ParamOverrides o{{{"y_high", 5.0}, {"y_low", 0.0}}, {}, {}};
    EXPECT_EQ(eval1("comparator", o, {{"x1", 1.0}, {"x2", 0.5}}), 5.0);
    EXPECT_EQ(eval1("comparator", o, {{"x1", 0.5}, {"x2", 0.5}}), 0.0);
    EXPECT_THROW(make_params(tmpl("comparator"), {{}, {}, {{"extrap", "cubic"}}}), TemplateError);
    EXPECT_TRUE(tmpl("comparator").info().crossing_aware);
}

TEST(Algebra, AbcToDqBalancedSetHasConstantMagnitude) {
    // Balanced cosines map to a rotating vector of the same amplitude with
    // the amplitude convention, and sqrt(3/2) times it with the power one.
    const double V = 7.0;
    for (double th : {0.0, 0.4, 1.9, 4.0}) {
        const SignalMap in{{"a", V * std::cos(th)},
                           {"b", V * std::cos(th - 2 * std::numbers::pi / 3)},
                           {"c", V * std::cos(th + 2 * std::numbers::pi / 3)}};
        const double q = eval1("abc_to_dq", {}, in, 0.0, "q");
        const double d = eval1("abc_to_dq", {}, in, 0.0, "d");
        EXPECT_NEAR(std::hypot(d, q), V, 1e-12);
        EXPECT_NEAR(q, V * std::cos(th), 1e-12);
        const ParamOverrides pw{{}, {}, {{"convention", "power"}}};
        EXPECT_NEAR(std::hypot(eval1("abc_to_dq", pw, in, 0.0, "d"), eval1("abc_to_dq", pw, in, 0.0, "q")),
                    V * std::sqrt(1.5), 1e-12);
    }
    // zero sequence is rejected by both axes
    const SignalMap zs{{"a", 1.0}, {"b", 1.0}, {"c", 1.0}};
    EXPECT_NEAR(eval1("abc_to_dq", {}, zs, 0.0, "d"), 0.0, 1e-15);
    EXPECT_NEAR(eval1("abc_to_dq", {}, zs, 0.0, "q"), 0.0, 1e-15);
}

TEST(Dynamic, Derivatives) {
    BlockEvalRequest r;
    r.signal_values = {{"x", 2.0}, {"y", 0.5}};
    const auto& i = tmpl("integrator");
    EXPECT_DOUBLE_EQ(state_derivatives(i, make_params(i, {{{"k", 3.0}}, {}, {}}), r)[0], 6.0);
    const auto& l = tmpl("lag_1");
    const auto p = make_params(l, {{{"tr", 0.5}}, {}, {}});
    EXPECT_DOUBLE_EQ(state_derivatives(l, p, r)[0], 3.0);
    EXPECT_DOUBLE_EQ(compute_one_time(l, p)[0], 2.0);
}

TEST(Indmc1, OneTimeConstants) {
    const auto& m = tmpl("indmc1");
    const auto p = make_params(m);
    const auto pre = compute_one_time(m, p);
    const double ls = 2e-3 + 69.31e-3, lr = ls, lm = 69.31e-3;
    EXPECT_NEAR(pre[2], ls * lr / lm - lm, 1e-15);  // Le
    // a machine with no leakage has a singular inductance matrix
    EXPECT_THROW(make_params(m, {{{"lls", 0.0}, {"llr", 0.0}}, {}, {}}), TemplateError);
}

TEST(Indmc1, StandstillTorqueFromFluxes) {
    // Currents against a direct inversion of the 2x2 inductance blocks.
    const auto& m = tmpl("indmc1");
    const auto p = make_params(m);
    const double lls = 2e-3, llr = 2e-3, lm = 69.31e-3, poles = 4;
    const double ls = lls + lm, lr = llr + lm;
    const double psids = 0.3, psiqs = -0.2, psidr = 0.1, psiqr = 0.25;
    // [psi_s; psi_r] = [[ls, lm], [lm, lr]] [i_s; i_r]
    const double det = ls * lr - lm * lm;
    const double ids = (lr * psids - lm * psidr) / det, idr = (-lm * psids + ls * psidr) / det;
    const double iqs = (lr * psiqs - lm * psiqr) / det, iqr = (-lm * psiqs + ls * psiqr) / det;
    BlockEvalRequest r;
    r.mode = EvalMode::out_params;
    r.signal_values = {{"vqs", 0}, {"vds", 0}, {"tl", 0}, {"wrm", 10}, {"psids", psids},
                       {"psiqs", psiqs}, {"psidr", psidr}, {"psiqr", psiqr}};
    const auto o = output_param_values(m, p, r);
    EXPECT_NEAR(o.at("ids"), ids, 1e-9 * std::abs(ids));
    EXPECT_NEAR(o.at("iqr"), iqr, 1e-9 * std::abs(iqr));
    EXPECT_NEAR(o.at("tem"), 0.75 * poles * lm * (iqs * idr - ids * iqr), 1e-9);
    EXPECT_EQ(o.at("wrm"), 10.0);
}

TEST(Jacobian, EveryTemplateMatchesCentralDifferences) {
    for (const auto& name : builtin_registry().names()) {
        const auto r = fixtures::check_jacobian(builtin_registry().at(name), 100, 12345u);
        EXPECT_EQ(r.samples, 100) << name;
        EXPECT_LE(r.worst, 1e-5) << r.where;
    }
}

TEST(Jacobian, SinkRejectsUndeclaredEntries) {
    const auto& info = tmpl("sum_2").info();
    JacobianSink s(info);
    EXPECT_NO_THROW(s.set(0, 0, 1.0));
    EXPECT_ANY_THROW(s.set(0, 5, 1.0));
}

TEST(Crossing, LinearExtrapolation) {
    // line through (1, -2) and (2, -1) hits zero at 3
    EXPECT_DOUBLE_EQ(*linear_crossing(1.0, -2.0, 2.0, -1.0), 3.0);
    // moving away from zero: no crossing ahead
    EXPECT_FALSE(linear_crossing(1.0, -1.0, 2.0, -2.0));
    // already changed sign
    EXPECT_FALSE(linear_crossing(1.0, -1.0, 2.0, 1.0));
}

TEST(Crossing, QuadraticIsExactOnParabolas) {
    // u = 4 - t^2 sampled at 0.5, 1, 1.5 -> root 2
    auto u = [](double t) { return 4.0 - t * t; };
    const auto r = quadratic_crossing(0.5, u(0.5), 1.0, u(1.0), 1.5, u(1.5));
    ASSERT_TRUE(r);
    EXPECT_NEAR(*r, 2.0, 1e-14);
    // linear from the last two samples overshoots a concave-down approach
    EXPECT_GT(*linear_crossing(1.0, u(1.0), 1.5, u(1.5)), 2.0);
}

TEST(Crossing, QuadraticFallsBackToLinearOnCollinearData) {
    const auto r = quadratic_crossing(0.0, -3.0, 1.0, -2.0, 2.0, -1.0);
    ASSERT_TRUE(r);
    EXPECT_DOUBLE_EQ(*r, 3.0);
}

TEST(Crossing, ProposeUsesHistoryAndWindow) {
    const auto& c = tmpl("comparator");
    BlockRuntimeState st;
    const double in0[] = {0.0, 1.0};
    st.push(0.0, in0);
    const double now[] = {0.5, 1.0};
    // u = x1 - x2 goes -1 -> -0.5 over [0, 1]; zero at 2
    EXPECT_DOUBLE_EQ(*propose_crossing(c, st, 1.0, now, 1.5, ExtrapMode::linear), 2.0);
    EXPECT_FALSE(propose_crossing(c, st, 1.0, now, 0.5, ExtrapMode::linear));
    EXPECT_THROW(st.push(0.0, in0), ConvergeError);
    EXPECT_FALSE(propose_crossing(tmpl("gain"), st, 1.0, now, 1.5, ExtrapMode::linear));
}
