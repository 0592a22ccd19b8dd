// Evaluate-kind elements: static maps from inputs to outputs.

#include <cmath>
#include <numbers>

#include "builtin.hpp"

namespace flowsim::blocks {

namespace {

TemplateInfo algebraic_info(std::string name, std::vector<std::string> inputs, std::vector<std::string> outputs,
                            std::vector<RealParam> reals, JacobianKind jk) {
    TemplateInfo info;
    info.name = std::move(name);
    info.kind = BlockKind::evaluate;
    info.inputs = std::move(inputs);
    info.outputs = std::move(outputs);
    info.real_params = std::move(reals);
    info.jacobian = jk;
    const int ni = static_cast<int>(info.inputs.size());
    for (int j = 0; j < static_cast<int>(info.outputs.size()); ++j) {
        auto vars = iota_vars(0, ni);
        vars.push_back(ni + j);
        info.g_vars.push_back(std::move(vars));
    }
    info.out_params = info.inputs;
    info.out_params.insert(info.out_params.end(), info.outputs.begin(), info.outputs.end());
    return info;
}

// y = k1 x1 + k2 x2, g1 = y - k1 x1 - k2 x2
class Sum2 final : public AlgebraicBlock {
public:
    Sum2() : AlgebraicBlock(algebraic_info("sum_2", {"x1", "x2"}, {"y"}, {{"k1", 1.0}, {"k2", 1.0}}, JacobianKind::constant)) {}

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        y[0] = c.real(0) * c.var(0) + c.real(1) * c.var(1);
    }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override {
        jac.set(0, 0, -c.real(0));
        jac.set(0, 1, -c.real(1));
    }
};

class Sum3 final : public AlgebraicBlock {
public:
    Sum3()
        : AlgebraicBlock(algebraic_info("sum_3", {"x1", "x2", "x3"}, {"y"}, {{"k1", 1.0}, {"k2", 1.0}, {"k3", 1.0}},
                                        JacobianKind::constant)) {}

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        y[0] = c.real(0) * c.var(0) + c.real(1) * c.var(1) + c.real(2) * c.var(2);
    }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override {
        for (int i = 0; i < 3; ++i) jac.set(0, i, -c.real(i));
    }
};

class Gain final : public AlgebraicBlock {
public:
    Gain() : AlgebraicBlock(algebraic_info("gain", {"x"}, {"y"}, {{"k", 1.0}}, JacobianKind::constant)) {}

    void evaluate(const BlockCall& c, std::span<double> y) const override { y[0] = c.real(0) * c.var(0); }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override { jac.set(0, 0, -c.real(0)); }
};

// y = k x1 x2
class Mult2 final : public AlgebraicBlock {
public:
    Mult2() : AlgebraicBlock(algebraic_info("mult_2", {"x1", "x2"}, {"y"}, {{"k", 1.0}}, JacobianKind::variable)) {}

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        y[0] = c.real(0) * c.var(0) * c.var(1);
    }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override {
        jac.set(0, 0, -c.real(0) * c.var(1));
        jac.set(0, 1, -c.real(0) * c.var(0));
    }
};

class SinFn final : public AlgebraicBlock {
public:
    SinFn() : AlgebraicBlock(algebraic_info("sin_fn", {"x"}, {"y"}, {}, JacobianKind::variable)) {}

    void evaluate(const BlockCall& c, std::span<double> y) const override { y[0] = std::sin(c.var(0)); }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override { jac.set(0, 0, -std::cos(c.var(0))); }
};

class CosFn final : public AlgebraicBlock {
public:
    CosFn() : AlgebraicBlock(algebraic_info("cos_fn", {"x"}, {"y"}, {}, JacobianKind::variable)) {}

    void evaluate(const BlockCall& c, std::span<double> y) const override { y[0] = std::cos(c.var(0)); }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override { jac.set(0, 0, std::sin(c.var(0))); }
};

// Static piecewise-linear map y = F(x) through (x_i, y_i), i = 1..n, n <= 10,
// clamped to the end values outside the table.
class Pwl10Xy final : public AlgebraicBlock {
public:
    static constexpr int kMax = 10;

    Pwl10Xy() : AlgebraicBlock(make()) {}

    void validate(const ParamValues& p) const override {
        const long long n = p.ints[0];
        if (n < 1 || n > kMax) throw TemplateError("pwl10_xy: n must be in [1, 10]");
        for (long long i = 1; i < n; ++i) {
            if (!(p.reals[static_cast<std::size_t>(i)] > p.reals[static_cast<std::size_t>(i - 1)])) {
                throw TemplateError("pwl10_xy: x points must be strictly increasing");
            }
        }
    }

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        const double x = c.var(0);
        const int seg = segment(c, x);
        if (seg < 0) {
            y[0] = x <= c.real(0) ? c.real(kMax) : c.real(kMax + n(c) - 1);
            return;
        }
        const double x0 = c.real(seg), x1 = c.real(seg + 1);
        const double y0 = c.real(kMax + seg), y1 = c.real(kMax + seg + 1);
        y[0] = y0 + (x - x0) / (x1 - x0) * (y1 - y0);
    }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override {
        const int seg = segment(c, c.var(0));
        double slope = 0.0;
        if (seg >= 0) {
            slope = (c.real(kMax + seg + 1) - c.real(kMax + seg)) / (c.real(seg + 1) - c.real(seg));
        }
        jac.set(0, 0, -slope);
    }

private:
    static int n(const BlockCall& c) { return static_cast<int>(c.params.ints[0]); }

    // Segment index i with x_i <= x < x_{i+1}, or -1 outside the table.
    static int segment(const BlockCall& c, double x) {
        const int count = n(c);
        if (count < 2 || x < c.real(0) || x >= c.real(count - 1)) return -1;
        for (int i = 0; i + 1 < count; ++i) {
            if (x < c.real(i + 1)) return i;
        }
        return -1;
    }

    static TemplateInfo make() {
        auto info = algebraic_info("pwl10_xy", {"x"}, {"y"}, xy_table_params(kMax), JacobianKind::variable);
        info.int_params = {{"n", 2}};
        return info;
    }
};

// y = y_high when x1 > x2, else y_low. Tracks the zero of u = x1 - x2.
class Comparator final : public AlgebraicBlock {
public:
    Comparator() : AlgebraicBlock(make()) {}

    void validate(const ParamValues& p) const override { (void)parse_mode(p.strings[0]); }

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        y[0] = c.var(0) > c.var(1) ? c.real(0) : c.real(1);
    }

    double crossing_signal(std::span<const double> inputs) const override { return inputs[0] - inputs[1]; }

    ExtrapMode extrap_mode(const ParamValues& p) const override { return parse_mode(p.strings[0]); }

protected:
    // Piecewise constant: no dependence on the inputs inside a segment.
    void input_partials(const BlockCall&, JacobianSink& jac) const override {
        jac.set(0, 0, 0.0);
        jac.set(0, 1, 0.0);
    }

private:
    static ExtrapMode parse_mode(const std::string& s) {
        if (s == "linear") return ExtrapMode::linear;
        if (s == "quadratic") return ExtrapMode::quadratic;
        throw TemplateError("comparator: extrap must be 'linear' or 'quadratic', got '" + s + "'");
    }

    static TemplateInfo make() {
        auto info = algebraic_info("comparator", {"x1", "x2"}, {"y"}, {{"y_high", 1.0}, {"y_low", -1.0}},
                                   JacobianKind::constant);
        info.string_params = {{"extrap", "linear"}};
        info.crossing_aware = true;
        return info;
    }
};

// Stationary-frame abc -> dq transform.
//   amplitude: q = (2/3)(a - b/2 - c/2),        d = (c - b)/sqrt(3)
//   power:     q = sqrt(2/3)(a - b/2 - c/2),    d = (c - b)/sqrt(2)
class AbcToDq final : public AlgebraicBlock {
public:
    AbcToDq() : AlgebraicBlock(make()) {}

    void validate(const ParamValues& p) const override { (void)scales(p); }

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        const auto [sq, sd] = scales(c.params);
        y[0] = sd * (c.var(2) - c.var(1));
        y[1] = sq * (c.var(0) - 0.5 * c.var(1) - 0.5 * c.var(2));
    }

protected:
    void input_partials(const BlockCall& c, JacobianSink& jac) const override {
        const auto [sq, sd] = scales(c.params);
        jac.set(0, 1, sd);
        jac.set(0, 2, -sd);
        jac.set(1, 0, -sq);
        jac.set(1, 1, 0.5 * sq);
        jac.set(1, 2, 0.5 * sq);
    }

private:
    struct Scales {
        double q;
        double d;
    };

    static Scales scales(const ParamValues& p) {
        const auto& conv = p.strings[0];
        if (conv == "amplitude") return {2.0 / 3.0, 1.0 / std::numbers::sqrt3};
        if (conv == "power") return {std::sqrt(2.0 / 3.0), 1.0 / std::numbers::sqrt2};
        throw TemplateError("abc_to_dq: convention must be 'amplitude' or 'power', got '" + conv + "'");
    }

    static TemplateInfo make() {
        TemplateInfo info;
        info.name = "abc_to_dq";
        info.kind = BlockKind::evaluate;
        info.inputs = {"a", "b", "c"};
        info.outputs = {"d", "q"};
        info.string_params = {{"convention", "amplitude"}};
        info.g_vars = {{1, 2, 3}, {0, 1, 2, 4}};
        info.out_params = {"a", "b", "c", "d", "q"};
        info.jacobian = JacobianKind::constant;
        return info;
    }
};

}  // namespace

void register_algebra(TemplateRegistry& reg) {
    reg.add(std::make_unique<Sum2>());
    reg.add(std::make_unique<Sum3>());
    reg.add(std::make_unique<Gain>());
    reg.add(std::make_unique<Mult2>());
    reg.add(std::make_unique<SinFn>());
    reg.add(std::make_unique<CosFn>());
    reg.add(std::make_unique<Pwl10Xy>());
    reg.add(std::make_unique<Comparator>());
    reg.add(std::make_unique<AbcToDq>());
}

}  // namespace flowsim::blocks
