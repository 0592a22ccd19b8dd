// Time-dependent sources. All are evaluate blocks with no inputs and one
// output y; their residual is y - s(t).

#include <cmath>
#include <numbers>

#include "builtin.hpp"

namespace flowsim::blocks {

namespace {

TemplateInfo source_info(std::string name, std::vector<RealParam> reals) {
    TemplateInfo info;
    info.name = std::move(name);
    info.kind = BlockKind::evaluate;
    info.outputs = {"y"};
    info.real_params = std::move(reals);
    info.out_params = {"y"};
    info.g_vars = {{0}};
    info.jacobian = JacobianKind::constant;
    return info;
}

TemplateInfo with_breaks(TemplateInfo info) {
    info.has_breaks = true;
    return info;
}

class SourceBlock : public AlgebraicBlock {
public:
    using AlgebraicBlock::AlgebraicBlock;

protected:
    void input_partials(const BlockCall&, JacobianSink&) const override {}
};

class Const final : public SourceBlock {
public:
    Const() : SourceBlock(source_info("const", {{"value", 0.0}})) {}
    void evaluate(const BlockCall& c, std::span<double> y) const override { y[0] = c.real(0); }
};

// y0 before t0, y1 from t0 on.
class StepSource final : public SourceBlock {
public:
    StepSource()
        : SourceBlock(with_breaks(source_info("step_source", {{"t0", 0.0}, {"y0", 0.0}, {"y1", 1.0}}))) {}
    void evaluate(const BlockCall& c, std::span<double> y) const override {
        y[0] = c.t < c.real(0) ? c.real(1) : c.real(2);
    }
    std::optional<double> next_break(double t_now, const ParamValues& p) const override {
        if (p.reals[0] > t_now) return p.reals[0];
        return std::nullopt;
    }
};

// offset + amplitude * sin(2 pi frequency t + phase), phase in radians.
class SineSource final : public SourceBlock {
public:
    SineSource()
        : SourceBlock(source_info("sine_source",
                                  {{"amplitude", 1.0}, {"frequency", 1.0}, {"phase", 0.0}, {"offset", 0.0}})) {}
    void evaluate(const BlockCall& c, std::span<double> y) const override {
        y[0] = c.real(3) + c.real(0) * std::sin(2.0 * std::numbers::pi * c.real(1) * c.t + c.real(2));
    }
    void validate(const ParamValues& p) const override {
        if (p.reals[1] < 0.0) throw TemplateError("sine_source: frequency must be non-negative");
    }
};

// Valleys (offset - amplitude) at k*period, peaks at (k + 1/2)*period.
class TriangleSource final : public SourceBlock {
public:
    TriangleSource()
        : SourceBlock(with_breaks(
              source_info("triangle_source", {{"amplitude", 1.0}, {"period", 1.0}, {"offset", 0.0}}))) {}

    void validate(const ParamValues& p) const override {
        if (!(p.reals[1] > 0.0)) throw TemplateError("triangle_source: period must be positive");
    }

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        const double amp = c.real(0);
        const double half = 0.5 * c.real(1);
        const long long k = lattice_floor(c.t, half);
        const double frac = (c.t - static_cast<double>(k) * half) / half;
        const double rise = -amp + 2.0 * amp * frac;
        y[0] = c.real(2) + ((k % 2 + 2) % 2 == 0 ? rise : -rise);
    }

    std::optional<double> next_break(double t_now, const ParamValues& p) const override {
        const double half = 0.5 * p.reals[1];
        long long k = lattice_floor(t_now, half) + 1;
        while (static_cast<double>(k - 1) * half > t_now) --k;
        while (!(static_cast<double>(k) * half > t_now)) ++k;
        return static_cast<double>(k) * half;
    }

private:
    // Largest integer k with k*half <= t, robust against rounding in t/half.
    static long long lattice_floor(double t, double half) {
        auto k = static_cast<long long>(std::floor(t / half));
        while (static_cast<double>(k) * half > t) --k;
        while (static_cast<double>(k + 1) * half <= t) ++k;
        return k;
    }
};

std::vector<RealParam> table_params(const char* xs, const char* ys, int n) {
    std::vector<RealParam> p;
    for (int i = 1; i <= n; ++i) p.push_back({xs + std::to_string(i), static_cast<double>(i - 1)});
    for (int i = 1; i <= n; ++i) p.push_back({ys + std::to_string(i), 0.0});
    return p;
}

// Piecewise-linear waveform through (t_i, y_i), i = 1..n, n <= 20. Constant
// extension before the first and after the last point.
class Pwl20 final : public SourceBlock {
public:
    static constexpr int kMax = 20;

    Pwl20() : SourceBlock(make()) {}

    void validate(const ParamValues& p) const override {
        const long long n = p.ints[0];
        if (n < 1 || n > kMax) throw TemplateError("pwl20: n must be in [1, 20]");
        for (long long i = 1; i < n; ++i) {
            if (!(p.reals[static_cast<std::size_t>(i)] > p.reals[static_cast<std::size_t>(i - 1)])) {
                throw TemplateError("pwl20: time points must be strictly increasing");
            }
        }
    }

    void evaluate(const BlockCall& c, std::span<double> y) const override {
        const auto n = static_cast<int>(c.params.ints[0]);
        auto tt = [&](int i) { return c.real(i); };
        auto yy = [&](int i) { return c.real(kMax + i); };
        if (c.t <= tt(0)) {
            y[0] = yy(0);
            return;
        }
        for (int i = 1; i < n; ++i) {
            if (c.t < tt(i)) {
                const double w = (c.t - tt(i - 1)) / (tt(i) - tt(i - 1));
                y[0] = yy(i - 1) + w * (yy(i) - yy(i - 1));
                return;
            }
        }
        y[0] = yy(n - 1);
    }

    std::optional<double> next_break(double t_now, const ParamValues& p) const override {
        for (long long i = 0; i < p.ints[0]; ++i) {
            if (p.reals[static_cast<std::size_t>(i)] > t_now) return p.reals[static_cast<std::size_t>(i)];
        }
        return std::nullopt;
    }

private:
    static TemplateInfo make() {
        auto info = with_breaks(source_info("pwl20", table_params("t", "y", kMax)));
        info.int_params = {{"n", 2}};
        return info;
    }
};

}  // namespace

void register_sources(TemplateRegistry& reg) {
    reg.add(std::make_unique<Const>());
    reg.add(std::make_unique<StepSource>());
    reg.add(std::make_unique<SineSource>());
    reg.add(std::make_unique<TriangleSource>());
    reg.add(std::make_unique<Pwl20>());
}

// Shared with algebra.cpp for pwl10_xy.
std::vector<RealParam> xy_table_params(int n) { return table_params("x", "y", n); }

}  // namespace flowsim::blocks
