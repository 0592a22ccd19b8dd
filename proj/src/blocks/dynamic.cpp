// Integrate-kind elements with a single state.

#include "builtin.hpp"

namespace flowsim::blocks {

namespace {

TemplateInfo single_state_info(std::string name, std::vector<RealParam> reals, std::vector<int> g_vars) {
    TemplateInfo info;
    info.name = std::move(name);
    info.kind = BlockKind::integrate;
    info.inputs = {"x"};
    info.outputs = {"y"};
    info.real_params = std::move(reals);
    info.startup_params = {{"y_st", 0.0}};
    info.out_params = {"x", "y"};
    info.f_var = {1};
    info.g_vars = {std::move(g_vars)};
    info.jacobian = JacobianKind::constant;
    return info;
}

// dy/dt = k x
class Integrator final : public BlockTemplate {
public:
    Integrator() : BlockTemplate(single_state_info("integrator", {{"k", 1.0}}, {0})) {}

    void residual(const BlockCall& c, std::span<double> g, JacobianSink* jac) const override {
        g[0] = c.real(0) * c.var(0);
        if (jac) jac->set(0, 0, c.real(0));
    }
};

// dy/dt = (x - y) / tr
class Lag1 final : public BlockTemplate {
public:
    Lag1() : BlockTemplate(single_state_info("lag_1", {{"tr", 1.0}}, {0, 1})) {}

    void validate(const ParamValues& p) const override {
        if (!(p.reals[0] > 0.0)) throw TemplateError("lag_1: tr must be positive");
    }

    std::vector<double> one_time(const ParamValues& p) const override { return {1.0 / p.reals[0]}; }

    void residual(const BlockCall& c, std::span<double> g, JacobianSink* jac) const override {
        const double inv_tr = c.pre(0);
        g[0] = inv_tr * (c.var(0) - c.var(1));
        if (jac) {
            jac->set(0, 0, inv_tr);
            jac->set(0, 1, -inv_tr);
        }
    }
};

}  // namespace

void register_dynamic(TemplateRegistry& reg) {
    reg.add(std::make_unique<Integrator>());
    reg.add(std::make_unique<Lag1>());
}

}  // namespace flowsim::blocks
