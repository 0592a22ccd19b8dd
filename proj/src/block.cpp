#include "flowsim/block.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace flowsim {

namespace {

template <class Seq>
int index_of(const Seq& seq, std::string_view name) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] == name) return static_cast<int>(i);
    }
    return -1;
}

template <class Seq>
int param_index(const Seq& seq, std::string_view name) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

void check_info(const TemplateInfo& info) {
    auto fail = [&](const std::string& msg) { throw TemplateError("template '" + info.name + "': " + msg); };

    std::set<std::string> names;
    auto unique = [&](const std::string& n) {
        if (!names.insert(n).second) fail("duplicate name '" + n + "'");
    };
    for (const auto& n : info.inputs) unique(n);
    for (const auto& n : info.outputs) unique(n);
    for (const auto& n : info.aux) unique(n);
    for (const auto& p : info.real_params) unique(p.name);
    for (const auto& p : info.int_params) unique(p.name);
    for (const auto& p : info.string_params) unique(p.name);
    for (const auto& p : info.startup_params) unique(p.name);

    if (info.outputs.empty()) fail("at least one output is required");

    const int nv = info.n_vars();
    if (info.kind == BlockKind::evaluate) {
        if (info.n_f() != 0 || !info.aux.empty()) fail("evaluate blocks have no f-functions or aux variables");
        if (info.n_g() != static_cast<int>(info.outputs.size())) fail("evaluate blocks need one g per output");
    } else {
        const int n_states = static_cast<int>(info.outputs.size() + info.aux.size());
        if (info.n_f() < 1) fail("integrate blocks need at least one f-function");
        if (info.n_f() != n_states) fail("every output/aux variable needs exactly one f-function");
        std::set<int> seen;
        for (int v : info.f_var) {
            if (v < info.first_output() || v >= nv) fail("f-function must map to an output or aux variable");
            if (!seen.insert(v).second) fail("two f-functions map to the same variable");
        }
        if (info.n_g() != info.n_f()) fail("integrate blocks need one g per f");
    }
    for (const auto& vars : info.g_vars) {
        for (int v : vars) {
            if (v < 0 || v >= nv) fail("g-function references an unknown variable");
        }
    }
    if (info.crossing_aware && info.inputs.empty()) fail("crossing-aware blocks need inputs");
}

}  // namespace

// ---------------------------------------------------------------------------

int TemplateInfo::var_index(std::string_view var) const {
    if (int i = index_of(inputs, var); i >= 0) return i;
    if (int i = index_of(outputs, var); i >= 0) return first_output() + i;
    if (int i = index_of(aux, var); i >= 0) return first_aux() + i;
    return -1;
}

std::string TemplateInfo::var_name(int local) const {
    const auto i = static_cast<std::size_t>(local);
    if (i < inputs.size()) return inputs[i];
    if (i < inputs.size() + outputs.size()) return outputs[i - inputs.size()];
    return aux.at(i - inputs.size() - outputs.size());
}

bool TemplateInfo::is_port(std::string_view name) const {
    return index_of(inputs, name) >= 0 || index_of(outputs, name) >= 0;
}

bool TemplateInfo::is_param(std::string_view name) const {
    return param_index(real_params, name) >= 0 || param_index(int_params, name) >= 0 ||
           param_index(string_params, name) >= 0 || param_index(startup_params, name) >= 0;
}

// ---------------------------------------------------------------------------

JacobianSink::JacobianSink(const TemplateInfo& info) : info_(&info) {
    for (int g = 0; g < info.n_g(); ++g) {
        offset_.push_back(static_cast<int>(entries_.size()));
        for (int v : info.g_vars[static_cast<std::size_t>(g)]) entries_.push_back({g, v, 0.0});
    }
    offset_.push_back(static_cast<int>(entries_.size()));
}

void JacobianSink::set(int g, int var, double value) {
    if (g >= 0 && g < info_->n_g()) {
        for (int k = offset_[static_cast<std::size_t>(g)]; k < offset_[static_cast<std::size_t>(g) + 1]; ++k) {
            if (entries_[static_cast<std::size_t>(k)].var == var) {
                entries_[static_cast<std::size_t>(k)].value = value;
                return;
            }
        }
    }
    throw TemplateError("template '" + info_->name + "': Jacobian entry (g" + std::to_string(g + 1) + ", " +
                        (var >= 0 && var < info_->n_vars() ? info_->var_name(var) : std::to_string(var)) +
                        ") is not declared");
}

double JacobianSink::get(int g, int var) const {
    for (int k = offset_[static_cast<std::size_t>(g)]; k < offset_[static_cast<std::size_t>(g) + 1]; ++k) {
        if (entries_[static_cast<std::size_t>(k)].var == var) return entries_[static_cast<std::size_t>(k)].value;
    }
    return 0.0;
}

void JacobianSink::clear() {
    for (auto& e : entries_) e.value = 0.0;
}

// ---------------------------------------------------------------------------

BlockTemplate::BlockTemplate(TemplateInfo info) : info_(std::move(info)) { check_info(info_); }

void BlockTemplate::startup(const ParamValues& p, std::span<double> states) const {
    for (std::size_t i = 0; i < states.size(); ++i) states[i] = i < p.startup.size() ? p.startup[i] : 0.0;
}

void BlockTemplate::evaluate(const BlockCall&, std::span<double>) const {
    throw TemplateError("template '" + name() + "' has no explicit evaluation");
}

void BlockTemplate::derivatives(const BlockCall& call, std::span<double> f) const {
    if (info_.kind != BlockKind::integrate) throw TemplateError("template '" + name() + "' has no f-functions");
    residual(call, f, nullptr);
}

void BlockTemplate::out_params(const BlockCall& call, std::span<double> values) const {
    // Default: out-params named after variables report those variables.
    for (std::size_t i = 0; i < info_.out_params.size(); ++i) {
        const int v = info_.var_index(info_.out_params[i]);
        values[i] = v >= 0 ? call.var(v) : 0.0;
    }
}

double BlockTemplate::crossing_signal(std::span<const double>) const {
    throw TemplateError("template '" + name() + "' is not crossing-aware");
}

ParamValues BlockTemplate::default_params() const {
    ParamValues p;
    for (const auto& r : info_.real_params) p.reals.push_back(r.value);
    for (const auto& r : info_.int_params) p.ints.push_back(r.value);
    for (const auto& r : info_.string_params) p.strings.push_back(r.value);
    for (const auto& r : info_.startup_params) p.startup.push_back(r.value);
    return p;
}

void AlgebraicBlock::residual(const BlockCall& call, std::span<double> g, JacobianSink* jac) const {
    const auto& in = info();
    std::vector<double> y(in.outputs.size());
    evaluate(call, y);
    for (std::size_t j = 0; j < y.size(); ++j) g[j] = call.var(in.first_output() + static_cast<int>(j)) - y[j];
    if (jac != nullptr) {
        for (int j = 0; j < static_cast<int>(y.size()); ++j) jac->set(j, in.first_output() + j, 1.0);
        input_partials(call, *jac);
    }
}

// ---------------------------------------------------------------------------

void TemplateRegistry::add(std::unique_ptr<BlockTemplate> t) {
    auto name = t->name();
    if (templates_.count(name) != 0) throw TemplateError("template '" + name + "' registered twice");
    templates_.emplace(std::move(name), std::move(t));
}

const BlockTemplate* TemplateRegistry::find(std::string_view name) const {
    auto it = templates_.find(name);
    return it == templates_.end() ? nullptr : it->second.get();
}

const BlockTemplate& TemplateRegistry::at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw TemplateError("unknown template '" + std::string(name) + "'");
}

std::vector<std::string> TemplateRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : templates_) out.push_back(n);
    return out;
}

// ---------------------------------------------------------------------------

ParamValues make_params(const BlockTemplate& t, const ParamOverrides& overrides) {
    const auto& info = t.info();
    ParamValues p = t.default_params();
    for (const auto& [name, value] : overrides.reals) {
        if (int i = param_index(info.real_params, name); i >= 0) {
            p.reals[static_cast<std::size_t>(i)] = value;
        } else if (int s = param_index(info.startup_params, name); s >= 0) {
            p.startup[static_cast<std::size_t>(s)] = value;
        } else {
            throw TemplateError("template '" + t.name() + "' has no real parameter '" + name + "'");
        }
    }
    for (const auto& [name, value] : overrides.ints) {
        int i = param_index(info.int_params, name);
        if (i < 0) throw TemplateError("template '" + t.name() + "' has no integer parameter '" + name + "'");
        p.ints[static_cast<std::size_t>(i)] = value;
    }
    for (const auto& [name, value] : overrides.strings) {
        int i = param_index(info.string_params, name);
        if (i < 0) throw TemplateError("template '" + t.name() + "' has no string parameter '" + name + "'");
        p.strings[static_cast<std::size_t>(i)] = value;
    }
    t.validate(p);
    return p;
}

namespace {

std::vector<double> gather(const BlockTemplate& t, const SignalMap& values, bool require_all) {
    const auto& info = t.info();
    std::vector<double> vars(static_cast<std::size_t>(info.n_vars()), 0.0);
    for (int v = 0; v < info.n_vars(); ++v) {
        const auto name = info.var_name(v);
        auto it = values.find(name);
        if (it != values.end()) {
            vars[static_cast<std::size_t>(v)] = it->second;
        } else if (require_all || v < info.first_output()) {
            throw AssembleError("block '" + t.name() + "': no value for variable '" + name + "'");
        }
    }
    return vars;
}

void expect_mode(const BlockEvalRequest& req, std::initializer_list<EvalMode> modes, const char* op) {
    if (std::find(modes.begin(), modes.end(), req.mode) == modes.end()) {
        throw AssembleError(std::string(op) + ": request mode does not match the operation");
    }
}

}  // namespace

SignalMap evaluate_outputs(const BlockTemplate& t, const ParamValues& p, const BlockEvalRequest& req) {
    if (t.info().kind != BlockKind::evaluate) throw AssembleError("evaluate_outputs: '" + t.name() + "' is not an evaluate block");
    expect_mode(req, {EvalMode::explicit_f}, "evaluate_outputs");
    const auto vars = gather(t, req.signal_values, false);
    const auto pre = t.one_time(p);
    std::vector<double> y(t.info().outputs.size());
    t.evaluate(BlockCall{req.t, vars, p, pre}, y);
    SignalMap out;
    for (std::size_t j = 0; j < y.size(); ++j) out[t.info().outputs[j]] = y[j];
    return out;
}

std::vector<double> state_derivatives(const BlockTemplate& t, const ParamValues& p, const BlockEvalRequest& req) {
    if (t.info().kind != BlockKind::integrate) throw AssembleError("state_derivatives: '" + t.name() + "' is not an integrate block");
    expect_mode(req, {EvalMode::explicit_f}, "state_derivatives");
    const auto vars = gather(t, req.signal_values, true);
    const auto pre = t.one_time(p);
    std::vector<double> f(static_cast<std::size_t>(t.info().n_f()));
    t.derivatives(BlockCall{req.t, vars, p, pre}, f);
    return f;
}

ResidualResult residual_and_jacobian(const BlockTemplate& t, const ParamValues& p, const BlockEvalRequest& req) {
    expect_mode(req, {EvalMode::implicit_g, EvalMode::implicit_dgdx}, "residual_and_jacobian");
    const auto& info = t.info();
    const auto vars = gather(t, req.signal_values, true);
    const auto pre = t.one_time(p);
    ResidualResult out;
    out.g.resize(static_cast<std::size_t>(info.n_g()));
    JacobianSink sink(info);
    t.residual(BlockCall{req.t, vars, p, pre}, out.g, &sink);
    for (const auto& e : sink.entries()) out.jacobian[{e.g, info.var_name(e.var)}] = e.value;
    return out;
}

SignalMap startup_values(const BlockTemplate& t, const ParamValues& p) {
    const auto& info = t.info();
    if (info.kind != BlockKind::integrate) throw AssembleError("startup_values: '" + t.name() + "' has no states");
    std::vector<double> s(static_cast<std::size_t>(info.n_f()));
    t.startup(p, s);
    SignalMap out;
    for (int i = 0; i < info.n_f(); ++i) out[info.var_name(info.f_var[static_cast<std::size_t>(i)])] = s[static_cast<std::size_t>(i)];
    return out;
}

std::vector<double> compute_one_time(const BlockTemplate& t, const ParamValues& p) { return t.one_time(p); }

std::optional<double> next_break(const BlockTemplate& t, double t_now, const ParamValues& p) {
    return t.next_break(t_now, p);
}

SignalMap output_param_values(const BlockTemplate& t, const ParamValues& p, const BlockEvalRequest& req) {
    expect_mode(req, {EvalMode::out_params}, "output_param_values");
    const auto& info = t.info();
    auto vars = gather(t, req.signal_values, false);
    const auto pre = t.one_time(p);
    // Evaluate blocks fill missing outputs from their inputs.
    if (info.kind == BlockKind::evaluate) {
        std::vector<double> y(info.outputs.size());
        t.evaluate(BlockCall{req.t, vars, p, pre}, y);
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (req.signal_values.find(info.outputs[j]) == req.signal_values.end()) vars[info.inputs.size() + j] = y[j];
        }
    }
    std::vector<double> values(info.out_params.size());
    t.out_params(BlockCall{req.t, vars, p, pre}, values);
    SignalMap out;
    for (std::size_t i = 0; i < values.size(); ++i) out[info.out_params[i]] = values[i];
    return out;
}

// ---------------------------------------------------------------------------

void BlockRuntimeState::push(double t, std::span<const double> inputs) {
    if (!history.empty() && !(t > history.back().t)) {
        throw ConvergeError("crossing history must be strictly increasing in time");
    }
    history.push_back({t, std::vector<double>(inputs.begin(), inputs.end())});
    while (history.size() > kHistoryDepth) history.pop_front();
}

std::optional<double> linear_crossing(double t1, double u1, double t0, double u0) {
    if (u0 == 0.0 || u0 * u1 < 0.0) return std::nullopt;
    const double slope = (u0 - u1) / (t0 - t1);
    if (slope == 0.0 || !std::isfinite(slope)) return std::nullopt;
    const double tau = -u0 / slope;
    if (!(tau > 0.0)) return std::nullopt;
    return t0 + tau;
}

std::optional<double> quadratic_crossing(double t2, double u2, double t1, double u1, double t0, double u0) {
    if (u0 == 0.0 || u0 * u1 < 0.0) return std::nullopt;
    // Newton form around t0, t1: u(t0 + tau) = a tau^2 + b tau + u0.
    const double d1 = (u0 - u1) / (t0 - t1);
    const double d2 = (u1 - u2) / (t1 - t2);
    const double span = t0 - t2;
    const double a = (d1 - d2) / span;
    const double scale = std::max({std::abs(u0), std::abs(u1), std::abs(u2)});
    if (std::abs(a) * span * span < 1e-12 * scale) return linear_crossing(t1, u1, t0, u0);

    const double b = d1 + a * (t0 - t1);
    const double c = u0;
    double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) {
        // A tangent root loses its discriminant to rounding.
        if (disc < -1e-9 * (b * b + std::abs(4.0 * a * c))) return linear_crossing(t1, u1, t0, u0);
        disc = 0.0;
    }
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    double best = std::numeric_limits<double>::infinity();
    for (double tau : {q / a, q != 0.0 ? c / q : std::numeric_limits<double>::quiet_NaN()}) {
        if (tau > 0.0 && tau < best) best = tau;
    }
    if (!std::isfinite(best)) return std::nullopt;
    return t0 + best;
}

std::optional<double> propose_crossing(const BlockTemplate& t, const BlockRuntimeState& state, double t0,
                                       std::span<const double> inputs_now, double dt_normal, ExtrapMode mode) {
    if (!t.info().crossing_aware || state.history.empty()) return std::nullopt;
    const auto& h = state.history;
    const auto& r1 = h[h.size() - 1];
    if (!(r1.t < t0)) return std::nullopt;
    const double u0 = t.crossing_signal(inputs_now);
    const double u1 = t.crossing_signal(r1.inputs);

    std::optional<double> tp;
    if (mode == ExtrapMode::quadratic && h.size() >= 2) {
        const auto& r2 = h[h.size() - 2];
        tp = quadratic_crossing(r2.t, t.crossing_signal(r2.inputs), r1.t, u1, t0, u0);
    } else {
        tp = linear_crossing(r1.t, u1, t0, u0);
    }
    if (!tp || !(*tp > t0) || *tp > t0 + dt_normal) return std::nullopt;
    return tp;
}

}  // namespace flowsim
