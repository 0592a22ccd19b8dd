#pragma once

// Block template contract.
//
// A template describes one library element: its ports, parameters and
// equations. Variables are addressed by a local index laid out as
// [inputs..., outputs..., aux...]. Two kinds exist:
//
//   evaluate   y_j = h_j(x)         implicit residual g_j = y_j - h_j(x)
//   integrate  dv_i/dt = f_i(vars)  implicit residual g_i = f_i(vars)
//
// For integrate blocks every output and aux variable is a state and owns
// exactly one f-function. The time-discretisation wrapper around g_i is
// applied by the assembly layer, not by the template.

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowsim/error.hpp"

namespace flowsim {

enum class BlockKind { evaluate, integrate };
enum class JacobianKind { constant, variable };
enum class ExtrapMode { linear, quadratic };

struct RealParam {
    std::string name;
    double value = 0.0;
};

struct IntParam {
    std::string name;
    long long value = 0;
};

struct StringParam {
    std::string name;
    std::string value;
};

struct TemplateInfo {
    std::string name;
    BlockKind kind = BlockKind::evaluate;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<std::string> aux;
    std::vector<RealParam> real_params;
    std::vector<IntParam> int_params;
    std::vector<StringParam> string_params;
    std::vector<RealParam> startup_params;
    std::vector<std::string> out_params;
    // f_var[i]: local index of the variable whose time derivative f_i gives.
    std::vector<int> f_var;
    // g_vars[i]: local indices of the variables appearing in g_i.
    std::vector<std::vector<int>> g_vars;
    JacobianKind jacobian = JacobianKind::constant;
    bool has_breaks = false;
    bool crossing_aware = false;

    int n_vars() const { return static_cast<int>(inputs.size() + outputs.size() + aux.size()); }
    int n_f() const { return static_cast<int>(f_var.size()); }
    int n_g() const { return static_cast<int>(g_vars.size()); }
    int first_output() const { return static_cast<int>(inputs.size()); }
    int first_aux() const { return static_cast<int>(inputs.size() + outputs.size()); }

    // Local index of a variable name, or -1.
    int var_index(std::string_view var) const;
    std::string var_name(int local) const;
    bool is_port(std::string_view name) const;
    bool is_param(std::string_view name) const;
};

/// Resolved parameter values for one instance, in declaration order.
struct ParamValues {
    std::vector<double> reals;
    std::vector<long long> ints;
    std::vector<std::string> strings;
    std::vector<double> startup;
};

/// Read-only view handed to a template for one computation.
struct BlockCall {
    double t = 0.0;
    std::span<const double> vars;
    const ParamValues& params;
    std::span<const double> one_time;

    double var(int i) const { return vars[static_cast<std::size_t>(i)]; }
    double real(int i) const { return params.reals[static_cast<std::size_t>(i)]; }
    double pre(int i) const { return one_time[static_cast<std::size_t>(i)]; }
};

/// Collects dg_i/dvar entries. Only (g, var) pairs declared in g_vars are
/// accepted; anything else is a template-definition error.
class JacobianSink {
public:
    explicit JacobianSink(const TemplateInfo& info);

    void set(int g, int var, double value);
    double get(int g, int var) const;
    void clear();

    struct Entry {
        int g;
        int var;
        double value;
    };
    // One entry per declared (g, var) pair, in declaration order.
    const std::vector<Entry>& entries() const { return entries_; }

private:
    const TemplateInfo* info_;
    std::vector<Entry> entries_;
    std::vector<int> offset_;  // first entry of each g
};

class BlockTemplate {
public:
    explicit BlockTemplate(TemplateInfo info);
    virtual ~BlockTemplate() = default;

    BlockTemplate(const BlockTemplate&) = delete;
    BlockTemplate& operator=(const BlockTemplate&) = delete;

    const TemplateInfo& info() const { return info_; }
    const std::string& name() const { return info_.name; }

    // Parameter sanity checks beyond what one_time() needs.
    virtual void validate(const ParamValues&) const {}
    virtual std::vector<double> one_time(const ParamValues&) const { return {}; }

    // Initial value for each state, in f order. Default: the start-up
    // parameters, one per f-function.
    virtual void startup(const ParamValues& p, std::span<double> states) const;

    // Explicit path, evaluate kind: outputs from inputs.
    virtual void evaluate(const BlockCall& call, std::span<double> outputs) const;
    // Explicit path, integrate kind: f_i.
    virtual void derivatives(const BlockCall& call, std::span<double> f) const;
    // Implicit path: g-values and, when jac is non-null, their partials.
    virtual void residual(const BlockCall& call, std::span<double> g, JacobianSink* jac) const = 0;

    virtual void out_params(const BlockCall& call, std::span<double> values) const;

    virtual std::optional<double> next_break(double /*t_now*/, const ParamValues&) const {
        return std::nullopt;
    }

    // Crossing-aware blocks: the signal u whose zero is tracked, from the
    // input values alone.
    virtual double crossing_signal(std::span<const double> inputs) const;
    virtual ExtrapMode extrap_mode(const ParamValues&) const { return ExtrapMode::linear; }

    ParamValues default_params() const;

private:
    TemplateInfo info_;
};

/// Evaluate-kind helper: residual is y_j - h_j(x) built from evaluate();
/// subclasses report dh_j/dx_k through input_partials().
class AlgebraicBlock : public BlockTemplate {
public:
    using BlockTemplate::BlockTemplate;

    void residual(const BlockCall& call, std::span<double> g, JacobianSink* jac) const override;

protected:
    // Set dg_j/dx_k = -dh_j/dx_k for inputs. The dg_j/dy_j = 1 entry is
    // added by residual().
    virtual void input_partials(const BlockCall& call, JacobianSink& jac) const = 0;
};

class TemplateRegistry {
public:
    void add(std::unique_ptr<BlockTemplate> t);
    const BlockTemplate* find(std::string_view name) const;
    const BlockTemplate& at(std::string_view name) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, std::unique_ptr<BlockTemplate>, std::less<>> templates_;
};

/// Registry holding every built-in element.
const TemplateRegistry& builtin_registry();

// ---------------------------------------------------------------------------
// Name-keyed operations over a single template. The engine works on the
// span-based virtuals above; these are the convenient entry points.

using SignalMap = std::map<std::string, double, std::less<>>;

enum class EvalMode { startup, explicit_f, implicit_g, implicit_dgdx, out_params, one_time };

struct BlockEvalRequest {
    EvalMode mode = EvalMode::explicit_f;
    double t = 0.0;
    SignalMap signal_values;
};

struct ResidualResult {
    std::vector<double> g;
    // (g index, variable name) -> dg/dvar
    std::map<std::pair<int, std::string>, double> jacobian;
};

/// Overrides on top of the template defaults, by parameter name.
struct ParamOverrides {
    SignalMap reals;
    std::map<std::string, long long, std::less<>> ints;
    std::map<std::string, std::string, std::less<>> strings;
};

ParamValues make_params(const BlockTemplate& t, const ParamOverrides& overrides = {});

SignalMap evaluate_outputs(const BlockTemplate& t, const ParamValues& p, const BlockEvalRequest& req);
std::vector<double> state_derivatives(const BlockTemplate& t, const ParamValues& p,
                                      const BlockEvalRequest& req);
ResidualResult residual_and_jacobian(const BlockTemplate& t, const ParamValues& p,
                                     const BlockEvalRequest& req);
SignalMap startup_values(const BlockTemplate& t, const ParamValues& p);
std::vector<double> compute_one_time(const BlockTemplate& t, const ParamValues& p);
std::optional<double> next_break(const BlockTemplate& t, double t_now, const ParamValues& p);
SignalMap output_param_values(const BlockTemplate& t, const ParamValues& p, const BlockEvalRequest& req);

// ---------------------------------------------------------------------------
// Crossing extrapolation

struct InputRecord {
    double t = 0.0;
    std::vector<double> inputs;
};

struct BlockRuntimeState {
    static constexpr std::size_t kHistoryDepth = 3;

    std::vector<double> one_time_reals;
    std::deque<InputRecord> history;  // oldest first, strictly increasing t
    std::optional<double> last_break_emitted;

    // Appends a record, dropping the oldest beyond kHistoryDepth.
    void push(double t, std::span<const double> inputs);
};

/// Predicts when the block's crossing signal reaches zero, extrapolating
/// from the stored history and the current inputs at t0. Returns t' only
/// when t0 < t' <= t0 + dt_normal.
std::optional<double> propose_crossing(const BlockTemplate& t, const BlockRuntimeState& state, double t0,
                                       std::span<const double> inputs_now, double dt_normal,
                                       ExtrapMode mode);

/// Root of the line through (t1,u1), (t0,u0) beyond t0, unbounded.
std::optional<double> linear_crossing(double t1, double u1, double t0, double u0);
/// Smallest root > t0 of the parabola through three samples, with the
/// linear fallback for collinear samples.
std::optional<double> quadratic_crossing(double t2, double u2, double t1, double u1, double t0, double u0);

}  // namespace flowsim
