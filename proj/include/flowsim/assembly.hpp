#pragma once

// Global system: variable table, evaluation order and residual/Jacobian
// assembly.
//
// Every net and every aux variable ("instance:aux") gets a dense index,
// sorted by name. Equation row r defines variable r: the output of an
// evaluate block, or the state whose derivative an f-function gives.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "flowsim/block.hpp"
#include "flowsim/netlist.hpp"
#include "flowsim/output.hpp"

namespace flowsim {

struct GraphInstance {
    std::string path;
    const BlockTemplate* tmpl = nullptr;
    ParamValues params;
    std::vector<double> one_time;
    std::vector<int> var;    // local variable -> global index
    std::vector<int> g_row;  // g-function -> equation row
};

struct SystemGraph {
    std::vector<std::string> var_names;
    std::vector<GraphInstance> instances;
    std::vector<int> state_vars;      // global indices, ascending
    std::vector<int> algebraic_vars;  // global indices, ascending
    std::vector<int> state_slot;      // global index -> position in state_vars, or -1
    std::vector<int> driver;          // global index -> defining instance

    // Evaluate-kind instances in dependency order; empty plus loop_message
    // when the evaluate blocks form a cycle.
    std::vector<int> eval_order;
    bool has_eval_order = true;
    std::string loop_message;
    std::vector<std::vector<int>> loops;  // instance indices of each cycle found

    std::vector<int> integrate_instances;

    int n_vars() const { return static_cast<int>(var_names.size()); }
    int n_states() const { return static_cast<int>(state_vars.size()); }
    int var_index(std::string_view name) const;  // -1 if absent
    int instance_index(std::string_view path) const;
    bool is_state(int v) const { return state_slot[static_cast<std::size_t>(v)] >= 0; }
};

/// Builds the indexed system and computes one-time values. Throws
/// AssembleError on undriven or multiply driven nets.
SystemGraph build(const FlatNetlist& flat);

/// Topological order of the evaluate-kind blocks; throws AssembleError
/// naming the cycle if there is none.
std::vector<int> order_evaluate_blocks(const SystemGraph& graph);

struct StateVector {
    double t = 0.0;
    std::vector<double> values;
};

/// Start-up values in the state entries, zero elsewhere.
std::vector<double> initial_values(const SystemGraph& graph);

enum class SchemeKind { backward_euler, trapezoidal, bdf2, algebraic };

/// Time discretisation wrapped around the state rows.
///   backward_euler  r = y - y_old - h g(x)
///   trapezoidal     r = y - y_old - h/2 (g(x) + g_old)
///   bdf2            r = y - a1 y_old + a0 y_older - b g(x), unequal steps
///   algebraic       r = y - y_old  (states frozen; algebraic rows solved)
/// Algebraic rows are g(x) in every case.
struct Scheme {
    SchemeKind kind = SchemeKind::backward_euler;
    double t_new = 0.0;
    double h = 0.0;  // t_new - t_old
    std::span<const double> x_old;
    std::span<const double> g_old;    // trapezoidal: g over state slots at x_old
    std::span<const double> x_older;  // bdf2
    double h_prev = 0.0;              // bdf2: t_old - t_older
};

struct Bdf2Coefficients {
    double a1, a0, b;
};
Bdf2Coefficients bdf2_coefficients(double h_prev, double h);

/// Probe for one output column.
struct Probe {
    int var = -1;       // NetRef
    int instance = -1;  // OutParamRef
    int param = -1;
};

std::vector<Probe> make_probes(const SystemGraph& graph, const std::vector<ResolvedOutput>& outputs);

/// Per-run evaluation workspace over a shared graph.
class Evaluator {
public:
    explicit Evaluator(const SystemGraph& graph);

    const SystemGraph& graph() const { return *graph_; }

    /// Evaluates sources and evaluate blocks in order, overwriting the
    /// algebraic entries of x. Requires an evaluation order.
    void eval_algebraic(double t, std::span<double> x);

    /// eval_algebraic, then f over state slots.
    void rhs(double t, std::span<double> x, std::span<double> dxdt);

    /// g of the state rows (over state slots) at a complete x, no
    /// algebraic re-evaluation.
    void state_g(double t, std::span<const double> x, std::span<double> g);

    void assemble_residual(const Scheme& s, std::span<const double> x_new, std::span<double> r);
    /// Residual and Jacobian together; the matrix keeps a fixed pattern.
    void assemble(const Scheme& s, std::span<const double> x_new, std::span<double> r);
    const Eigen::SparseMatrix<double>& jacobian() const { return jac_; }

    void sample(double t, std::span<const double> x, const std::vector<Probe>& probes, std::span<double> out);

    // Raw local values for crossing checks.
    void gather_inputs(int instance, std::span<const double> x, std::vector<double>& inputs) const;

    long long evaluations() const { return evaluations_; }

private:
    const SystemGraph* graph_;
    std::vector<double> local_;
    std::vector<double> gbuf_;
    std::vector<double> raw_g_;
    std::vector<JacobianSink> sinks_;
    std::vector<bool> const_ready_;
    std::vector<std::vector<int>> entry_pos_;  // per instance, per sink entry: index into valuePtr
    std::vector<int> diag_pos_;                // per state slot
    Eigen::SparseMatrix<double> jac_;
    long long evaluations_ = 0;

    void load(const GraphInstance& gi, std::span<const double> x);
    void raw_residual(double t, std::span<const double> x, bool with_jacobian);
    void form_residual(const Scheme& s, std::span<const double> x, std::span<double> r) const;
    static void check_finite(std::span<const double> v, const GraphInstance& gi, double t, const char* what);
};

}  // namespace flowsim
