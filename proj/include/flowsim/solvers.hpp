#pragma once

// Integration methods, Newton-Raphson and the transient loop.
//
// Step functions take the current time t, a complete variable vector x
// (states plus consistent algebraic values) and the target time t_new.
// Passing t_new rather than h lets the loop land exactly on breaks and
// t_end. The returned vectors are complete as well.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "flowsim/assembly.hpp"
#include "flowsim/config.hpp"
#include "flowsim/output.hpp"

namespace flowsim {

struct StepResult {
    bool accepted = false;
    std::vector<double> x_new;
    double lte_estimate = 0.0;
    double h_used = 0.0;
    double h_next = 0.0;
    int newton_iters = 0;
    bool newton_failed = false;
};

struct NewtonStats {
    int iterations = 0;  // applied updates
    bool converged = false;
    double residual_norm = 0.0;
};

class NewtonSolver {
public:
    NewtonSolver(Evaluator& ev, const SolverConfig& cfg);

    /// Solves r(x) = 0 for the scheme, starting from x and overwriting it.
    /// Stops when |r|_inf <= tol_abs and |dx|_inf <= tol_rel (1 + |x|_inf).
    NewtonStats solve(const Scheme& s, std::vector<double>& x);

    long long total_iterations() const { return total_; }

private:
    Evaluator* ev_;
    const SolverConfig* cfg_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::NaturalOrdering<int>> lu_;
    bool analyzed_ = false;
    bool factored_once_ = false;
    long long total_ = 0;
    std::vector<double> r_;

    [[noreturn]] void structural_failure() const;
};

/// max_i |e_i| / (1 + |x_i|) over the state slots.
double error_norm(const SystemGraph& g, std::span<const double> e_states, std::span<const double> x);

/// Next step from an error estimate: h * clamp(safety (tol/err)^(1/order)),
/// then clamped to [h_min, h_max].
double controller_step(const SolverConfig& cfg, double h, double err, double order);

/// Makes the algebraic entries of x consistent at t.
void consistent_initial(Evaluator& ev, NewtonSolver* newton, double t, std::vector<double>& x);

std::vector<double> step_explicit_fixed(Evaluator& ev, double t, std::span<const double> x, double t_new, Method m);

StepResult step_rkf45(Evaluator& ev, const SolverConfig& cfg, double t, std::span<const double> x, double t_new);

// First-same-as-last cache for Bogacki-Shampine.
struct Bs23Cache {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> k;
    bool valid = false;
};

StepResult step_bs23(Evaluator& ev, const SolverConfig& cfg, double t, std::span<const double> x, double t_new,
                     Bs23Cache* cache = nullptr);

/// backward_euler or trapezoidal; throws ConvergeError if Newton fails.
std::vector<double> step_implicit_fixed(Evaluator& ev, NewtonSolver& nw, double t, std::span<const double> x,
                                        double t_new, Method m, NewtonStats* stats = nullptr);

StepResult step_nr_auto(Evaluator& ev, NewtonSolver& nw, const SolverConfig& cfg, double t,
                        std::span<const double> x, double t_new, Method m);

StepResult step_trbdf2(Evaluator& ev, NewtonSolver& nw, const SolverConfig& cfg, double t,
                       std::span<const double> x, double t_new);

inline constexpr double kTrbdf2Gamma = 0.58578643762690485;  // 2 - sqrt(2)

// ---------------------------------------------------------------------------

struct RecordSpec {
    std::vector<std::string> aliases;
    std::vector<Probe> probes;
    std::optional<double> interval;
};

struct StepRecord {
    double t = 0.0;  // end of the step
    double h = 0.0;
    bool clamped = false;  // shortened by a break, crossing point or t_end
};

struct RunStats {
    long long accepted = 0;
    long long rejected = 0;
    long long newton_iterations = 0;
    long long evaluations = 0;
    double wall_seconds = 0.0;
};

struct TransientResult {
    std::vector<WaveformTable> tables;
    std::vector<StepRecord> steps;
    RunStats stats;
    std::vector<double> final_x;
};

TransientResult run_transient(const SystemGraph& graph, const SolverConfig& cfg, const EventOptions& events,
                              const std::vector<RecordSpec>& records);

}  // namespace flowsim
