#include "flowsim/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>

#include "flowsim/events.hpp"

namespace flowsim {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double d : v) m = std::max(m, std::abs(d));
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Newton

NewtonSolver::NewtonSolver(Evaluator& ev, const SolverConfig& cfg) : ev_(&ev), cfg_(&cfg) {}

void NewtonSolver::structural_failure() const {
    const auto& J = ev_->jacobian();
    const auto& g = ev_->graph();
    std::vector<bool> row_nz(static_cast<std::size_t>(J.rows()), false), col_nz(static_cast<std::size_t>(J.cols()), false);
    for (int c = 0; c < J.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(J, c); it; ++it) {
            if (it.value() != 0.0) {
                row_nz[static_cast<std::size_t>(it.row())] = true;
                col_nz[static_cast<std::size_t>(it.col())] = true;
            }
        }
    }
    std::string suspects;
    for (std::size_t v = 0; v < row_nz.size(); ++v) {
        if (!row_nz[v] || !col_nz[v]) suspects += (suspects.empty() ? "" : ", ") + g.var_names[v];
    }
    throw AssembleError("singular Jacobian at first factorization" +
                        (suspects.empty() ? std::string(" (no empty rows or columns; check for dependent equations)")
                                          : "; suspect equations: " + suspects));
}

NewtonStats NewtonSolver::solve(const Scheme& s, std::vector<double>& x) {
    NewtonStats st;
    r_.resize(x.size());
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(x.size()));
    for (int pass = 0; pass <= cfg_->newton_max_iters; ++pass) {
        ev_->assemble(s, x, r_);
        st.residual_norm = inf_norm(r_);
        const auto& J = ev_->jacobian();
        if (!analyzed_) {
            lu_.analyzePattern(J);
            analyzed_ = true;
        }
        lu_.factorize(J);
        if (lu_.info() != Eigen::Success) {
            if (!factored_once_) structural_failure();
            return st;
        }
        factored_once_ = true;
        for (std::size_t i = 0; i < r_.size(); ++i) rhs[static_cast<Eigen::Index>(i)] = r_[i];
        const Eigen::VectorXd dx = lu_.solve(rhs);
        double dx_norm = 0.0;
        for (Eigen::Index i = 0; i < dx.size(); ++i) dx_norm = std::max(dx_norm, std::abs(dx[i]));
        if (!std::isfinite(dx_norm)) return st;
        if (st.residual_norm <= cfg_->newton_tol_abs && dx_norm <= cfg_->newton_tol_rel * (1.0 + inf_norm(x))) {
            st.converged = true;
            return st;
        }
        if (pass == cfg_->newton_max_iters) break;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dx[static_cast<Eigen::Index>(i)];
        ++st.iterations;
        ++total_;
    }
    return st;
}

// ---------------------------------------------------------------------------

double error_norm(const SystemGraph& g, std::span<const double> e, std::span<const double> x) {
    double m = 0.0;
    for (std::size_t s = 0; s < g.state_vars.size(); ++s) {
        const double ref = 1.0 + std::abs(x[static_cast<std::size_t>(g.state_vars[s])]);
        m = std::max(m, std::abs(e[s]) / ref);
    }
    return m;
}

double controller_step(const SolverConfig& cfg, double h, double err, double order) {
    double factor = cfg.grow_cap;
    if (err > 0.0) factor = std::clamp(cfg.safety * std::pow(cfg.tol_lte / err, 1.0 / order), cfg.shrink_cap, cfg.grow_cap);
    return std::clamp(h * factor, cfg.h_min, cfg.h_max);
}

void consistent_initial(Evaluator& ev, NewtonSolver* newton, double t, std::vector<double>& x) {
    const auto& g = ev.graph();
    if (g.has_eval_order) {
        ev.eval_algebraic(t, x);
        return;
    }
    if (!newton) throw AssembleError(g.loop_message);
    const std::vector<double> frozen = x;
    Scheme s;
    s.kind = SchemeKind::algebraic;
    s.t_new = t;
    s.x_old = frozen;
    const NewtonStats st = newton->solve(s, x);
    if (!st.converged) throw ConvergeError("could not find consistent initial values at t=" + fmt(t));
}

// ---------------------------------------------------------------------------
// Explicit methods

namespace {

class Stages {
public:
    Stages(Evaluator& ev, std::span<const double> x) : ev_(ev), g_(ev.graph()), x0_(x.begin(), x.end()) {
        y0_.resize(static_cast<std::size_t>(g_.n_states()));
        for (std::size_t s = 0; s < y0_.size(); ++s) y0_[s] = x0_[static_cast<std::size_t>(g_.state_vars[s])];
        work_ = x0_;
    }

    std::size_t n() const { return y0_.size(); }
    const std::vector<double>& y0() const { return y0_; }

    // f at (t, y0 + h * sum_j a_j k_j).
    std::vector<double> f(double t, double h, std::initializer_list<std::pair<double, const std::vector<double>*>> terms) {
        for (std::size_t s = 0; s < n(); ++s) {
            double acc = 0.0;
            for (const auto& [a, k] : terms) acc += a * (*k)[s];
            work_[static_cast<std::size_t>(g_.state_vars[s])] = y0_[s] + h * acc;
        }
        std::vector<double> k(n());
        ev_.rhs(t, work_, k);
        return k;
    }

    // Complete vector at t_new with states y0 + h * sum_j b_j k_j.
    std::vector<double> combine(double t_new, double h,
                                std::initializer_list<std::pair<double, const std::vector<double>*>> terms) {
        std::vector<double> x = x0_;
        for (std::size_t s = 0; s < n(); ++s) {
            double acc = 0.0;
            for (const auto& [b, k] : terms) acc += b * (*k)[s];
            x[static_cast<std::size_t>(g_.state_vars[s])] = y0_[s] + h * acc;
        }
        ev_.eval_algebraic(t_new, x);
        return x;
    }

private:
    Evaluator& ev_;
    const SystemGraph& g_;
    std::vector<double> x0_;
    std::vector<double> y0_;
    std::vector<double> work_;
};

}  // namespace

std::vector<double> step_explicit_fixed(Evaluator& ev, double t, std::span<const double> x, double t_new, Method m) {
    const double h = t_new - t;
    Stages st(ev, x);
    switch (m) {
        case Method::improved_euler: {
            const auto k1 = st.f(t, h, {});
            const auto k2 = st.f(t_new, h, {{1.0, &k1}});
            return st.combine(t_new, h, {{0.5, &k1}, {0.5, &k2}});
        }
        case Method::heun: {
            const auto k1 = st.f(t, h, {});
            const auto k2 = st.f(t + h / 3.0, h, {{1.0 / 3.0, &k1}});
            const auto k3 = st.f(t + 2.0 * h / 3.0, h, {{2.0 / 3.0, &k2}});
            return st.combine(t_new, h, {{0.25, &k1}, {0.75, &k3}});
        }
        case Method::rk4: {
            const auto k1 = st.f(t, h, {});
            const auto k2 = st.f(t + 0.5 * h, h, {{0.5, &k1}});
            const auto k3 = st.f(t + 0.5 * h, h, {{0.5, &k2}});
            const auto k4 = st.f(t_new, h, {{1.0, &k3}});
            return st.combine(t_new, h, {{1.0 / 6.0, &k1}, {1.0 / 3.0, &k2}, {1.0 / 3.0, &k3}, {1.0 / 6.0, &k4}});
        }
        default: throw std::invalid_argument(std::string("not a fixed explicit method: ") + to_string(m));
    }
}

StepResult step_rkf45(Evaluator& ev, const SolverConfig& cfg, double t, std::span<const double> x, double t_new) {
    const double h = t_new - t;
    Stages st(ev, x);
    const auto k1 = st.f(t, h, {});
    const auto k2 = st.f(t + h / 4.0, h, {{1.0 / 4.0, &k1}});
    const auto k3 = st.f(t + 3.0 * h / 8.0, h, {{3.0 / 32.0, &k1}, {9.0 / 32.0, &k2}});
    const auto k4 = st.f(t + 12.0 * h / 13.0, h, {{1932.0 / 2197.0, &k1}, {-7200.0 / 2197.0, &k2}, {7296.0 / 2197.0, &k3}});
    const auto k5 = st.f(t_new, h, {{439.0 / 216.0, &k1}, {-8.0, &k2}, {3680.0 / 513.0, &k3}, {-845.0 / 4104.0, &k4}});
    const auto k6 = st.f(t + h / 2.0, h,
                         {{-8.0 / 27.0, &k1}, {2.0, &k2}, {-3544.0 / 2565.0, &k3}, {1859.0 / 4104.0, &k4}, {-11.0 / 40.0, &k5}});

    StepResult r;
    r.h_used = h;
    r.x_new = st.combine(t_new, h, {{25.0 / 216.0, &k1}, {1408.0 / 2565.0, &k3}, {2197.0 / 4104.0, &k4}, {-1.0 / 5.0, &k5}});
    std::vector<double> e(st.n());
    for (std::size_t s = 0; s < st.n(); ++s) {
        e[s] = h * (1.0 / 360.0 * k1[s] - 128.0 / 4275.0 * k3[s] - 2197.0 / 75240.0 * k4[s] + 1.0 / 50.0 * k5[s] +
                    2.0 / 55.0 * k6[s]);
    }
    r.lte_estimate = error_norm(ev.graph(), e, r.x_new);
    r.accepted = r.lte_estimate <= cfg.tol_lte;
    r.h_next = controller_step(cfg, h, r.lte_estimate, 5.0);
    return r;
}

StepResult step_bs23(Evaluator& ev, const SolverConfig& cfg, double t, std::span<const double> x, double t_new,
                     Bs23Cache* cache) {
    const double h = t_new - t;
    Stages st(ev, x);
    std::vector<double> k1;
    if (cache && cache->valid && cache->t == t && std::equal(cache->x.begin(), cache->x.end(), x.begin(), x.end())) {
        k1 = cache->k;
    } else {
        k1 = st.f(t, h, {});
    }
    const auto k2 = st.f(t + 0.5 * h, h, {{0.5, &k1}});
    const auto k3 = st.f(t + 0.75 * h, h, {{0.75, &k2}});

    StepResult r;
    r.h_used = h;
    r.x_new = st.combine(t_new, h, {{2.0 / 9.0, &k1}, {1.0 / 3.0, &k2}, {4.0 / 9.0, &k3}});
    std::vector<double> k4(st.n());
    {
        std::vector<double> xn = r.x_new;
        ev.rhs(t_new, xn, k4);
    }
    std::vector<double> e(st.n());
    for (std::size_t s = 0; s < st.n(); ++s) {
        // y3 - y2 with y2 = y0 + h (7/24 k1 + 1/4 k2 + 1/3 k3 + 1/8 k4)
        e[s] = h * ((2.0 / 9.0 - 7.0 / 24.0) * k1[s] + (1.0 / 3.0 - 1.0 / 4.0) * k2[s] +
                    (4.0 / 9.0 - 1.0 / 3.0) * k3[s] - 1.0 / 8.0 * k4[s]);
    }
    r.lte_estimate = error_norm(ev.graph(), e, r.x_new);
    r.accepted = r.lte_estimate <= cfg.tol_lte;
    r.h_next = controller_step(cfg, h, r.lte_estimate, 3.0);
    if (cache) {
        cache->valid = r.accepted;
        cache->t = t_new;
        cache->x = r.x_new;
        cache->k = std::move(k4);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Implicit methods

namespace {

std::vector<double> g_states(Evaluator& ev, double t, std::span<const double> x) {
    std::vector<double> g(static_cast<std::size_t>(ev.graph().n_states()));
    ev.state_g(t, x, g);
    return g;
}

// One BE or TR solve from (t, x) to t_new; guess is x.
NewtonStats implicit_solve(Evaluator& ev, NewtonSolver& nw, double t, std::span<const double> x, double t_new,
                           bool trapezoidal, std::vector<double>& out) {
    std::vector<double> g_old;
    Scheme s;
    s.kind = trapezoidal ? SchemeKind::trapezoidal : SchemeKind::backward_euler;
    s.t_new = t_new;
    s.h = t_new - t;
    s.x_old = x;
    if (trapezoidal) {
        g_old = g_states(ev, t, x);
        s.g_old = g_old;
    }
    out.assign(x.begin(), x.end());
    return nw.solve(s, out);
}

}  // namespace

std::vector<double> step_implicit_fixed(Evaluator& ev, NewtonSolver& nw, double t, std::span<const double> x,
                                        double t_new, Method m, NewtonStats* stats) {
    if (m != Method::backward_euler && m != Method::trapezoidal) {
        throw std::invalid_argument(std::string("not a fixed implicit method: ") + to_string(m));
    }
    std::vector<double> out;
    const NewtonStats st = implicit_solve(ev, nw, t, x, t_new, m == Method::trapezoidal, out);
    if (stats) *stats = st;
    if (!st.converged) {
        throw ConvergeError("convergence difficulties: Newton did not converge at t=" + fmt(t_new) + " (h=" +
                            fmt(t_new - t) + ", |r|=" + fmt(st.residual_norm) + ")");
    }
    return out;
}

StepResult step_nr_auto(Evaluator& ev, NewtonSolver& nw, const SolverConfig& cfg, double t, std::span<const double> x,
                        double t_new, Method m) {
    if (m != Method::be_auto && m != Method::tr_auto) {
        throw std::invalid_argument(std::string("not an iteration-controlled method: ") + to_string(m));
    }
    StepResult r;
    r.h_used = t_new - t;
    const NewtonStats st = implicit_solve(ev, nw, t, x, t_new, m == Method::tr_auto, r.x_new);
    r.newton_iters = st.iterations;
    r.newton_failed = !st.converged;
    if (!st.converged || st.iterations > cfg.nr_iters_high) {
        r.accepted = false;
        r.h_next = std::max(0.5 * r.h_used, cfg.h_min);
    } else if (st.iterations < cfg.nr_iters_low) {
        r.accepted = true;
        r.h_next = std::min(cfg.nr_grow * r.h_used, cfg.h_max);
    } else {
        r.accepted = true;
        r.h_next = std::clamp(r.h_used, cfg.h_min, cfg.h_max);
    }
    return r;
}

StepResult step_trbdf2(Evaluator& ev, NewtonSolver& nw, const SolverConfig& cfg, double t, std::span<const double> x,
                       double t_new) {
    constexpr double gam = kTrbdf2Gamma;
    const double h = t_new - t;
    const double t_g = t + gam * h;
    StepResult r;
    r.h_used = h;
    auto reject = [&]() {
        r.accepted = false;
        r.newton_failed = true;
        r.h_next = std::max(0.5 * h, cfg.h_min);
        return r;
    };

    const auto f_n = g_states(ev, t, x);
    Scheme tr;
    tr.kind = SchemeKind::trapezoidal;
    tr.t_new = t_g;
    tr.h = t_g - t;
    tr.x_old = x;
    tr.g_old = f_n;
    std::vector<double> x_g(x.begin(), x.end());
    NewtonStats st = nw.solve(tr, x_g);
    r.newton_iters += st.iterations;
    if (!st.converged) return reject();

    Scheme bdf;
    bdf.kind = SchemeKind::bdf2;
    bdf.t_new = t_new;
    bdf.h = t_new - t_g;
    bdf.x_old = x_g;
    bdf.x_older = x;
    bdf.h_prev = t_g - t;
    r.x_new = x_g;
    st = nw.solve(bdf, r.x_new);
    r.newton_iters += st.iterations;
    if (!st.converged) return reject();

    const auto f_g = g_states(ev, t_g, x_g);
    const auto f_1 = g_states(ev, t_new, r.x_new);
    const double c = (-3.0 * gam * gam + 4.0 * gam - 2.0) / (12.0 * (2.0 - gam));
    std::vector<double> e(f_n.size());
    for (std::size_t s = 0; s < e.size(); ++s) {
        e[s] = 2.0 * c * h * (f_n[s] / gam - f_g[s] / (gam * (1.0 - gam)) + f_1[s] / (1.0 - gam));
    }
    r.lte_estimate = error_norm(ev.graph(), e, r.x_new);
    r.accepted = r.lte_estimate <= cfg.tol_lte;
    r.h_next = controller_step(cfg, h, r.lte_estimate, 3.0);
    return r;
}

// ---------------------------------------------------------------------------
// Transient loop

namespace {

bool near(double a, double b, double scale) { return std::abs(a - b) <= 1e-9 * scale; }

}  // namespace

TransientResult run_transient(const SystemGraph& graph, const SolverConfig& cfg, const EventOptions& events,
                              const std::vector<RecordSpec>& records) {
    cfg.validate();
    const auto wall0 = std::chrono::steady_clock::now();
    const Method m = cfg.method;
    if (!is_implicit(m) && !graph.has_eval_order) {
        throw AssembleError(graph.loop_message + "; explicit methods need an acyclic evaluation order");
    }
    Evaluator ev(graph);
    NewtonSolver nw(ev, cfg);
    Bs23Cache bs23;

    TransientResult res;
    std::vector<Recorder> recorders;
    for (const auto& r : records) recorders.emplace_back(r.aliases, r.interval, cfg.t_start);
    std::vector<double> sample;
    auto record = [&](double t, const std::vector<double>& x) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            sample.resize(records[i].probes.size());
            ev.sample(t, x, records[i].probes, sample);
            recorders[i].record(t, sample);
        }
    };

    double t = cfg.t_start;
    std::vector<double> x = initial_values(graph);
    consistent_initial(ev, &nw, t, x);
    record(t, x);

    std::vector<int> crossing_blocks;
    for (std::size_t i = 0; i < graph.instances.size(); ++i) {
        if (graph.instances[i].tmpl->info().crossing_aware) crossing_blocks.push_back(static_cast<int>(i));
    }
    std::vector<BlockRuntimeState> cstate(graph.instances.size());
    std::vector<double> inputs;
    for (int i : crossing_blocks) {
        ev.gather_inputs(i, x, inputs);
        cstate[static_cast<std::size_t>(i)].push(t, inputs);
    }

    const bool fixed = !is_adaptive(m);
    double h = cfg.h_init;
    std::deque<double> forced;  // crossing bracket points still to visit
    int consecutive_rejects = 0;

    while (t < cfg.t_end) {
        const double h_prop = fixed ? cfg.h_init : h;
        double t_new = t + h_prop;
        // Targets within rounding of the proposal are taken exactly, so no
        // sliver step is left behind.
        auto snap = [&](double target) {
            if (target < t_new || near(target, t_new, h_prop)) t_new = target;
        };
        snap(cfg.t_end);
        if (events.enabled) {
            const BreakSchedule sched = collect_breaks(graph, t, cfg.t_end);
            if (auto tb = sched.first()) snap(*tb);
        }
        if (!forced.empty()) snap(forced.front());
        const bool clamped = t_new < t + h_prop;
        const double h_step = t_new - t;

        StepResult step;
        switch (m) {
            case Method::improved_euler:
            case Method::heun:
            case Method::rk4:
                step.x_new = step_explicit_fixed(ev, t, x, t_new, m);
                step.accepted = true;
                break;
            case Method::rkf45: step = step_rkf45(ev, cfg, t, x, t_new); break;
            case Method::bs23: step = step_bs23(ev, cfg, t, x, t_new, &bs23); break;
            case Method::backward_euler:
            case Method::trapezoidal: {
                NewtonStats ns;
                step.x_new = step_implicit_fixed(ev, nw, t, x, t_new, m, &ns);
                step.newton_iters = ns.iterations;
                step.accepted = true;
                break;
            }
            case Method::be_auto:
            case Method::tr_auto: step = step_nr_auto(ev, nw, cfg, t, x, t_new, m); break;
            case Method::trbdf2: step = step_trbdf2(ev, nw, cfg, t, x, t_new); break;
        }

        if (!step.accepted) {
            ++res.stats.rejected;
            if (++consecutive_rejects > cfg.max_rejections) {
                throw ConvergeError("step rejected " + std::to_string(consecutive_rejects) + " times in a row at t=" +
                                    fmt(t) + " (h=" + fmt(h_step) + ")");
            }
            if (h_step <= cfg.h_min * (1.0 + 1e-12)) {
                throw ConvergeError(std::string(step.newton_failed ? "Newton failed" : "error estimate above tolerance") +
                                    " at the minimum step size: t=" + fmt(t) + ", h=" + fmt(h_step));
            }
            h = step.h_next < h_step ? step.h_next : std::max(0.5 * h_step, cfg.h_min);
            continue;
        }

        consecutive_rejects = 0;
        t = t_new;
        x = std::move(step.x_new);
        ++res.stats.accepted;
        res.steps.push_back(StepRecord{t, h_step, clamped});
        record(t, x);
        if (!fixed) {
            double hn = step.h_next;
            if (clamped) hn = std::max(hn, h_prop);
            h = std::clamp(hn, cfg.h_min, cfg.h_max);
        }
        while (!forced.empty() && forced.front() <= t) forced.pop_front();

        if (events.enabled && !crossing_blocks.empty()) {
            const double dt_normal = h;
            std::vector<CrossingProposal> proposals;
            for (int i : crossing_blocks) {
                const auto& gi = graph.instances[static_cast<std::size_t>(i)];
                ev.gather_inputs(i, x, inputs);
                auto& cs = cstate[static_cast<std::size_t>(i)];
                if (forced.empty()) {
                    const ExtrapMode mode = events.extrap.value_or(gi.tmpl->extrap_mode(gi.params));
                    if (auto tp = propose_crossing(*gi.tmpl, cs, t, inputs, dt_normal, mode)) {
                        proposals.push_back({i, *tp});
                    }
                }
                cs.push(t, inputs);
            }
            if (forced.empty()) {
                if (auto plan = plan_crossing(proposals, t, dt_normal, crossing_delta(events, dt_normal))) {
                    if (plan->t_before < cfg.t_end) forced.push_back(plan->t_before);
                    if (plan->t_after < cfg.t_end) forced.push_back(plan->t_after);
                }
            }
        }
    }

    for (auto& r : recorders) res.tables.push_back(r.table());
    res.final_x = std::move(x);
    res.stats.newton_iterations = nw.total_iterations();
    res.stats.evaluations = ev.evaluations();
    res.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return res;
}

}  // namespace flowsim
