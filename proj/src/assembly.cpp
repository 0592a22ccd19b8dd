#include "flowsim/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <queue>

namespace flowsim {

int SystemGraph::var_index(std::string_view name) const {
    auto it = std::lower_bound(var_names.begin(), var_names.end(), name);
    return it != var_names.end() && *it == name ? static_cast<int>(it - var_names.begin()) : -1;
}

int SystemGraph::instance_index(std::string_view path) const {
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].path == path) return static_cast<int>(i);
    }
    return -1;
}

namespace {

// Finds one cycle among the nodes left over by Kahn's algorithm.
std::vector<int> find_cycle(const std::vector<std::vector<int>>& succ, const std::vector<int>& indeg) {
    const int n = static_cast<int>(succ.size());
    std::vector<int> color(static_cast<std::size_t>(n), 0), parent(static_cast<std::size_t>(n), -1);
    std::vector<int> cycle;
    std::function<bool(int)> dfs = [&](int u) {
        color[static_cast<std::size_t>(u)] = 1;
        for (int v : succ[static_cast<std::size_t>(u)]) {
            if (indeg[static_cast<std::size_t>(v)] == 0) continue;
            if (color[static_cast<std::size_t>(v)] == 1) {
                cycle.push_back(v);
                for (int w = u; w != v; w = parent[static_cast<std::size_t>(w)]) cycle.push_back(w);
                std::reverse(cycle.begin(), cycle.end());
                return true;
            }
            if (color[static_cast<std::size_t>(v)] == 0) {
                parent[static_cast<std::size_t>(v)] = u;
                if (dfs(v)) return true;
            }
        }
        color[static_cast<std::size_t>(u)] = 2;
        return false;
    };
    for (int u = 0; u < n; ++u) {
        if (indeg[static_cast<std::size_t>(u)] > 0 && color[static_cast<std::size_t>(u)] == 0 && dfs(u)) break;
    }
    return cycle;
}

struct Ordering {
    std::vector<int> order;
    std::vector<int> cycle;
};

Ordering topo(const SystemGraph& g) {
    const int n = static_cast<int>(g.instances.size());
    std::vector<std::vector<int>> succ(static_cast<std::size_t>(n));
    std::vector<int> indeg(static_cast<std::size_t>(n), 0);
    std::vector<bool> is_eval(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) {
        is_eval[static_cast<std::size_t>(i)] = g.instances[static_cast<std::size_t>(i)].tmpl->info().kind == BlockKind::evaluate;
    }
    for (int i = 0; i < n; ++i) {
        if (!is_eval[static_cast<std::size_t>(i)]) continue;
        const auto& gi = g.instances[static_cast<std::size_t>(i)];
        const int n_in = static_cast<int>(gi.tmpl->info().inputs.size());
        std::vector<int> preds;
        for (int k = 0; k < n_in; ++k) {
            const int d = g.driver[static_cast<std::size_t>(gi.var[static_cast<std::size_t>(k)])];
            if (is_eval[static_cast<std::size_t>(d)]) preds.push_back(d);
        }
        std::sort(preds.begin(), preds.end());
        preds.erase(std::unique(preds.begin(), preds.end()), preds.end());
        for (int d : preds) {
            succ[static_cast<std::size_t>(d)].push_back(i);
            ++indeg[static_cast<std::size_t>(i)];
        }
    }
    Ordering out;
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int i = 0; i < n; ++i) {
        if (is_eval[static_cast<std::size_t>(i)] && indeg[static_cast<std::size_t>(i)] == 0) ready.push(i);
    }
    std::vector<int> deg = indeg;
    while (!ready.empty()) {
        const int u = ready.top();
        ready.pop();
        out.order.push_back(u);
        for (int v : succ[static_cast<std::size_t>(u)]) {
            if (--deg[static_cast<std::size_t>(v)] == 0) ready.push(v);
        }
    }
    const auto n_eval = std::count(is_eval.begin(), is_eval.end(), true);
    if (static_cast<long>(out.order.size()) != n_eval) out.cycle = find_cycle(succ, deg);
    return out;
}

std::string describe_cycle(const SystemGraph& g, const std::vector<int>& cycle) {
    std::string s;
    for (int i : cycle) s += g.instances[static_cast<std::size_t>(i)].path + " -> ";
    if (!cycle.empty()) s += g.instances[static_cast<std::size_t>(cycle.front())].path;
    return s;
}

}  // namespace

SystemGraph build(const FlatNetlist& flat) {
    SystemGraph g;

    std::map<std::string, int> names;  // ordered: indices follow name order
    for (const auto& inst : flat.instances) {
        for (const auto& n : inst.nets) names.emplace(n, 0);
        for (const auto& a : inst.tmpl->info().aux) names.emplace(inst.path + ":" + a, 0);
    }
    int next = 0;
    for (auto& [name, idx] : names) {
        idx = next++;
        g.var_names.push_back(name);
    }
    const auto nv = static_cast<std::size_t>(next);
    g.driver.assign(nv, -1);
    g.state_slot.assign(nv, -1);
    std::vector<std::vector<std::string>> users(nv);

    for (const auto& inst : flat.instances) {
        GraphInstance gi;
        gi.path = inst.path;
        gi.tmpl = inst.tmpl;
        gi.params = inst.params;
        const auto& info = inst.tmpl->info();
        for (const auto& n : inst.nets) gi.var.push_back(names.at(n));
        for (const auto& a : info.aux) gi.var.push_back(names.at(inst.path + ":" + a));
        try {
            gi.one_time = inst.tmpl->one_time(inst.params);
        } catch (const TemplateError& e) {
            throw TemplateError("instance '" + inst.path + "': " + e.what());
        }
        const int idx = static_cast<int>(g.instances.size());
        auto define = [&](int local) {
            const int v = gi.var[static_cast<std::size_t>(local)];
            const int prev = g.driver[static_cast<std::size_t>(v)];
            if (prev >= 0) {
                throw AssembleError("net '" + g.var_names[static_cast<std::size_t>(v)] + "' is driven by both '" +
                                    g.instances[static_cast<std::size_t>(prev)].path + "' and '" + inst.path + "'");
            }
            g.driver[static_cast<std::size_t>(v)] = idx;
            return v;
        };
        if (info.kind == BlockKind::evaluate) {
            for (int j = 0; j < info.n_g(); ++j) gi.g_row.push_back(define(info.first_output() + j));
        } else {
            for (int i = 0; i < info.n_f(); ++i) {
                const int v = define(info.f_var[static_cast<std::size_t>(i)]);
                gi.g_row.push_back(v);
                g.state_slot[static_cast<std::size_t>(v)] = 0;
            }
            g.integrate_instances.push_back(idx);
        }
        for (std::size_t k = 0; k < info.inputs.size(); ++k) {
            users[static_cast<std::size_t>(gi.var[k])].push_back(inst.path + "." + info.inputs[k]);
        }
        g.instances.push_back(std::move(gi));
    }

    for (std::size_t v = 0; v < nv; ++v) {
        if (g.driver[v] < 0) {
            std::string who;
            for (const auto& u : users[v]) who += (who.empty() ? "" : ", ") + u;
            throw AssembleError("net '" + g.var_names[v] + "' has no driver" + (who.empty() ? "" : " (read by " + who + ")"));
        }
        if (g.state_slot[v] >= 0) {
            g.state_slot[v] = static_cast<int>(g.state_vars.size());
            g.state_vars.push_back(static_cast<int>(v));
        } else {
            g.algebraic_vars.push_back(static_cast<int>(v));
        }
    }
    std::size_t n_rows = 0;
    for (const auto& gi : g.instances) n_rows += gi.g_row.size();
    if (n_rows != nv) {
        throw AssembleError("equation count " + std::to_string(n_rows) + " does not match variable count " +
                            std::to_string(nv));
    }

    Ordering ord = topo(g);
    if (ord.cycle.empty()) {
        g.eval_order = std::move(ord.order);
    } else {
        g.has_eval_order = false;
        g.loops.push_back(ord.cycle);
        g.loop_message = "algebraic loop: " + describe_cycle(g, ord.cycle);
    }
    return g;
}

std::vector<int> order_evaluate_blocks(const SystemGraph& graph) {
    Ordering ord = topo(graph);
    if (!ord.cycle.empty()) throw AssembleError("algebraic loop: " + describe_cycle(graph, ord.cycle));
    return ord.order;
}

std::vector<double> initial_values(const SystemGraph& graph) {
    std::vector<double> x(static_cast<std::size_t>(graph.n_vars()), 0.0);
    std::vector<double> st;
    for (int i : graph.integrate_instances) {
        const auto& gi = graph.instances[static_cast<std::size_t>(i)];
        const auto& info = gi.tmpl->info();
        st.assign(static_cast<std::size_t>(info.n_f()), 0.0);
        gi.tmpl->startup(gi.params, st);
        for (int f = 0; f < info.n_f(); ++f) {
            x[static_cast<std::size_t>(gi.g_row[static_cast<std::size_t>(f)])] = st[static_cast<std::size_t>(f)];
        }
    }
    return x;
}

Bdf2Coefficients bdf2_coefficients(double h1, double h2) {
    const double d = h1 * (2.0 * h2 + h1);
    return {(h1 + h2) * (h1 + h2) / d, h2 * h2 / d, h2 * (h1 + h2) / (2.0 * h2 + h1)};
}

std::vector<Probe> make_probes(const SystemGraph& graph, const std::vector<ResolvedOutput>& outputs) {
    std::vector<Probe> probes;
    for (const auto& o : outputs) {
        Probe p;
        if (const auto* n = std::get_if<NetRef>(&o.binding)) {
            p.var = graph.var_index(n->net);
            if (p.var < 0) throw AssembleError("output '" + o.alias + "': no net '" + n->net + "'");
        } else {
            const auto& r = std::get<OutParamRef>(o.binding);
            p.instance = graph.instance_index(r.instance);
            if (p.instance < 0) throw AssembleError("output '" + o.alias + "': no instance '" + r.instance + "'");
            const auto& ops = graph.instances[static_cast<std::size_t>(p.instance)].tmpl->info().out_params;
            auto it = std::find(ops.begin(), ops.end(), r.param);
            if (it == ops.end()) throw AssembleError("output '" + o.alias + "': no output parameter '" + r.param + "'");
            p.param = static_cast<int>(it - ops.begin());
        }
        probes.push_back(p);
    }
    return probes;
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(const SystemGraph& graph) : graph_(&graph) {
    const auto& g = graph;
    const int n = g.n_vars();
    raw_g_.assign(static_cast<std::size_t>(n), 0.0);
    const_ready_.assign(g.instances.size(), false);

    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& gi : g.instances) {
        sinks_.emplace_back(gi.tmpl->info());
        for (const auto& e : sinks_.back().entries()) {
            trip.emplace_back(gi.g_row[static_cast<std::size_t>(e.g)], gi.var[static_cast<std::size_t>(e.var)], 0.0);
        }
    }
    for (int v : g.state_vars) trip.emplace_back(v, v, 0.0);
    jac_.resize(n, n);
    jac_.setFromTriplets(trip.begin(), trip.end());
    jac_.makeCompressed();

    auto pos = [&](int row, int col) {
        const double* base = jac_.valuePtr();
        return static_cast<int>(&jac_.coeffRef(row, col) - base);
    };
    for (std::size_t i = 0; i < g.instances.size(); ++i) {
        const auto& gi = g.instances[i];
        std::vector<int> p;
        for (const auto& e : sinks_[i].entries()) {
            p.push_back(pos(gi.g_row[static_cast<std::size_t>(e.g)], gi.var[static_cast<std::size_t>(e.var)]));
        }
        entry_pos_.push_back(std::move(p));
    }
    for (int v : g.state_vars) diag_pos_.push_back(pos(v, v));
}

void Evaluator::load(const GraphInstance& gi, std::span<const double> x) {
    local_.resize(gi.var.size());
    for (std::size_t k = 0; k < gi.var.size(); ++k) local_[k] = x[static_cast<std::size_t>(gi.var[k])];
}

void Evaluator::check_finite(std::span<const double> v, const GraphInstance& gi, double t, const char* what) {
    for (double d : v) {
        if (!std::isfinite(d)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.9g", t);
            throw ConvergeError("non-finite " + std::string(what) + " from block '" + gi.path + "' (" + gi.tmpl->name() +
                                ") at t=" + buf);
        }
    }
}

void Evaluator::gather_inputs(int instance, std::span<const double> x, std::vector<double>& inputs) const {
    const auto& gi = graph_->instances[static_cast<std::size_t>(instance)];
    const auto n_in = gi.tmpl->info().inputs.size();
    inputs.resize(n_in);
    for (std::size_t k = 0; k < n_in; ++k) inputs[k] = x[static_cast<std::size_t>(gi.var[k])];
}

void Evaluator::eval_algebraic(double t, std::span<double> x) {
    const auto& g = *graph_;
    if (!g.has_eval_order) throw AssembleError(g.loop_message + "; explicit methods need an acyclic evaluation order");
    for (int i : g.eval_order) {
        const auto& gi = g.instances[static_cast<std::size_t>(i)];
        const auto& info = gi.tmpl->info();
        load(gi, x);
        gbuf_.resize(info.outputs.size());
        gi.tmpl->evaluate(BlockCall{t, local_, gi.params, gi.one_time}, gbuf_);
        check_finite(gbuf_, gi, t, "output");
        for (std::size_t j = 0; j < gbuf_.size(); ++j) {
            x[static_cast<std::size_t>(gi.var[info.inputs.size() + j])] = gbuf_[j];
        }
    }
    ++evaluations_;
}

void Evaluator::rhs(double t, std::span<double> x, std::span<double> dxdt) {
    eval_algebraic(t, x);
    const auto& g = *graph_;
    for (int i : g.integrate_instances) {
        const auto& gi = g.instances[static_cast<std::size_t>(i)];
        load(gi, x);
        gbuf_.resize(gi.g_row.size());
        gi.tmpl->derivatives(BlockCall{t, local_, gi.params, gi.one_time}, gbuf_);
        check_finite(gbuf_, gi, t, "derivative");
        for (std::size_t f = 0; f < gbuf_.size(); ++f) {
            dxdt[static_cast<std::size_t>(g.state_slot[static_cast<std::size_t>(gi.g_row[f])])] = gbuf_[f];
        }
    }
}

void Evaluator::state_g(double t, std::span<const double> x, std::span<double> out) {
    const auto& g = *graph_;
    for (int i : g.integrate_instances) {
        const auto& gi = g.instances[static_cast<std::size_t>(i)];
        load(gi, x);
        gbuf_.resize(gi.g_row.size());
        gi.tmpl->residual(BlockCall{t, local_, gi.params, gi.one_time}, gbuf_, nullptr);
        check_finite(gbuf_, gi, t, "residual");
        for (std::size_t f = 0; f < gbuf_.size(); ++f) {
            out[static_cast<std::size_t>(g.state_slot[static_cast<std::size_t>(gi.g_row[f])])] = gbuf_[f];
        }
    }
}

void Evaluator::raw_residual(double t, std::span<const double> x, bool with_jacobian) {
    const auto& g = *graph_;
    for (std::size_t i = 0; i < g.instances.size(); ++i) {
        const auto& gi = g.instances[i];
        const auto& info = gi.tmpl->info();
        load(gi, x);
        gbuf_.resize(gi.g_row.size());
        JacobianSink* sink = nullptr;
        const bool cached = info.jacobian == JacobianKind::constant && const_ready_[i];
        if (with_jacobian && !cached) {
            sink = &sinks_[i];
            sink->clear();
        }
        gi.tmpl->residual(BlockCall{t, local_, gi.params, gi.one_time}, gbuf_, sink);
        check_finite(gbuf_, gi, t, "residual");
        if (sink) {
            for (const auto& e : sink->entries()) {
                if (!std::isfinite(e.value)) check_finite(std::span<const double>(&e.value, 1), gi, t, "Jacobian entry");
            }
            if (info.jacobian == JacobianKind::constant) const_ready_[i] = true;
        }
        for (std::size_t k = 0; k < gbuf_.size(); ++k) raw_g_[static_cast<std::size_t>(gi.g_row[k])] = gbuf_[k];
    }
    ++evaluations_;
}

namespace {

// Scale on g for the state rows.
double g_scale(const Scheme& s) {
    switch (s.kind) {
        case SchemeKind::backward_euler: return s.h;
        case SchemeKind::trapezoidal: return 0.5 * s.h;
        case SchemeKind::bdf2: return bdf2_coefficients(s.h_prev, s.h).b;
        case SchemeKind::algebraic: return 0.0;
    }
    return 0.0;
}

}  // namespace

void Evaluator::form_residual(const Scheme& s, std::span<const double> x, std::span<double> r) const {
    const auto& g = *graph_;
    const double c = g_scale(s);
    Bdf2Coefficients bc{};
    if (s.kind == SchemeKind::bdf2) bc = bdf2_coefficients(s.h_prev, s.h);
    for (std::size_t v = 0; v < raw_g_.size(); ++v) {
        const int slot = g.state_slot[v];
        if (slot < 0) {
            r[v] = raw_g_[v];
            continue;
        }
        const double y = x[v], y_old = s.x_old[v];
        switch (s.kind) {
            case SchemeKind::backward_euler: r[v] = y - y_old - c * raw_g_[v]; break;
            case SchemeKind::trapezoidal:
                r[v] = y - y_old - c * (raw_g_[v] + s.g_old[static_cast<std::size_t>(slot)]);
                break;
            case SchemeKind::bdf2: r[v] = y - bc.a1 * y_old + bc.a0 * s.x_older[v] - bc.b * raw_g_[v]; break;
            case SchemeKind::algebraic: r[v] = y - y_old; break;
        }
    }
}

void Evaluator::assemble_residual(const Scheme& s, std::span<const double> x, std::span<double> r) {
    if (s.kind != SchemeKind::algebraic && !(s.h > 0.0)) throw AssembleError("step size must be positive");
    raw_residual(s.t_new, x, false);
    form_residual(s, x, r);
}

void Evaluator::assemble(const Scheme& s, std::span<const double> x, std::span<double> r) {
    if (s.kind != SchemeKind::algebraic && !(s.h > 0.0)) throw AssembleError("step size must be positive");
    raw_residual(s.t_new, x, true);
    form_residual(s, x, r);

    const auto& g = *graph_;
    const double c = g_scale(s);
    double* val = jac_.valuePtr();
    std::fill(val, val + jac_.nonZeros(), 0.0);
    for (std::size_t i = 0; i < g.instances.size(); ++i) {
        const auto& gi = g.instances[i];
        const auto& entries = sinks_[i].entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const int row = gi.g_row[static_cast<std::size_t>(entries[k].g)];
            const double scale = g.state_slot[static_cast<std::size_t>(row)] >= 0 ? -c : 1.0;
            val[entry_pos_[i][k]] += scale * entries[k].value;
        }
    }
    for (int p : diag_pos_) val[p] += 1.0;
}

void Evaluator::sample(double t, std::span<const double> x, const std::vector<Probe>& probes, std::span<double> out) {
    std::vector<double> ops;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const Probe& p = probes[k];
        if (p.var >= 0) {
            out[k] = x[static_cast<std::size_t>(p.var)];
            continue;
        }
        const auto& gi = graph_->instances[static_cast<std::size_t>(p.instance)];
        load(gi, x);
        ops.assign(gi.tmpl->info().out_params.size(), 0.0);
        gi.tmpl->out_params(BlockCall{t, local_, gi.params, gi.one_time}, ops);
        out[k] = ops[static_cast<std::size_t>(p.param)];
    }
}

}  // namespace flowsim
