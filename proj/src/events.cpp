#include "flowsim/events.hpp"

#include <algorithm>
#include <cmath>

namespace flowsim {

namespace {

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

}  // namespace

std::optional<double> BreakSchedule::first() const {
    if (pending.empty()) return std::nullopt;
    return pending.front().t;
}

void BreakSchedule::add(double t, int instance) {
    auto it = std::lower_bound(pending.begin(), pending.end(), t,
                               [](const PendingBreak& b, double v) { return b.t < v; });
    if (it != pending.end() && same_time(it->t, t)) return;
    if (it != pending.begin() && same_time(std::prev(it)->t, t)) return;
    pending.insert(it, PendingBreak{t, instance});
}

BreakSchedule collect_breaks(const SystemGraph& graph, double t_now, double t_end) {
    BreakSchedule s;
    for (std::size_t i = 0; i < graph.instances.size(); ++i) {
        const auto& gi = graph.instances[i];
        if (!gi.tmpl->info().has_breaks) continue;
        auto tb = gi.tmpl->next_break(t_now, gi.params);
        // A break within rounding of t_now has already been reached.
        while (tb && *tb <= t_end && same_time(*tb, t_now)) tb = gi.tmpl->next_break(*tb, gi.params);
        if (tb && *tb > t_now && *tb <= t_end) s.add(*tb, static_cast<int>(i));
    }
    return s;
}

double clamp_step(double t_now, double h_proposed, const BreakSchedule& schedule) {
    const auto tb = schedule.first();
    if (tb && t_now + h_proposed > *tb) return *tb - t_now;
    return h_proposed;
}

std::optional<CrossingPlan> plan_crossing(const std::vector<CrossingProposal>& proposals, double t_now,
                                          double dt_normal, double delta) {
    const CrossingProposal* best = nullptr;
    for (const auto& p : proposals) {
        if (!(p.t_prime > t_now) || p.t_prime > t_now + dt_normal) continue;
        if (!best || p.t_prime < best->t_prime) best = &p;
    }
    if (!best) return std::nullopt;
    CrossingPlan plan{best->t_prime, best->t_prime - delta, best->t_prime + delta, best->instance};
    if (!(plan.t_before > t_now)) return std::nullopt;
    return plan;
}

double crossing_delta(const EventOptions& opts, double dt_normal) {
    return std::max(opts.delta_rel * dt_normal, opts.delta_floor);
}

}  // namespace flowsim
