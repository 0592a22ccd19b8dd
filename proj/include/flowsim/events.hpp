#pragma once

// Break scheduling and crossing plans.

#include <optional>
#include <vector>

#include "flowsim/assembly.hpp"
#include "flowsim/config.hpp"

namespace flowsim {

struct PendingBreak {
    double t = 0.0;
    int instance = -1;
};

struct BreakSchedule {
    std::vector<PendingBreak> pending;  // ascending, deduplicated

    bool empty() const { return pending.empty(); }
    std::optional<double> first() const;
    // Adds a break unless one lies within 1e-12*max(1,|t|) of it.
    void add(double t, int instance);
};

/// Next break of every break-capable instance, restricted to (t_now, t_end].
BreakSchedule collect_breaks(const SystemGraph& graph, double t_now, double t_end);

/// Step that lands exactly on the first pending break when the proposal
/// would pass it.
double clamp_step(double t_now, double h_proposed, const BreakSchedule& schedule);

struct CrossingProposal {
    int instance = -1;
    double t_prime = 0.0;
};

struct CrossingPlan {
    double t_prime = 0.0;
    double t_before = 0.0;
    double t_after = 0.0;
    int instance = -1;
};

/// Earliest proposal wins; none if its bracket would not start after t_now
/// or it lies beyond t_now + dt_normal.
std::optional<CrossingPlan> plan_crossing(const std::vector<CrossingProposal>& proposals, double t_now,
                                          double dt_normal, double delta);

double crossing_delta(const EventOptions& opts, double dt_normal);

}  // namespace flowsim
