#pragma once

// Netlist to waveforms in one place: flatten, build, configure, run.

#include <string>
#include <vector>

#include "flowsim/assembly.hpp"
#include "flowsim/config.hpp"
#include "flowsim/netlist.hpp"
#include "flowsim/solvers.hpp"

namespace flowsim {

struct Simulation {
    FlatNetlist flat;
    SystemGraph graph;
    SolverConfig config;
    EventOptions events;
    std::vector<ResolvedOutput> outputs;
    // When the netlist declares no output groups, a single group with an
    // empty file name holds every outvar.
    std::vector<OutputGroup> groups;
};

/// `overrides` take precedence over the netlist's solve line.
Simulation prepare_simulation(const NetlistDocument& doc, const SolveSpec& overrides = {});

TransientResult run_simulation(const Simulation& sim);

/// Convenience for tests and tools: parse text, prepare, run.
TransientResult simulate_text(const std::string& netlist, const SolveSpec& overrides = {});

}  // namespace flowsim
