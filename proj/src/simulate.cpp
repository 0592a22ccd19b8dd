#include "flowsim/simulate.hpp"

#include <algorithm>

namespace flowsim {

Simulation prepare_simulation(const NetlistDocument& doc, const SolveSpec& overrides) {
    Simulation sim;
    const SolveSpec spec = merge(overrides, doc.top.solve);
    sim.config = make_solver_config(spec);
    sim.events = make_event_options(spec);
    sim.flat = flatten(doc);
    sim.outputs = resolve_outputs(sim.flat.outvars, sim.flat);
    sim.graph = build(sim.flat);
    sim.groups = sim.flat.outputs;
    if (sim.groups.empty() && !sim.outputs.empty()) {
        OutputGroup g;
        for (const auto& o : sim.outputs) g.aliases.push_back(o.alias);
        sim.groups.push_back(std::move(g));
    }
    return sim;
}

TransientResult run_simulation(const Simulation& sim) {
    std::vector<RecordSpec> records;
    for (const auto& g : sim.groups) {
        RecordSpec r;
        r.aliases = g.aliases;
        r.interval = g.interval;
        std::vector<ResolvedOutput> chosen;
        for (const auto& a : g.aliases) {
            auto it = std::find_if(sim.outputs.begin(), sim.outputs.end(),
                                   [&](const ResolvedOutput& o) { return o.alias == a; });
            if (it == sim.outputs.end()) throw ParseError("output alias '" + a + "' is not declared");
            chosen.push_back(*it);
        }
        r.probes = make_probes(sim.graph, chosen);
        records.push_back(std::move(r));
    }
    return run_transient(sim.graph, sim.config, sim.events, records);
}

TransientResult simulate_text(const std::string& netlist, const SolveSpec& overrides) {
    const NetlistDocument doc = parse_netlist(netlist);
    return run_simulation(prepare_simulation(doc, overrides));
}

}  // namespace flowsim
