#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flowsim/output.hpp"
#include "flowsim/simulate.hpp"

namespace flowsim::cli {

namespace fs = std::filesystem;

namespace {

int report(const Error& e, std::ostream& err) {
    err << "flowsim: " << to_string(e.category()) << " error: " << e.what() << '\n';
    return static_cast<int>(e.category());
}

// Runs body, mapping exceptions to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        return report(e, err);
    } catch (const std::exception& e) {
        err << "flowsim: internal error: " << e.what() << '\n';
        return 70;
    }
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

std::string resolve_output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("FLOWSIM_OUTPUT_DIR"); env && *env) return env;
    return ".";
}

int cmd_run(const RunInvocation& inv, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const NetlistDocument doc = parse_netlist_file(inv.input);
        const Simulation sim = prepare_simulation(doc, inv.overrides);
        const TransientResult res = run_simulation(sim);

        const fs::path dir = resolve_output_dir(inv.output_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());

        std::vector<std::string> written;
        for (std::size_t i = 0; i < sim.groups.size(); ++i) {
            const auto& g = sim.groups[i];
            const std::string name = g.file.empty() ? stem_of(inv.input) + ".csv" : g.file;
            const fs::path csv = dir / name;
            write_csv_file(res.tables[i], csv.string());
            written.push_back(csv.string());
            if (g.svg) {
                PlotSpec spec;
                spec.title = stem_of(name);
                const fs::path svg = dir / *g.svg;
                write_svg_file(res.tables[i], spec, svg.string());
                written.push_back(svg.string());
            }
        }
        if (!inv.quiet) {
            const auto& s = res.stats;
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "%s: t=[%g, %g], %lld accepted, %lld rejected steps, %lld Newton iterations, %.3f s\n",
                          to_string(sim.config.method), sim.config.t_start, sim.config.t_end, s.accepted, s.rejected,
                          s.newton_iterations, s.wall_seconds);
            out << buf;
            for (const auto& w : written) out << "wrote " << w << '\n';
        }
        return 0;
    });
}

int cmd_check(const RunInvocation& inv, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const NetlistDocument doc = parse_netlist_file(inv.input);
        const SolveSpec spec = merge(inv.overrides, doc.top.solve);
        const SolverConfig cfg = make_solver_config(spec);
        (void)make_event_options(spec);
        const FlatNetlist flat = flatten(doc);
        (void)resolve_outputs(flat.outvars, flat);
        const SystemGraph g = build(flat);

        int status = 0;
        if (!g.has_eval_order) {
            for (const auto& loop : g.loops) {
                out << "algebraic loop:";
                for (int i : loop) out << ' ' << g.instances[static_cast<std::size_t>(i)].path;
                out << '\n';
            }
            if (!is_implicit(cfg.method)) {
                err << "flowsim: assemble error: method " << to_string(cfg.method)
                    << " is explicit and cannot evaluate an algebraic loop\n";
                status = static_cast<int>(ErrorCategory::assemble);
            }
        }
        if (status == 0) {
            out << "OK, " << g.n_vars() << " vars, " << g.n_vars() << " eqns (" << g.n_states() << " states, "
                << g.algebraic_vars.size() << " algebraic), " << g.instances.size() << " blocks\n";
        }
        return status;
    });
}

std::string flatten_text(const std::string& text) { return print_flat(flatten(parse_netlist(text))); }

int cmd_flatten(const RunInvocation& inv, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const NetlistDocument doc = parse_netlist_file(inv.input);
        const std::string text = print_flat(flatten(doc));
        if (inv.output_file.empty()) {
            out << text;
        } else {
            std::ofstream f(inv.output_file, std::ios::binary);
            if (!f) throw IoError("cannot open '" + inv.output_file + "' for writing");
            f << text;
            if (!f) throw IoError("write to '" + inv.output_file + "' failed");
        }
        return 0;
    });
}

int cmd_plot(const RunInvocation& inv, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const WaveformTable table = read_csv_file(inv.input);
        PlotSpec spec;
        spec.x = inv.x_column;
        spec.y = inv.y_columns;
        spec.title = inv.title;
        spec.width = inv.width;
        spec.height = inv.height;
        std::string dest = inv.output_file;
        if (dest.empty()) dest = (fs::path(resolve_output_dir(inv.output_dir)) / (stem_of(inv.input) + ".svg")).string();
        write_svg_file(table, spec, dest);
        if (!inv.quiet) out << "wrote " << dest << '\n';
        return 0;
    });
}

namespace {

void add_overrides(CLI::App* app, RunInvocation& inv, std::string& method, std::string& events, std::string& extrap) {
    app->add_option("--method", method, "integration method")
        ->check(CLI::IsMember({"improved_euler", "heun", "rk4", "rkf45", "bs23", "backward_euler", "trapezoidal",
                               "be_auto", "tr_auto", "trbdf2"}));
    app->add_option("--t-start", inv.overrides.t_start, "start time [s]");
    app->add_option("--t-end", inv.overrides.t_end, "end time [s]");
    app->add_option("--h-init,--step", inv.overrides.h_init, "initial / fixed step [s]");
    app->add_option("--h-min", inv.overrides.h_min, "minimum step [s]");
    app->add_option("--h-max", inv.overrides.h_max, "maximum step [s]");
    app->add_option("--tol", inv.overrides.tol_lte, "local error tolerance");
    app->add_option("--newton-max-iters", inv.overrides.newton_max_iters, "Newton iteration limit");
    app->add_option("--newton-tol-abs", inv.overrides.newton_tol_abs, "Newton residual tolerance");
    app->add_option("--newton-tol-rel", inv.overrides.newton_tol_rel, "Newton update tolerance");
    app->add_option("--events", events, "break and crossing handling")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--extrap", extrap, "crossing extrapolation")->check(CLI::IsMember({"linear", "quadratic"}));
    app->add_option("--delta-rel", inv.overrides.delta_rel, "crossing half-width relative to the normal step");
}

}  // namespace

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"flowsim: block-diagram ODE simulator"};
    app.require_subcommand(1);
    RunInvocation inv;
    std::string method, events, extrap;

    auto* run = app.add_subcommand("run", "simulate a netlist and write CSV/SVG output");
    run->add_option("netlist", inv.input, "netlist file")->required();
    run->add_option("-o,--output-dir", inv.output_dir, "output directory (default $FLOWSIM_OUTPUT_DIR or .)");
    run->add_flag("-q,--quiet", inv.quiet, "no summary");
    add_overrides(run, inv, method, events, extrap);

    auto* check = app.add_subcommand("check", "parse, flatten and build without simulating");
    check->add_option("netlist", inv.input, "netlist file")->required();
    add_overrides(check, inv, method, events, extrap);

    auto* flat = app.add_subcommand("flatten", "print the flat netlist");
    flat->add_option("netlist", inv.input, "netlist file")->required();
    flat->add_option("-o,--output", inv.output_file, "write to a file instead of stdout");

    auto* plot = app.add_subcommand("plot", "plot columns of a CSV waveform file as SVG");
    plot->add_option("csv", inv.input, "CSV file from 'run'")->required();
    plot->add_option("-x", inv.x_column, "x column")->capture_default_str();
    plot->add_option("-y", inv.y_columns, "y columns (comma separated; default all)")->delimiter(',');
    plot->add_option("-o,--output", inv.output_file, "SVG file (default <csv stem>.svg in the output directory)");
    plot->add_option("--output-dir", inv.output_dir, "output directory");
    plot->add_option("--title", inv.title, "plot title");
    plot->add_option("--width", inv.width, "width in pixels")->check(CLI::Range(100, 10000));
    plot->add_option("--height", inv.height, "height in pixels")->check(CLI::Range(100, 10000));
    plot->add_flag("-q,--quiet", inv.quiet, "no summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    if (!method.empty()) inv.overrides.method = parse_method(method);
    if (!events.empty()) inv.overrides.events = events == "on";
    if (!extrap.empty()) inv.overrides.extrap = extrap == "linear" ? ExtrapMode::linear : ExtrapMode::quadratic;

    if (run->parsed()) return cmd_run(inv, out, err);
    if (check->parsed()) return cmd_check(inv, out, err);
    if (flat->parsed()) return cmd_flatten(inv, out, err);
    return cmd_plot(inv, out, err);
}

}  // namespace flowsim::cli
