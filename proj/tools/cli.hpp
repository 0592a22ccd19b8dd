#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flowsim/netlist.hpp"

namespace flowsim::cli {

enum class Subcommand { run, check, flatten, plot };

struct RunInvocation {
    Subcommand command = Subcommand::run;
    std::string input;  // netlist, or CSV for plot
    SolveSpec overrides;
    std::string output_dir;  // empty: $FLOWSIM_OUTPUT_DIR, then "."
    std::string output_file;  // flatten/plot destination; empty: stdout / derived name
    bool quiet = false;

    // plot
    std::string x_column = "time";
    std::vector<std::string> y_columns;
    std::string title;
    int width = 800;
    int height = 480;
};

// Each returns the process exit status: 0 ok, 1 parse, 2 assemble,
// 3 converge, 4 io.
int cmd_run(const RunInvocation& inv, std::ostream& out, std::ostream& err);
int cmd_check(const RunInvocation& inv, std::ostream& out, std::ostream& err);
int cmd_flatten(const RunInvocation& inv, std::ostream& out, std::ostream& err);
int cmd_plot(const RunInvocation& inv, std::ostream& out, std::ostream& err);

/// Flattens netlist text to the canonical flat form.
std::string flatten_text(const std::string& text);

std::string resolve_output_dir(const std::string& flag);

int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace flowsim::cli
