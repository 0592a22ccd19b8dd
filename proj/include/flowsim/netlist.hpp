#pragma once

// Netlist text format, hierarchical description and flattening.
//
// Grammar (one statement per line, '#' starts a comment):
//
//   include "lib.net"
//   param  name=expr ...                 top level: constants; subckt: defaults
//   let    name = expr
//   block  <name> <type> port=net ... param=value ...
//   subckt <name> in=pad[:net],... out=pad[:net],...
//   set    <instance>.<param> = expr     (inside subckt)
//   export <name> = <net | instance.outparam | instance.export>
//   endsubckt
//   outvar <alias> = <path>
//   output file=<name> vars=a,b,... [interval=expr] [svg=<name>]
//   solve  method=<name> key=expr ...
//
// Values containing spaces are wrapped in braces: k={lr / (lm*le)}.
// Net names ">x" and "x>" are the sink and source ends of a virtual net x.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flowsim/block.hpp"
#include "flowsim/config.hpp"
#include "flowsim/error.hpp"
#include "flowsim/expr.hpp"
#include "flowsim/output.hpp"

namespace flowsim {

struct PortBinding {
    std::string port;
    std::string net;  // as written, virtual markers included
    SourceLoc loc;
};

struct ParamBinding {
    std::string name;
    std::string text;  // expression text, or the raw value of a string param
    std::optional<ParamExpr> expr;
    SourceLoc loc;
};

struct InstanceDecl {
    std::string name;
    std::string type;
    bool is_subckt = false;
    std::vector<PortBinding> ports;
    std::vector<ParamBinding> params;
    SourceLoc loc;
};

struct ParamDecl {
    std::string name;
    ParamExpr expr;
    SourceLoc loc;
};

// `let name = expr` (target has no dot) or `set inst.param = expr`.
struct Assignment {
    bool is_set = false;
    std::string target;
    ParamExpr expr;
    SourceLoc loc;
};

struct OutvarDecl {
    std::string alias;
    std::string path;
    SourceLoc loc;
};

struct SolveSpec {
    std::optional<Method> method;
    std::optional<double> t_start, t_end, h_init, h_min, h_max, tol_lte;
    std::optional<int> newton_max_iters;
    std::optional<double> newton_tol_abs, newton_tol_rel;
    std::optional<bool> events;
    std::optional<ExtrapMode> extrap;
    std::optional<double> delta_rel;

    bool operator==(const SolveSpec&) const = default;
};

/// Fills unset fields from `lower`; `upper` wins where both are set.
SolveSpec merge(const SolveSpec& upper, const SolveSpec& lower);
/// Defaults for anything unset, then validation.
SolverConfig make_solver_config(const SolveSpec& spec);
EventOptions make_event_options(const SolveSpec& spec);

struct HighNetlist {
    std::vector<InstanceDecl> instances;
    std::vector<ParamDecl> params;
    std::vector<Assignment> derived;
    std::vector<OutvarDecl> outvars;
    std::vector<OutputGroup> outputs;
    SolveSpec solve;

    // Every net name mentioned, virtual markers stripped.
    std::set<std::string> nets() const;
};

struct PadDecl {
    std::string name;
    bool is_input = true;
    std::string net;  // internal net the pad is bound to
    SourceLoc loc;
};

struct ExportDecl {
    std::string name;
    std::string path;
    SourceLoc loc;
};

struct SubcircuitDef {
    std::string name;
    std::vector<PadDecl> pads;
    HighNetlist body;
    std::vector<ExportDecl> exports;
    SourceLoc loc;

    const PadDecl* find_pad(std::string_view pad) const;
    bool has_param(std::string_view p) const;
};

struct NetlistDocument {
    HighNetlist top;
    std::vector<SubcircuitDef> subckts;

    const SubcircuitDef* find_subckt(std::string_view name) const;
};

struct ParseOptions {
    std::string file;      // for diagnostics
    std::string base_dir;  // include resolution; defaults to the file's directory
    const TemplateRegistry* registry = nullptr;  // builtin when null
};

NetlistDocument parse_netlist(std::string_view text, const ParseOptions& opts = {});
NetlistDocument parse_netlist_file(const std::string& path, const TemplateRegistry* registry = nullptr);

struct FlatInstance {
    std::string path;
    const BlockTemplate* tmpl = nullptr;
    // net for each template port, inputs then outputs
    std::vector<std::string> nets;
    ParamValues params;
};

struct FlatNetlist {
    std::vector<FlatInstance> instances;
    std::set<std::string> nets;
    // Any net name used before merging -> surviving name.
    std::map<std::string, std::string> net_alias;
    // Exported subcircuit names "inst.name" -> leaf binding.
    std::map<std::string, OutputBinding> exports;
    std::vector<OutvarDecl> outvars;
    std::vector<OutputGroup> outputs;
    SolveSpec solve;

    const FlatInstance* find_instance(std::string_view path) const;
};

FlatNetlist flatten(const NetlistDocument& doc);

/// Resolves each outvar to a net or a leaf out-parameter. Lookup order:
/// export, net (including merged aliases), instance.outparam.
std::vector<ResolvedOutput> resolve_outputs(const std::vector<OutvarDecl>& reqs, const FlatNetlist& flat);

/// Canonical low-level text; parses back to the same flat netlist.
std::string print_flat(const FlatNetlist& flat);

// Nearest candidate by edit distance (adjacent swaps count as one edit).
std::optional<std::string> nearest_name(std::string_view name, const std::vector<std::string>& candidates);
std::size_t edit_distance(std::string_view a, std::string_view b);

/// %.17g, the form used everywhere numbers are printed for re-reading.
std::string format_real(double v);

}  // namespace flowsim
