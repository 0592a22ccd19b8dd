#include "flowsim/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace flowsim {

namespace fs = std::filesystem;

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
            if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
                d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
            }
        }
    }
    return d[n][m];
}

std::optional<std::string> nearest_name(std::string_view name, const std::vector<std::string>& candidates) {
    std::optional<std::string> best;
    std::size_t best_d = 0;
    for (const auto& c : candidates) {
        const std::size_t d = edit_distance(name, c);
        if (!best || d < best_d || (d == best_d && c < *best)) {
            best = c;
            best_d = d;
        }
    }
    if (best && best_d > std::max<std::size_t>(2, name.size() / 2)) return std::nullopt;
    return best;
}

namespace {

std::string suggestion(std::string_view name, const std::vector<std::string>& candidates) {
    auto n = nearest_name(name, candidates);
    return n ? " (did you mean '" + *n + "'?)" : std::string();
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Identifiers, optionally dotted (flat names).
bool valid_name(std::string_view s, bool allow_dots) {
    if (s.empty() || !ident_start(s[0])) return false;
    for (std::size_t i = 1; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '.') {
            if (!allow_dots || s[i - 1] == '.' || i + 1 == s.size()) return false;
        } else if (!ident_char(c)) {
            return false;
        }
    }
    return true;
}

enum class Virtual { none, sink, source };

struct NetName {
    std::string label;
    Virtual kind = Virtual::none;
};

NetName split_net(std::string_view net) {
    if (!net.empty() && net.front() == '>') return {std::string(net.substr(1)), Virtual::sink};
    if (!net.empty() && net.back() == '>') return {std::string(net.substr(0, net.size() - 1)), Virtual::source};
    return {std::string(net), Virtual::none};
}

struct Token {
    std::string text;
    int col = 0;
};

class LineLexer {
public:
    LineLexer(std::string_view line, SourceLoc loc) : line_(line), loc_(std::move(loc)) {}

    std::vector<Token> tokens() {
        std::vector<Token> out;
        std::size_t i = 0;
        while (i < line_.size()) {
            while (i < line_.size() && std::isspace(static_cast<unsigned char>(line_[i]))) ++i;
            if (i >= line_.size()) break;
            Token tok;
            tok.col = static_cast<int>(i) + 1;
            while (i < line_.size() && !std::isspace(static_cast<unsigned char>(line_[i]))) {
                const char c = line_[i];
                if (c == '{') {
                    int depth = 0;
                    std::size_t j = i;
                    for (; j < line_.size(); ++j) {
                        if (line_[j] == '{') ++depth;
                        if (line_[j] == '}' && --depth == 0) break;
                    }
                    if (j >= line_.size()) fail(i, "unterminated '{'");
                    tok.text.append(line_.substr(i + 1, j - i - 1));
                    i = j + 1;
                } else if (c == '"') {
                    const std::size_t j = line_.find('"', i + 1);
                    if (j == std::string_view::npos) fail(i, "unterminated string");
                    tok.text.append(line_.substr(i + 1, j - i - 1));
                    i = j + 1;
                } else {
                    tok.text.push_back(c);
                    ++i;
                }
            }
            out.push_back(std::move(tok));
        }
        return out;
    }

private:
    std::string_view line_;
    SourceLoc loc_;

    [[noreturn]] void fail(std::size_t pos, const std::string& msg) const {
        SourceLoc at = loc_;
        at.column = static_cast<int>(pos) + 1;
        throw ParseError(at, msg);
    }
};

// Drops a '#' comment that is not inside braces or quotes.
std::string strip_comment(const std::string& line) {
    int depth = 0;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"') quoted = !quoted;
        if (quoted) continue;
        if (c == '{') ++depth;
        if (c == '}') --depth;
        if (c == '#' && depth <= 0) return line.substr(0, i);
    }
    return line;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::size_t end = comma == std::string_view::npos ? s.size() : comma;
        std::string item = trim(s.substr(start, end - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

class Parser {
public:
    Parser(NetlistDocument& doc, const TemplateRegistry& reg, std::vector<std::string>& include_stack)
        : doc_(doc), reg_(reg), include_stack_(include_stack) {}

    void run(std::string_view text, const std::string& file, const std::string& base_dir, bool is_include) {
        file_ = file;
        base_dir_ = base_dir;
        is_include_ = is_include;
        std::istringstream in{std::string(text)};
        std::string raw;
        int lineno = 0;
        while (std::getline(in, raw)) {
            ++lineno;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            const std::string line = strip_comment(raw);
            SourceLoc loc{file_, lineno, 0};
            auto toks = LineLexer(line, loc).tokens();
            if (toks.empty()) continue;
            statement(line, toks, lineno);
        }
        if (current_) {
            throw ParseError(current_->loc, "subckt '" + current_->name + "' is missing 'endsubckt'");
        }
    }

private:
    NetlistDocument& doc_;
    const TemplateRegistry& reg_;
    std::vector<std::string>& include_stack_;
    std::string file_;
    std::string base_dir_;
    bool is_include_ = false;
    SubcircuitDef* current_ = nullptr;
    ParamEnv top_env_;

    SourceLoc at(int line, int col) const { return SourceLoc{file_, line, col}; }

    HighNetlist& scope() { return current_ ? current_->body : doc_.top; }

    static std::pair<std::string, std::string> key_value(const Token& t, const SourceLoc& loc) {
        const auto eq = t.text.find('=');
        if (eq == std::string::npos || eq == 0) throw ParseError(loc, "expected key=value, got '" + t.text + "'");
        return {t.text.substr(0, eq), t.text.substr(eq + 1)};
    }

    // "<target> = <expr>" from the raw remainder of the line.
    std::pair<std::string, std::string> assignment(const std::string& line, const Token& kw, int lineno,
                                                   int* expr_col) const {
        const std::size_t start = static_cast<std::size_t>(kw.col - 1) + kw.text.size();
        const std::string rest = line.substr(start);
        const auto eq = rest.find('=');
        if (eq == std::string::npos) {
            throw ParseError(at(lineno, kw.col), "expected '" + kw.text + " <name> = <value>'");
        }
        std::string target = trim(rest.substr(0, eq));
        std::string value = trim(rest.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '{' && value.back() == '}') {
            value = trim(value.substr(1, value.size() - 2));
        }
        const std::size_t value_pos = line.find_first_not_of(" \t", start + eq + 1);
        *expr_col = value_pos == std::string::npos ? 0 : static_cast<int>(value_pos) + 1;
        if (value.empty()) throw ParseError(at(lineno, kw.col), "missing value after '='");
        return {target, value};
    }

    void statement(const std::string& line, const std::vector<Token>& toks, int lineno) {
        const std::string& kw = toks[0].text;
        const SourceLoc kw_loc = at(lineno, toks[0].col);
        if (kw == "include") return include(toks, lineno);
        if (kw == "param") return param(toks, lineno);
        if (kw == "let" || kw == "set") return let_or_set(line, toks, lineno, kw == "set");
        if (kw == "block") return block(toks, lineno);
        if (kw == "subckt") return subckt(toks, lineno);
        if (kw == "endsubckt" || kw == "ends") {
            if (!current_) throw ParseError(kw_loc, "'endsubckt' without 'subckt'");
            if (toks.size() > 1) throw ParseError(at(lineno, toks[1].col), "unexpected text after 'endsubckt'");
            current_ = nullptr;
            return;
        }
        if (kw == "export") return export_decl(line, toks, lineno);
        if (current_ && (kw == "outvar" || kw == "output" || kw == "solve")) {
            throw ParseError(kw_loc, "'" + kw + "' is not allowed inside a subcircuit");
        }
        if (is_include_ && (kw == "outvar" || kw == "output" || kw == "solve")) {
            throw ParseError(kw_loc, "'" + kw + "' is not allowed in an included file");
        }
        if (kw == "outvar") return outvar(line, toks, lineno);
        if (kw == "output") return output(toks, lineno);
        if (kw == "solve") return solve(toks, lineno);
        static const std::vector<std::string> keywords = {"include", "param", "let", "set", "block", "subckt",
                                                          "endsubckt", "export", "outvar", "output", "solve"};
        throw ParseError(kw_loc, "unknown statement '" + kw + "'" + suggestion(kw, keywords));
    }

    void include(const std::vector<Token>& toks, int lineno) {
        if (current_) throw ParseError(at(lineno, toks[0].col), "'include' is not allowed inside a subcircuit");
        if (toks.size() != 2) throw ParseError(at(lineno, toks[0].col), "expected: include \"file\"");
        fs::path p = toks[1].text;
        if (p.is_relative()) p = fs::path(base_dir_) / p;
        const std::string key = fs::weakly_canonical(p).string();
        if (std::find(include_stack_.begin(), include_stack_.end(), key) != include_stack_.end()) {
            throw ParseError(at(lineno, toks[1].col), "recursive include of '" + p.string() + "'");
        }
        std::ifstream in(p);
        if (!in) throw ParseError(at(lineno, toks[1].col), "cannot open include file '" + p.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        include_stack_.push_back(key);
        Parser sub(doc_, reg_, include_stack_);
        sub.top_env_ = top_env_;
        sub.run(ss.str(), p.string(), p.parent_path().string(), true);
        top_env_ = sub.top_env_;
        include_stack_.pop_back();
    }

    void param(const std::vector<Token>& toks, int lineno) {
        if (toks.size() < 2) throw ParseError(at(lineno, toks[0].col), "expected: param name=value ...");
        for (std::size_t i = 1; i < toks.size(); ++i) {
            const SourceLoc loc = at(lineno, toks[i].col);
            auto [name, value] = key_value(toks[i], loc);
            if (!valid_name(name, false)) throw ParseError(loc, "invalid parameter name '" + name + "'");
            for (const auto& p : scope().params) {
                if (p.name == name) throw ParseError(loc, "parameter '" + name + "' declared twice");
            }
            SourceLoc vloc = loc;
            vloc.column += static_cast<int>(name.size()) + 1;
            ParamDecl d{name, ParamExpr::parse(value, vloc), loc};
            if (!current_) top_env_[name] = d.expr.eval(top_env_);
            scope().params.push_back(std::move(d));
        }
    }

    void let_or_set(const std::string& line, const std::vector<Token>& toks, int lineno, bool is_set) {
        int col = 0;
        auto [target, value] = assignment(line, toks[0], lineno, &col);
        const SourceLoc loc = at(lineno, toks[0].col);
        if (is_set) {
            const auto dot = target.find('.');
            if (dot == std::string::npos || !valid_name(target.substr(0, dot), false) ||
                !valid_name(target.substr(dot + 1), false)) {
                throw ParseError(loc, "expected: set <instance>.<param> = <expr>");
            }
        } else if (!valid_name(target, false)) {
            throw ParseError(loc, "invalid name '" + target + "'");
        }
        Assignment a{is_set, target, ParamExpr::parse(value, at(lineno, col)), loc};
        if (!current_ && !is_set) top_env_[target] = a.expr.eval(top_env_);
        scope().derived.push_back(std::move(a));
    }

    void block(const std::vector<Token>& toks, int lineno) {
        if (toks.size() < 3) throw ParseError(at(lineno, toks[0].col), "expected: block <name> <type> ...");
        InstanceDecl inst;
        inst.name = toks[1].text;
        inst.type = toks[2].text;
        inst.loc = at(lineno, toks[1].col);
        if (!valid_name(inst.name, true)) throw ParseError(inst.loc, "invalid instance name '" + inst.name + "'");
        for (const auto& other : scope().instances) {
            if (other.name == inst.name) {
                throw ParseError(inst.loc, "duplicate instance name '" + inst.name + "' (first at " +
                                               other.loc.str() + ")");
            }
        }
        for (std::size_t i = 3; i < toks.size(); ++i) {
            const SourceLoc loc = at(lineno, toks[i].col);
            auto [k, v] = key_value(toks[i], loc);
            for (const auto& pb : inst.params) {
                if (pb.name == k) throw ParseError(loc, "'" + k + "' given twice on instance '" + inst.name + "'");
            }
            inst.params.push_back(ParamBinding{k, v, std::nullopt, loc});
        }
        scope().instances.push_back(std::move(inst));
    }

    void subckt(const std::vector<Token>& toks, int lineno) {
        const SourceLoc loc = at(lineno, toks[0].col);
        if (current_) throw ParseError(loc, "nested subckt definitions are not allowed");
        if (toks.size() < 2) throw ParseError(loc, "expected: subckt <name> in=... out=...");
        SubcircuitDef def;
        def.name = toks[1].text;
        def.loc = at(lineno, toks[1].col);
        if (!valid_name(def.name, false)) throw ParseError(def.loc, "invalid subckt name '" + def.name + "'");
        if (doc_.find_subckt(def.name)) throw ParseError(def.loc, "subckt '" + def.name + "' defined twice");
        if (reg_.find(def.name)) {
            throw ParseError(def.loc, "subckt '" + def.name + "' clashes with a built-in template");
        }
        for (std::size_t i = 2; i < toks.size(); ++i) {
            const SourceLoc ploc = at(lineno, toks[i].col);
            auto [k, v] = key_value(toks[i], ploc);
            if (k != "in" && k != "out") throw ParseError(ploc, "expected in=... or out=..., got '" + k + "'");
            for (const auto& item : split_list(v)) {
                PadDecl pad;
                pad.is_input = k == "in";
                pad.loc = ploc;
                const auto colon = item.find(':');
                pad.name = item.substr(0, colon);
                pad.net = colon == std::string::npos ? pad.name : item.substr(colon + 1);
                if (!valid_name(pad.name, false) || !valid_name(pad.net, false)) {
                    throw ParseError(ploc, "invalid pad '" + item + "'");
                }
                if (def.find_pad(pad.name)) throw ParseError(ploc, "pad '" + pad.name + "' declared twice");
                def.pads.push_back(std::move(pad));
            }
        }
        doc_.subckts.push_back(std::move(def));
        current_ = &doc_.subckts.back();
    }

    void export_decl(const std::string& line, const std::vector<Token>& toks, int lineno) {
        const SourceLoc loc = at(lineno, toks[0].col);
        if (!current_) throw ParseError(loc, "'export' is only allowed inside a subcircuit");
        int col = 0;
        auto [name, path] = assignment(line, toks[0], lineno, &col);
        if (!valid_name(name, false)) throw ParseError(loc, "invalid export name '" + name + "'");
        if (!valid_name(path, true)) throw ParseError(at(lineno, col), "invalid export target '" + path + "'");
        for (const auto& e : current_->exports) {
            if (e.name == name) throw ParseError(loc, "export '" + name + "' declared twice");
        }
        current_->exports.push_back(ExportDecl{name, path, loc});
    }

    void outvar(const std::string& line, const std::vector<Token>& toks, int lineno) {
        const SourceLoc loc = at(lineno, toks[0].col);
        int col = 0;
        auto [alias, path] = assignment(line, toks[0], lineno, &col);
        if (alias.empty() || alias.find_first_of(" \t") != std::string::npos) {
            throw ParseError(loc, "invalid output alias '" + alias + "'");
        }
        const std::string net = split_net(path).label;
        if (!valid_name(net, true)) throw ParseError(at(lineno, col), "invalid output path '" + path + "'");
        for (const auto& o : doc_.top.outvars) {
            if (o.alias == alias) throw ParseError(loc, "output alias '" + alias + "' declared twice");
        }
        doc_.top.outvars.push_back(OutvarDecl{alias, net, loc});
    }

    void output(const std::vector<Token>& toks, int lineno) {
        OutputGroup g;
        for (std::size_t i = 1; i < toks.size(); ++i) {
            const SourceLoc loc = at(lineno, toks[i].col);
            auto [k, v] = key_value(toks[i], loc);
            if (k == "file") {
                g.file = v;
            } else if (k == "vars") {
                g.aliases = split_list(v);
            } else if (k == "interval") {
                const double iv = ParamExpr::parse(v, loc).eval(top_env_);
                if (!(iv > 0.0)) throw ParseError(loc, "output interval must be positive");
                g.interval = iv;
            } else if (k == "svg") {
                g.svg = v;
            } else {
                throw ParseError(loc, "unknown output option '" + k + "'");
            }
        }
        const SourceLoc loc = at(lineno, toks[0].col);
        if (g.file.empty()) throw ParseError(loc, "output needs file=<name>");
        std::set<std::string> seen;
        for (const auto& a : g.aliases) {
            if (!seen.insert(a).second) throw ParseError(loc, "alias '" + a + "' listed twice in one output");
        }
        for (const auto& other : doc_.top.outputs) {
            if (other.file == g.file) throw ParseError(loc, "output file '" + g.file + "' declared twice");
        }
        doc_.top.outputs.push_back(std::move(g));
    }

    void solve(const std::vector<Token>& toks, int lineno) {
        SolveSpec& s = doc_.top.solve;
        for (std::size_t i = 1; i < toks.size(); ++i) {
            const SourceLoc loc = at(lineno, toks[i].col);
            auto [k, v] = key_value(toks[i], loc);
            auto real = [&]() { return ParamExpr::parse(v, loc).eval(top_env_); };
            if (k == "method") {
                auto m = parse_method(v);
                if (!m) {
                    std::vector<std::string> names;
                    for (Method mm : kAllMethods) names.emplace_back(to_string(mm));
                    throw ParseError(loc, "unknown method '" + v + "'" + suggestion(v, names));
                }
                s.method = m;
            } else if (k == "t_start") {
                s.t_start = real();
            } else if (k == "t_end") {
                s.t_end = real();
            } else if (k == "h" || k == "h_init") {
                s.h_init = real();
            } else if (k == "h_min") {
                s.h_min = real();
            } else if (k == "h_max") {
                s.h_max = real();
            } else if (k == "tol") {
                s.tol_lte = real();
            } else if (k == "newton_max_iters") {
                const double n = real();
                if (n != std::floor(n) || n < 1 || n > 1e6) throw ParseError(loc, "newton_max_iters must be a positive integer");
                s.newton_max_iters = static_cast<int>(n);
            } else if (k == "newton_tol_abs") {
                s.newton_tol_abs = real();
            } else if (k == "newton_tol_rel") {
                s.newton_tol_rel = real();
            } else if (k == "events") {
                if (v != "on" && v != "off") throw ParseError(loc, "events must be on or off");
                s.events = v == "on";
            } else if (k == "extrap") {
                if (v != "linear" && v != "quadratic") throw ParseError(loc, "extrap must be linear or quadratic");
                s.extrap = v == "linear" ? ExtrapMode::linear : ExtrapMode::quadratic;
            } else if (k == "delta_rel") {
                s.delta_rel = real();
            } else {
                throw ParseError(loc, "unknown solve option '" + k + "'");
            }
        }
    }
};

// Second pass: classify bindings against templates/subckts and check wiring.
class Checker {
public:
    Checker(NetlistDocument& doc, const TemplateRegistry& reg) : doc_(doc), reg_(reg) {}

    void run() {
        check_scope(doc_.top, nullptr);
        for (auto& def : doc_.subckts) check_scope(def.body, &def);
        for (auto& def : doc_.subckts) check_exports(def);
        std::set<std::string> aliases;
        for (const auto& o : doc_.top.outvars) aliases.insert(o.alias);
        for (const auto& g : doc_.top.outputs) {
            for (const auto& a : g.aliases) {
                if (!aliases.count(a)) {
                    throw ParseError("output '" + g.file + "' lists '" + a + "', which no outvar declares" +
                                     suggestion(a, {aliases.begin(), aliases.end()}));
                }
            }
        }
    }

private:
    NetlistDocument& doc_;
    const TemplateRegistry& reg_;

    std::vector<std::string> known_types() const {
        auto names = reg_.names();
        for (const auto& d : doc_.subckts) names.push_back(d.name);
        return names;
    }

    static void check_net(const PortBinding& pb) {
        const NetName n = split_net(pb.net);
        if (!valid_name(n.label, true)) throw ParseError(pb.loc, "invalid net name '" + pb.net + "'");
    }

    void check_scope(HighNetlist& body, const SubcircuitDef* owner) {
        std::map<std::string, int> sinks, sources;
        for (auto& inst : body.instances) {
            if (const BlockTemplate* t = reg_.find(inst.type)) {
                classify_template(inst, *t);
            } else if (const SubcircuitDef* d = doc_.find_subckt(inst.type)) {
                classify_subckt(inst, *d);
            } else {
                throw ParseError(inst.loc, "unknown template '" + inst.type + "'" + suggestion(inst.type, known_types()));
            }
            for (const auto& pb : inst.ports) {
                check_net(pb);
                const NetName n = split_net(pb.net);
                if (n.kind == Virtual::sink) ++sinks[n.label];
                if (n.kind == Virtual::source) ++sources[n.label];
            }
        }
        for (const auto& [label, count] : sinks) {
            if (count > 1) throw ParseError("virtual net '" + label + "' has " + std::to_string(count) + " sinks '>" + label + "'");
        }
        for (const auto& [label, count] : sources) {
            (void)count;
            if (!sinks.count(label)) {
                throw ParseError("virtual source '" + label + ">' has no matching sink '>" + label + "'");
            }
        }
        for (const auto& a : body.derived) {
            if (!a.is_set) continue;
            const auto dot = a.target.find('.');
            const std::string iname = a.target.substr(0, dot), pname = a.target.substr(dot + 1);
            auto it = std::find_if(body.instances.begin(), body.instances.end(),
                                   [&](const InstanceDecl& i) { return i.name == iname; });
            if (it == body.instances.end()) throw ParseError(a.loc, "set: no instance '" + iname + "'");
            bool ok = false;
            if (it->is_subckt) {
                ok = doc_.find_subckt(it->type)->has_param(pname);
            } else {
                const auto& info = reg_.at(it->type).info();
                ok = info.is_param(pname) && !is_string_param(info, pname);
            }
            if (!ok) throw ParseError(a.loc, "set: '" + it->type + "' has no numeric parameter '" + pname + "'");
        }
        (void)owner;
    }

    static bool is_string_param(const TemplateInfo& info, std::string_view name) {
        return std::any_of(info.string_params.begin(), info.string_params.end(),
                           [&](const StringParam& p) { return p.name == name; });
    }

    static void classify_template(InstanceDecl& inst, const BlockTemplate& t) {
        const auto& info = t.info();
        std::vector<ParamBinding> params;
        for (auto& pb : inst.params) {
            const bool is_input = std::find(info.inputs.begin(), info.inputs.end(), pb.name) != info.inputs.end();
            const bool is_output = std::find(info.outputs.begin(), info.outputs.end(), pb.name) != info.outputs.end();
            if (is_input || is_output) {
                inst.ports.push_back(PortBinding{pb.name, pb.text, pb.loc});
            } else if (is_string_param(info, pb.name)) {
                params.push_back(pb);
            } else if (info.is_param(pb.name)) {
                SourceLoc vloc = pb.loc;
                vloc.column += static_cast<int>(pb.name.size()) + 1;
                pb.expr = ParamExpr::parse(pb.text, vloc);
                params.push_back(pb);
            } else {
                std::vector<std::string> cands(info.inputs);
                cands.insert(cands.end(), info.outputs.begin(), info.outputs.end());
                for (const auto& p : info.real_params) cands.push_back(p.name);
                for (const auto& p : info.int_params) cands.push_back(p.name);
                for (const auto& p : info.string_params) cands.push_back(p.name);
                for (const auto& p : info.startup_params) cands.push_back(p.name);
                throw ParseError(pb.loc, "'" + pb.name + "' is not a port or parameter of template '" + info.name +
                                             "'" + suggestion(pb.name, cands));
            }
        }
        inst.params = std::move(params);
        inst.is_subckt = false;
        auto require = [&](const std::string& port) {
            for (const auto& p : inst.ports) {
                if (p.port == port) return;
            }
            throw ParseError(inst.loc, "instance '" + inst.name + "': port '" + port + "' is not connected");
        };
        for (const auto& p : info.inputs) require(p);
        for (const auto& p : info.outputs) require(p);
    }

    static void classify_subckt(InstanceDecl& inst, const SubcircuitDef& def) {
        std::vector<ParamBinding> params;
        for (auto& pb : inst.params) {
            if (def.find_pad(pb.name)) {
                inst.ports.push_back(PortBinding{pb.name, pb.text, pb.loc});
            } else if (def.has_param(pb.name)) {
                SourceLoc vloc = pb.loc;
                vloc.column += static_cast<int>(pb.name.size()) + 1;
                pb.expr = ParamExpr::parse(pb.text, vloc);
                params.push_back(pb);
            } else {
                std::vector<std::string> cands;
                for (const auto& p : def.pads) cands.push_back(p.name);
                for (const auto& p : def.body.params) cands.push_back(p.name);
                throw ParseError(pb.loc, "'" + pb.name + "' is not a pad or parameter of subckt '" + def.name + "'" +
                                             suggestion(pb.name, cands));
            }
        }
        inst.params = std::move(params);
        inst.is_subckt = true;
        for (const auto& pad : def.pads) {
            const bool bound = std::any_of(inst.ports.begin(), inst.ports.end(),
                                           [&](const PortBinding& p) { return p.port == pad.name; });
            if (!bound) throw ParseError(inst.loc, "instance '" + inst.name + "': pad '" + pad.name + "' is not connected");
        }
    }

    void check_exports(const SubcircuitDef& def) {
        for (const auto& e : def.exports) {
            const auto dot = e.path.find('.');
            if (dot == std::string::npos) continue;  // a net
            const std::string iname = e.path.substr(0, dot);
            const auto& insts = def.body.instances;
            auto it = std::find_if(insts.begin(), insts.end(), [&](const InstanceDecl& i) { return i.name == iname; });
            if (it == insts.end()) continue;  // a dotted net name
            const std::string rest = e.path.substr(dot + 1);
            if (it->is_subckt) {
                const SubcircuitDef* child = doc_.find_subckt(it->type);
                const bool ok = std::any_of(child->exports.begin(), child->exports.end(),
                                            [&](const ExportDecl& x) { return x.name == rest; });
                if (!ok) throw ParseError(e.loc, "export '" + e.name + "': subckt '" + child->name + "' exports no '" + rest + "'");
            } else {
                const auto& ops = reg_.at(it->type).info().out_params;
                if (std::find(ops.begin(), ops.end(), rest) == ops.end()) {
                    throw ParseError(e.loc, "export '" + e.name + "': template '" + it->type + "' has no output parameter '" +
                                                rest + "'" + suggestion(rest, ops));
                }
            }
        }
    }
};

}  // namespace

std::set<std::string> HighNetlist::nets() const {
    std::set<std::string> out;
    for (const auto& i : instances) {
        for (const auto& p : i.ports) out.insert(split_net(p.net).label);
    }
    return out;
}

const PadDecl* SubcircuitDef::find_pad(std::string_view pad) const {
    for (const auto& p : pads) {
        if (p.name == pad) return &p;
    }
    return nullptr;
}

bool SubcircuitDef::has_param(std::string_view p) const {
    return std::any_of(body.params.begin(), body.params.end(), [&](const ParamDecl& d) { return d.name == p; });
}

const SubcircuitDef* NetlistDocument::find_subckt(std::string_view name) const {
    for (const auto& d : subckts) {
        if (d.name == name) return &d;
    }
    return nullptr;
}

const FlatInstance* FlatNetlist::find_instance(std::string_view path) const {
    for (const auto& i : instances) {
        if (i.path == path) return &i;
    }
    return nullptr;
}

NetlistDocument parse_netlist(std::string_view text, const ParseOptions& opts) {
    const TemplateRegistry& reg = opts.registry ? *opts.registry : builtin_registry();
    NetlistDocument doc;
    std::vector<std::string> stack;
    std::string base = opts.base_dir;
    if (base.empty() && !opts.file.empty()) base = fs::path(opts.file).parent_path().string();
    if (!opts.file.empty()) stack.push_back(fs::weakly_canonical(opts.file).string());
    Parser(doc, reg, stack).run(text, opts.file, base, false);
    Checker(doc, reg).run();
    return doc;
}

NetlistDocument parse_netlist_file(const std::string& path, const TemplateRegistry* registry) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open netlist '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    ParseOptions opts;
    opts.file = path;
    opts.registry = registry;
    return parse_netlist(ss.str(), opts);
}

// ---------------------------------------------------------------------------
// Flattening

namespace {

// Names with fewer dots survive a merge; ties go to the smaller string.
bool better_name(const std::string& a, const std::string& b) {
    const auto da = std::count(a.begin(), a.end(), '.');
    const auto db = std::count(b.begin(), b.end(), '.');
    return da != db ? da < db : a < b;
}

class Flattener {
public:
    Flattener(const NetlistDocument& doc, const TemplateRegistry& reg) : doc_(doc), reg_(reg) {}

    FlatNetlist run() {
        ParamEnv env;
        for (const auto& p : doc_.top.params) env[p.name] = p.expr.eval(env);
        expand(doc_.top, "", env);

        for (auto& inst : out_.instances) {
            for (auto& n : inst.nets) n = find(n);
        }
        for (auto& [name, b] : out_.exports) {
            if (auto* nr = std::get_if<NetRef>(&b)) nr->net = find(nr->net);
        }
        for (const auto& [name, parent] : parent_) {
            (void)parent;
            const std::string root = find(name);
            out_.net_alias[name] = root;
            out_.nets.insert(root);
        }
        check_drivers();
        std::sort(out_.instances.begin(), out_.instances.end(),
                  [](const FlatInstance& a, const FlatInstance& b) { return a.path < b.path; });
        out_.outvars = doc_.top.outvars;
        out_.outputs = doc_.top.outputs;
        out_.solve = doc_.top.solve;
        return std::move(out_);
    }

private:
    const NetlistDocument& doc_;
    const TemplateRegistry& reg_;
    FlatNetlist out_;
    std::map<std::string, std::string> parent_;
    std::vector<std::string> stack_;

    void touch(const std::string& n) { parent_.emplace(n, n); }

    std::string find(const std::string& n) {
        touch(n);
        std::string root = n;
        while (parent_[root] != root) root = parent_[root];
        std::string cur = n;
        while (parent_[cur] != root) {
            std::string next = parent_[cur];
            parent_[cur] = root;
            cur = next;
        }
        return root;
    }

    void unite(const std::string& a, const std::string& b) {
        const std::string ra = find(a), rb = find(b);
        if (ra == rb) return;
        if (better_name(ra, rb)) {
            parent_[rb] = ra;
        } else {
            parent_[ra] = rb;
        }
    }

    static std::string port_net(const InstanceDecl& inst, const std::string& port) {
        for (const auto& p : inst.ports) {
            if (p.port == port) return split_net(p.net).label;
        }
        throw AssembleError("instance '" + inst.name + "': port '" + port + "' is not connected");
    }

    void expand(const HighNetlist& body, const std::string& prefix, ParamEnv env) {
        std::map<std::string, std::map<std::string, double>> sets;
        for (const auto& a : body.derived) {
            const double v = a.expr.eval(env);
            if (!a.is_set) {
                env[a.target] = v;
            } else {
                const auto dot = a.target.find('.');
                sets[a.target.substr(0, dot)][a.target.substr(dot + 1)] = v;
            }
        }
        auto global = [&](const std::string& label) {
            std::string g = prefix + label;
            touch(g);
            return g;
        };

        for (const auto& inst : body.instances) {
            const std::string path = prefix + inst.name;
            const auto& inst_sets = sets[inst.name];
            if (!inst.is_subckt) {
                const BlockTemplate& t = reg_.at(inst.type);
                const auto& info = t.info();
                ParamOverrides ov;
                for (const auto& pb : inst.params) {
                    if (!pb.expr) {
                        ov.strings[pb.name] = pb.text;
                        continue;
                    }
                    const double v = pb.expr->eval(env);
                    assign_numeric(info, path, pb.name, v, ov, pb.loc);
                }
                for (const auto& [name, v] : inst_sets) assign_numeric(info, path, name, v, ov, inst.loc);
                FlatInstance fi;
                fi.path = path;
                fi.tmpl = &t;
                try {
                    fi.params = make_params(t, ov);
                } catch (const TemplateError& e) {
                    throw TemplateError("instance '" + path + "': " + e.what());
                }
                for (const auto& p : info.inputs) fi.nets.push_back(global(port_net(inst, p)));
                for (const auto& p : info.outputs) fi.nets.push_back(global(port_net(inst, p)));
                out_.instances.push_back(std::move(fi));
                continue;
            }

            const SubcircuitDef& def = *doc_.find_subckt(inst.type);
            if (std::find(stack_.begin(), stack_.end(), def.name) != stack_.end()) {
                std::string chain;
                for (const auto& s : stack_) chain += s + " -> ";
                throw ParseError(inst.loc, "recursive subcircuit instantiation: " + chain + def.name);
            }
            std::map<std::string, double> given;
            for (const auto& pb : inst.params) given[pb.name] = pb.expr->eval(env);
            for (const auto& [name, v] : inst_sets) given[name] = v;
            ParamEnv child;
            for (const auto& pd : def.body.params) {
                auto it = given.find(pd.name);
                child[pd.name] = it != given.end() ? it->second : pd.expr.eval(child);
            }
            stack_.push_back(def.name);
            expand(def.body, path + ".", child);
            stack_.pop_back();

            for (const auto& pad : def.pads) {
                unite(global(port_net(inst, pad.name)), path + "." + pad.net);
            }
            for (const auto& e : def.exports) out_.exports[path + "." + e.name] = export_binding(def, path, e);
        }
    }

    static void assign_numeric(const TemplateInfo& info, const std::string& path, const std::string& name, double v,
                               ParamOverrides& ov, const SourceLoc& loc) {
        const bool is_int = std::any_of(info.int_params.begin(), info.int_params.end(),
                                        [&](const IntParam& p) { return p.name == name; });
        if (is_int) {
            if (v != std::floor(v) || std::abs(v) > 1e15) {
                throw ParseError(loc, "instance '" + path + "': parameter '" + name + "' must be an integer");
            }
            ov.ints[name] = static_cast<long long>(v);
        } else {
            ov.reals[name] = v;
        }
    }

    OutputBinding export_binding(const SubcircuitDef& def, const std::string& path, const ExportDecl& e) {
        const auto dot = e.path.find('.');
        if (dot != std::string::npos) {
            const std::string iname = e.path.substr(0, dot);
            for (const auto& inst : def.body.instances) {
                if (inst.name != iname) continue;
                const std::string rest = e.path.substr(dot + 1);
                if (inst.is_subckt) return out_.exports.at(path + "." + iname + "." + rest);
                return OutParamRef{path + "." + iname, rest};
            }
        }
        const std::string g = path + "." + e.path;
        touch(g);
        return NetRef{g};
    }

    void check_drivers() {
        std::map<std::string, std::vector<std::string>> drivers;
        for (const auto& inst : out_.instances) {
            const auto& info = inst.tmpl->info();
            for (std::size_t k = 0; k < info.outputs.size(); ++k) {
                drivers[inst.nets[info.inputs.size() + k]].push_back(inst.path + "." + info.outputs[k]);
            }
        }
        for (const auto& [net, list] : drivers) {
            if (list.size() > 1) {
                std::string who;
                for (const auto& d : list) who += (who.empty() ? "" : ", ") + d;
                throw AssembleError("net '" + net + "' has conflicting drivers: " + who);
            }
        }
    }
};

}  // namespace

FlatNetlist flatten(const NetlistDocument& doc) { return Flattener(doc, builtin_registry()).run(); }

std::vector<ResolvedOutput> resolve_outputs(const std::vector<OutvarDecl>& reqs, const FlatNetlist& flat) {
    std::vector<ResolvedOutput> out;
    for (const auto& r : reqs) {
        if (auto it = flat.exports.find(r.path); it != flat.exports.end()) {
            out.push_back({r.alias, it->second});
            continue;
        }
        if (auto it = flat.net_alias.find(r.path); it != flat.net_alias.end()) {
            out.push_back({r.alias, NetRef{it->second}});
            continue;
        }
        if (flat.nets.count(r.path)) {
            out.push_back({r.alias, NetRef{r.path}});
            continue;
        }
        const auto dot = r.path.rfind('.');
        if (dot != std::string::npos) {
            if (const FlatInstance* fi = flat.find_instance(r.path.substr(0, dot))) {
                const std::string param = r.path.substr(dot + 1);
                const auto& ops = fi->tmpl->info().out_params;
                if (std::find(ops.begin(), ops.end(), param) != ops.end()) {
                    out.push_back({r.alias, OutParamRef{fi->path, param}});
                    continue;
                }
            }
        }
        std::vector<std::string> cands;
        for (const auto& [k, v] : flat.exports) cands.push_back(k);
        for (const auto& [k, v] : flat.net_alias) cands.push_back(k);
        for (const auto& fi : flat.instances) {
            for (const auto& p : fi.tmpl->info().out_params) cands.push_back(fi.path + "." + p);
        }
        std::string msg = "unknown output '" + r.path + "'" + suggestion(r.path, cands);
        if (r.loc.line > 0) throw ParseError(r.loc, msg);
        throw ParseError(msg);
    }
    return out;
}

namespace {

std::string quote_if_needed(const std::string& s) {
    if (s.empty() || s.find_first_of(" \t#{}\"") != std::string::npos) return "{" + s + "}";
    return s;
}

}  // namespace

std::string print_flat(const FlatNetlist& flat) {
    std::ostringstream os;
    for (const auto& inst : flat.instances) {
        const auto& info = inst.tmpl->info();
        os << "block " << inst.path << ' ' << info.name;
        std::size_t k = 0;
        for (const auto& p : info.inputs) os << ' ' << p << '=' << inst.nets[k++];
        for (const auto& p : info.outputs) os << ' ' << p << '=' << inst.nets[k++];
        for (std::size_t i = 0; i < info.real_params.size(); ++i) {
            os << ' ' << info.real_params[i].name << '=' << format_real(inst.params.reals[i]);
        }
        for (std::size_t i = 0; i < info.int_params.size(); ++i) {
            os << ' ' << info.int_params[i].name << '=' << inst.params.ints[i];
        }
        for (std::size_t i = 0; i < info.string_params.size(); ++i) {
            os << ' ' << info.string_params[i].name << '=' << quote_if_needed(inst.params.strings[i]);
        }
        for (std::size_t i = 0; i < info.startup_params.size(); ++i) {
            os << ' ' << info.startup_params[i].name << '=' << format_real(inst.params.startup[i]);
        }
        os << '\n';
    }
    const auto resolved = resolve_outputs(flat.outvars, flat);
    for (const auto& r : resolved) os << "outvar " << r.alias << " = " << binding_path(r.binding) << '\n';
    for (const auto& g : flat.outputs) {
        os << "output file=" << quote_if_needed(g.file) << " vars=";
        for (std::size_t i = 0; i < g.aliases.size(); ++i) os << (i ? "," : "") << g.aliases[i];
        if (g.interval) os << " interval=" << format_real(*g.interval);
        if (g.svg) os << " svg=" << quote_if_needed(*g.svg);
        os << '\n';
    }
    const SolveSpec& s = flat.solve;
    std::ostringstream so;
    auto real = [&](const char* key, const std::optional<double>& v) {
        if (v) so << ' ' << key << '=' << format_real(*v);
    };
    if (s.method) so << " method=" << to_string(*s.method);
    real("t_start", s.t_start);
    real("t_end", s.t_end);
    real("h_init", s.h_init);
    real("h_min", s.h_min);
    real("h_max", s.h_max);
    real("tol", s.tol_lte);
    if (s.newton_max_iters) so << " newton_max_iters=" << *s.newton_max_iters;
    real("newton_tol_abs", s.newton_tol_abs);
    real("newton_tol_rel", s.newton_tol_rel);
    if (s.events) so << " events=" << (*s.events ? "on" : "off");
    if (s.extrap) so << " extrap=" << (*s.extrap == ExtrapMode::linear ? "linear" : "quadratic");
    real("delta_rel", s.delta_rel);
    if (!so.str().empty()) os << "solve" << so.str() << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Solve settings

SolveSpec merge(const SolveSpec& upper, const SolveSpec& lower) {
    SolveSpec r = lower;
    auto take = [](auto& dst, const auto& src) {
        if (src) dst = src;
    };
    take(r.method, upper.method);
    take(r.t_start, upper.t_start);
    take(r.t_end, upper.t_end);
    take(r.h_init, upper.h_init);
    take(r.h_min, upper.h_min);
    take(r.h_max, upper.h_max);
    take(r.tol_lte, upper.tol_lte);
    take(r.newton_max_iters, upper.newton_max_iters);
    take(r.newton_tol_abs, upper.newton_tol_abs);
    take(r.newton_tol_rel, upper.newton_tol_rel);
    take(r.events, upper.events);
    take(r.extrap, upper.extrap);
    take(r.delta_rel, upper.delta_rel);
    return r;
}

SolverConfig make_solver_config(const SolveSpec& s) {
    SolverConfig c;
    c.method = s.method.value_or(Method::rkf45);
    c.t_start = s.t_start.value_or(0.0);
    c.t_end = s.t_end.value_or(c.t_start + 1.0);
    const double span = c.t_end - c.t_start;
    c.h_max = s.h_max.value_or(std::max(s.h_init.value_or(span / 1000.0), span / 50.0));
    c.h_init = s.h_init.value_or(std::min(span / 1000.0, c.h_max));
    c.h_min = s.h_min.value_or(std::min(c.h_init, std::abs(span) * 1e-12));
    c.tol_lte = s.tol_lte.value_or(c.tol_lte);
    c.newton_max_iters = s.newton_max_iters.value_or(c.newton_max_iters);
    c.newton_tol_abs = s.newton_tol_abs.value_or(c.newton_tol_abs);
    c.newton_tol_rel = s.newton_tol_rel.value_or(c.newton_tol_rel);
    c.validate();
    return c;
}

EventOptions make_event_options(const SolveSpec& s) {
    EventOptions e;
    e.enabled = s.events.value_or(true);
    e.extrap = s.extrap;
    e.delta_rel = s.delta_rel.value_or(e.delta_rel);
    if (!(e.delta_rel > 0.0 && e.delta_rel < 0.5)) throw ParseError("delta_rel must lie in (0, 0.5)");
    return e;
}

}  // namespace flowsim
