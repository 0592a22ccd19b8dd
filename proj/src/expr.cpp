#include "flowsim/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

namespace flowsim {

struct ParamExpr::Node {
    enum class Kind { number, name, neg, add, sub, mul, div, call } kind = Kind::number;
    double value = 0.0;
    std::string name;
    std::vector<std::unique_ptr<Node>> args;

    std::unique_ptr<Node> clone() const {
        auto n = std::make_unique<Node>();
        n->kind = kind;
        n->value = value;
        n->name = name;
        for (const auto& a : args) n->args.push_back(a->clone());
        return n;
    }
};

namespace {

using Node = ParamExpr::Node;
using Kind = Node::Kind;

class Parser {
public:
    Parser(std::string_view text, const SourceLoc& loc) : s_(text), loc_(loc) {}

    std::unique_ptr<Node> parse() {
        auto n = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    SourceLoc loc_;

    [[noreturn]] void fail(const std::string& msg) const {
        SourceLoc at = loc_;
        if (at.column > 0) at.column += static_cast<int>(pos_);
        throw ParseError(at, "in expression '" + std::string(s_) + "': " + msg);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static std::unique_ptr<Node> binary(Kind k, std::unique_ptr<Node> l, std::unique_ptr<Node> r) {
        auto n = std::make_unique<Node>();
        n->kind = k;
        n->args.push_back(std::move(l));
        n->args.push_back(std::move(r));
        return n;
    }

    std::unique_ptr<Node> expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = binary(Kind::add, std::move(lhs), term());
            } else if (accept('-')) {
                lhs = binary(Kind::sub, std::move(lhs), term());
            } else {
                return lhs;
            }
        }
    }

    std::unique_ptr<Node> term() {
        auto lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = binary(Kind::mul, std::move(lhs), unary());
            } else if (accept('/')) {
                lhs = binary(Kind::div, std::move(lhs), unary());
            } else {
                return lhs;
            }
        }
    }

    std::unique_ptr<Node> unary() {
        if (accept('-')) {
            auto n = std::make_unique<Node>();
            n->kind = Kind::neg;
            n->args.push_back(unary());
            return n;
        }
        if (accept('+')) return unary();
        return primary();
    }

    std::unique_ptr<Node> primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        if (accept('(')) {
            auto n = expr();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name_or_call();
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::unique_ptr<Node> number() {
        const char* begin = s_.data() + pos_;
        const char* end = s_.data() + s_.size();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr == begin) fail("malformed number");
        pos_ += static_cast<std::size_t>(ptr - begin);
        auto n = std::make_unique<Node>();
        n->value = v;
        return n;
    }

    std::unique_ptr<Node> name_or_call() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
            ++pos_;
        }
        auto n = std::make_unique<Node>();
        n->name = std::string(s_.substr(start, pos_ - start));
        if (accept('(')) {
            n->kind = Kind::call;
            if (!accept(')')) {
                do {
                    n->args.push_back(expr());
                } while (accept(','));
                if (!accept(')')) fail("expected ')' after arguments of " + n->name);
            }
            check_arity(*n);
        } else {
            n->kind = Kind::name;
        }
        return n;
    }

    void check_arity(const Node& n) const {
        static const std::map<std::string, std::size_t, std::less<>> arity = {
            {"sqrt", 1}, {"sin", 1}, {"cos", 1}, {"exp", 1}, {"log", 1}, {"abs", 1}, {"min", 2}, {"max", 2}};
        auto it = arity.find(n.name);
        if (it == arity.end()) fail("unknown function '" + n.name + "'");
        if (n.args.size() != it->second) {
            fail(n.name + "() takes " + std::to_string(it->second) + " argument(s)");
        }
    }
};

[[noreturn]] void domain(const std::string& what, const std::string& text, const SourceLoc& loc) {
    throw ExprError(loc, "in expression '" + text + "': " + what);
}

double eval_node(const Node& n, const ParamEnv& env, const std::string& text, const SourceLoc& loc) {
    auto arg = [&](std::size_t i) { return eval_node(*n.args[i], env, text, loc); };
    switch (n.kind) {
        case Kind::number: return n.value;
        case Kind::name: {
            auto it = env.find(n.name);
            if (it != env.end()) return it->second;
            if (n.name == "pi") return std::numbers::pi;
            domain("unbound name '" + n.name + "'", text, loc);
        }
        case Kind::neg: return -arg(0);
        case Kind::add: return arg(0) + arg(1);
        case Kind::sub: return arg(0) - arg(1);
        case Kind::mul: return arg(0) * arg(1);
        case Kind::div: {
            const double num = arg(0);
            const double den = arg(1);
            if (den == 0.0) domain("division by zero", text, loc);
            return num / den;
        }
        case Kind::call: {
            const double x = arg(0);
            if (n.name == "sqrt") {
                if (x < 0.0) domain("sqrt of a negative number", text, loc);
                return std::sqrt(x);
            }
            if (n.name == "log") {
                if (!(x > 0.0)) domain("log of a non-positive number", text, loc);
                return std::log(x);
            }
            if (n.name == "sin") return std::sin(x);
            if (n.name == "cos") return std::cos(x);
            if (n.name == "exp") return std::exp(x);
            if (n.name == "abs") return std::abs(x);
            if (n.name == "min") return std::min(x, arg(1));
            if (n.name == "max") return std::max(x, arg(1));
            break;
        }
    }
    domain("internal: bad expression node", text, loc);
}

void collect_names(const Node& n, std::set<std::string>& out) {
    if (n.kind == Kind::name) out.insert(n.name);
    for (const auto& a : n.args) collect_names(*a, out);
}

}  // namespace

ParamExpr::ParamExpr() = default;
ParamExpr::~ParamExpr() = default;
ParamExpr::ParamExpr(ParamExpr&&) noexcept = default;
ParamExpr& ParamExpr::operator=(ParamExpr&&) noexcept = default;

ParamExpr::ParamExpr(const ParamExpr& other)
    : text_(other.text_), root_(other.root_ ? other.root_->clone() : nullptr), loc_(other.loc_) {}

ParamExpr& ParamExpr::operator=(const ParamExpr& other) {
    if (this != &other) {
        text_ = other.text_;
        root_ = other.root_ ? other.root_->clone() : nullptr;
        loc_ = other.loc_;
    }
    return *this;
}

ParamExpr ParamExpr::parse(std::string_view text, const SourceLoc& loc) {
    ParamExpr e;
    e.text_ = std::string(text);
    e.loc_ = loc;
    e.root_ = Parser(text, loc).parse();
    return e;
}

double ParamExpr::eval(const ParamEnv& env) const {
    if (!root_) throw ExprError(loc_, "empty expression");
    const double v = eval_node(*root_, env, text_, loc_);
    if (!std::isfinite(v)) throw ExprError(loc_, "expression '" + text_ + "' is not finite");
    return v;
}

std::set<std::string> ParamExpr::free_names() const {
    std::set<std::string> out;
    if (root_) collect_names(*root_, out);
    return out;
}

double eval_param_expr(std::string_view text, const ParamEnv& env) { return ParamExpr::parse(text).eval(env); }

}  // namespace flowsim
