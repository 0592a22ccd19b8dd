#pragma once

// Parameter expressions: real literals, names, + - * /, unary minus,
// parentheses and the functions sqrt sin cos exp log abs min max.
// Evaluation is plain IEEE double arithmetic except that division by zero
// and sqrt/log domain violations are errors rather than inf/nan.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>

#include "flowsim/error.hpp"

namespace flowsim {

using ParamEnv = std::map<std::string, double, std::less<>>;

class ParamExpr {
public:
    struct Node;

    ParamExpr();
    ParamExpr(const ParamExpr& other);
    ParamExpr& operator=(const ParamExpr& other);
    ParamExpr(ParamExpr&&) noexcept;
    ParamExpr& operator=(ParamExpr&&) noexcept;
    ~ParamExpr();

    /// Throws ParseError (located at `loc`, column offset by the error
    /// position) on malformed input.
    static ParamExpr parse(std::string_view text, const SourceLoc& loc = {});

    double eval(const ParamEnv& env) const;
    const std::string& text() const { return text_; }
    std::set<std::string> free_names() const;

private:
    std::string text_;
    std::unique_ptr<Node> root_;
    SourceLoc loc_;
};

/// Parses and evaluates in one go.
double eval_param_expr(std::string_view text, const ParamEnv& env);

/// Errors from evaluation (unbound names, domain violations).
class ExprError : public ParseError {
public:
    using ParseError::ParseError;
};

}  // namespace flowsim
