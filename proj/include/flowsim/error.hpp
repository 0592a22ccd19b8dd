#pragma once

#include <stdexcept>
#include <string>

namespace flowsim {

/// Failure categories; the numeric values double as CLI exit codes.
enum class ErrorCategory { parse = 1, assemble = 2, converge = 3, io = 4 };

const char* to_string(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

struct SourceLoc {
    std::string file;
    int line = 0;
    int column = 0;

    std::string str() const;
};

class ParseError : public Error {
public:
    ParseError(const SourceLoc& loc, const std::string& msg)
        : Error(ErrorCategory::parse, loc.str() + ": " + msg), loc_(loc) {}
    explicit ParseError(const std::string& msg) : Error(ErrorCategory::parse, msg) {}

    const SourceLoc& loc() const noexcept { return loc_; }

private:
    SourceLoc loc_;
};

class AssembleError : public Error {
public:
    explicit AssembleError(const std::string& msg) : Error(ErrorCategory::assemble, msg) {}
};

// Raised for bad template definitions and for parameter values a template
// cannot work with (singular inductance matrix, unordered tables, ...).
class TemplateError : public AssembleError {
public:
    using AssembleError::AssembleError;
};

class ConvergeError : public Error {
public:
    explicit ConvergeError(const std::string& msg) : Error(ErrorCategory::converge, msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorCategory::io, msg) {}
};

}  // namespace flowsim
