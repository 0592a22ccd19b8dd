#include "flowsim/error.hpp"

namespace flowsim {

const char* to_string(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::assemble: return "assemble";
        case ErrorCategory::converge: return "converge";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

std::string SourceLoc::str() const {
    std::string s = file.empty() ? std::string("<input>") : file;
    s += ':' + std::to_string(line);
    if (column > 0) s += ':' + std::to_string(column);
    return s;
}

}  // namespace flowsim
