#include "flowsim/config.hpp"

#include <cmath>

namespace flowsim {

const char* to_string(Method m) noexcept {
    switch (m) {
        case Method::improved_euler: return "improved_euler";
        case Method::heun: return "heun";
        case Method::rk4: return "rk4";
        case Method::rkf45: return "rkf45";
        case Method::bs23: return "bs23";
        case Method::backward_euler: return "backward_euler";
        case Method::trapezoidal: return "trapezoidal";
        case Method::be_auto: return "be_auto";
        case Method::tr_auto: return "tr_auto";
        case Method::trbdf2: return "trbdf2";
    }
    return "?";
}

std::optional<Method> parse_method(std::string_view name) {
    for (Method m : kAllMethods) {
        if (name == to_string(m)) return m;
    }
    return std::nullopt;
}

bool is_implicit(Method m) noexcept {
    switch (m) {
        case Method::backward_euler:
        case Method::trapezoidal:
        case Method::be_auto:
        case Method::tr_auto:
        case Method::trbdf2: return true;
        default: return false;
    }
}

bool is_adaptive(Method m) noexcept {
    switch (m) {
        case Method::rkf45:
        case Method::bs23:
        case Method::be_auto:
        case Method::tr_auto:
        case Method::trbdf2: return true;
        default: return false;
    }
}

void SolverConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ParseError("invalid solver settings: " + msg); };
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(t_start) || !finite(t_end) || !(t_start < t_end)) fail("t_start < t_end is required");
    if (!finite(h_min) || !(h_min > 0.0)) fail("h_min must be positive");
    if (!(h_min <= h_init)) fail("h_min <= h_init is required");
    if (!(h_init <= h_max) || !finite(h_max)) fail("h_init <= h_max is required");
    if (!(tol_lte > 0.0)) fail("tol must be positive");
    if (newton_max_iters < 1) fail("newton_max_iters must be at least 1");
    if (!(newton_tol_abs > 0.0) || !(newton_tol_rel > 0.0)) fail("Newton tolerances must be positive");
    if (!(safety > 0.0 && safety <= 1.0)) fail("safety factor must lie in (0, 1]");
    if (!(grow_cap > 1.0)) fail("grow cap must exceed 1");
    if (!(shrink_cap > 0.0 && shrink_cap < 1.0)) fail("shrink cap must lie in (0, 1)");
    if (!(nr_iters_low <= nr_iters_high)) fail("nr_iters_low <= nr_iters_high is required");
    if (!(nr_grow > 1.0)) fail("nr_grow must exceed 1");
    if (max_rejections < 1) fail("max_rejections must be at least 1");
}

}  // namespace flowsim
