#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "flowsim/block.hpp"

namespace flowsim {

enum class Method {
    improved_euler,
    heun,
    rk4,
    rkf45,
    bs23,
    backward_euler,
    trapezoidal,
    be_auto,
    tr_auto,
    trbdf2,
};

inline constexpr Method kAllMethods[] = {Method::improved_euler, Method::heun,          Method::rk4,
                                         Method::rkf45,          Method::bs23,          Method::backward_euler,
                                         Method::trapezoidal,    Method::be_auto,       Method::tr_auto,
                                         Method::trbdf2};

const char* to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view name);
bool is_implicit(Method m) noexcept;
// Methods whose step size is chosen by a controller (LTE or Newton count).
bool is_adaptive(Method m) noexcept;

struct SolverConfig {
    Method method = Method::rkf45;
    double t_start = 0.0;
    double t_end = 1.0;
    double h_init = 1e-3;  // the step of fixed-step methods
    double h_min = 1e-12;
    double h_max = 1e-2;
    double tol_lte = 1e-6;

    int newton_max_iters = 20;
    double newton_tol_abs = 1e-8;
    double newton_tol_rel = 1e-6;

    double safety = 0.9;
    double grow_cap = 4.0;
    double shrink_cap = 0.1;

    int nr_iters_high = 10;
    int nr_iters_low = 4;
    double nr_grow = 1.5;

    int max_rejections = 20;

    /// Throws ParseError describing the first violated constraint.
    void validate() const;
};

struct EventOptions {
    bool enabled = true;
    // Overrides the per-comparator extrapolation mode when set.
    std::optional<ExtrapMode> extrap;
    // Crossing bracket half-width: delta_rel * dt_normal, floored.
    double delta_rel = 1e-4;
    double delta_floor = 1e-12;
};

}  // namespace flowsim
