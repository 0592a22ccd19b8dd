#pragma once

// Shared test helpers: the RC ladder oracle and small run wrappers.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "flowsim/simulate.hpp"

namespace flowsim::fixtures {

#ifndef FLOWSIM_SAMPLES_DIR
#define FLOWSIM_SAMPLES_DIR "samples"
#endif

inline std::string sample_path(const std::string& name) { return std::string(FLOWSIM_SAMPLES_DIR) + "/" + name; }

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Two-stage RC ladder driven by a unit step at t = 0, both capacitors
// initially discharged:
//   x' = A x + b,  A = [[-(g1+g2)/C1, g2/C1], [g2/C2, -g2/C2]],  b = [g1/C1, 0]
// Closed form through the eigenpairs of the 2x2 matrix (quadratic formula).
struct RcOracle {
    double r1, r2, c1, c2;
    double a11, a12, a21, a22;
    double lambda[2];
    // v(t) = v_inf + sum_k coef[k] * vec[k] * exp(lambda_k t), v_inf = (1, 1).
    double vec[2][2];
    double coef[2];

    RcOracle(double R1, double R2, double C1, double C2) : r1(R1), r2(R2), c1(C1), c2(C2) {
        a11 = -(1.0 / (R1 * C1) + 1.0 / (R2 * C1));
        a12 = 1.0 / (R2 * C1);
        a21 = 1.0 / (R2 * C2);
        a22 = -1.0 / (R2 * C2);
        const double tr = a11 + a22;
        const double det = a11 * a22 - a12 * a21;
        const double disc = std::sqrt(tr * tr / 4.0 - det);
        lambda[0] = tr / 2.0 + disc;  // slow
        lambda[1] = tr / 2.0 - disc;  // fast
        for (int k = 0; k < 2; ++k) {
            // (A - l I) v = 0  ->  v = (a12, l - a11)
            vec[k][0] = a12;
            vec[k][1] = lambda[k] - a11;
        }
        // x(0) = 0  ->  sum coef_k vec_k = -(1, 1)
        const double d = vec[0][0] * vec[1][1] - vec[1][0] * vec[0][1];
        coef[0] = (-1.0 * vec[1][1] + 1.0 * vec[1][0]) / d;
        coef[1] = (-1.0 * vec[0][0] + 1.0 * vec[0][1]) / d;
    }

    double v(int node, double t) const {
        double s = 1.0;
        for (int k = 0; k < 2; ++k) s += coef[k] * vec[k][node] * std::exp(lambda[k] * t);
        return s;
    }
    double tau(int k) const { return -1.0 / lambda[k]; }
};

inline std::string rc_netlist(double c2) {
    std::ostringstream s;
    s.precision(17);
    s << "param R1=1e3 R2=1e3 C1=1e-6 C2=" << c2 << "\n"
      << "block src step_source y=vs t0=0 y0=1 y1=1\n"
      << "block n1 sum_3 x1=vs x2=v1 x3=v2 y=d1 k1={1/(R1*C1)} k2={-(1/(R1*C1) + 1/(R2*C1))} k3={1/(R2*C1)}\n"
      << "block c1 integrator x=d1 y=v1\n"
      << "block n2 sum_2 x1=v1 x2=v2 y=d2 k1={1/(R2*C2)} k2={-1/(R2*C2)}\n"
      << "block c2 integrator x=d2 y=v2\n"
      << "outvar v1 = v1\noutvar v2 = v2\n";
    return s.str();
}

// Single table of a run with no output statements.
inline TransientResult run_text(const std::string& text, const SolveSpec& overrides) {
    return simulate_text(text, overrides);
}

inline double last_value(const WaveformTable& t, const std::string& col) { return t.column(col).back(); }

// Value of a column at an exact recorded time; NaN when absent.
inline double value_at(const WaveformTable& t, const std::string& col, double time) {
    const auto ts = t.column("time");
    const auto vs = t.column(col);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] == time) return vs[i];
    }
    return std::nan("");
}

}  // namespace flowsim::fixtures
