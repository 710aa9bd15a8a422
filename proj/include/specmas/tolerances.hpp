#pragma once

#include <stdexcept>
#include <string>

namespace specmas {

// Numerical policy shared by all modules.  Rank and zero decisions are
// relative to the scale of the data with an absolute floor, span equality
// is an absolute projection-norm bound.
struct Tolerances {
    double rank_rel = 1e-8;      // singular values below rank_rel * sv_max are zero
    double rank_floor = 1e-12;   // absolute floor for rank decisions
    double num = 1e-9;           // span equality / structural checks
    double zero_rel = 1e-8;      // half-width of the zero band, relative to spectral scale
    double gap_frac = 1e-6;      // boundary-collision margin as a fraction of the window radius
    double deriv_step = 1e-5;    // central-difference step for path derivatives
    double deriv_check = 1e-4;   // allowed Richardson mismatch before fallback
    double transfer_step = 1e-3; // default integrator step
    double transfer_tol = 1e-10; // step-halving convergence target for transfer matrices
    int max_depth = 20;          // partition bisection limit

    double rank_tol(double sv_max) const {
        double t = rank_rel * sv_max;
        return t > rank_floor ? t : rank_floor;
    }
    double zero_band(double scale) const {
        double t = zero_rel * scale;
        return t > 1e-14 ? t : 1e-14;
    }
};

const Tolerances& default_tols();
Tolerances& mutable_default_tols();

// Input file / schema violations (CLI exit code 2).
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Adaptive refinement did not settle (CLI exit code 3).
struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace specmas
