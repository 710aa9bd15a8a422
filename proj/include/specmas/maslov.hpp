#pragma once

#include "specmas/spectral_flow.hpp"
#include "specmas/symplectic.hpp"

namespace specmas {

// Continuous family of inner products and compatible symplectic operators
// on a fixed C^dim.  gram_of may be empty (identity metric).
struct SymplecticFamily {
    int dim = 0;
    std::function<Mat(double)> gram_of;
    std::function<Mat(double)> J_of;
};

struct LagrangianPath {
    std::function<SubspaceFrame(double)> eval;
};

struct CrossingRecordMas {
    double t = 0.0;
    Mat intersection_frame;
    Mat q_lambda, q_mu, gamma;
    int sig_plus = 0, sig_zero = 0, sig_minus = 0;
    bool at_start = false, at_end = false;
    int contribution = 0;
};

SymplecticFamily constant_family(const SymplecticSpace& space);

SymplecticSpace family_space(const SymplecticFamily& family, double s,
                             const Tolerances& tol = default_tols());

// Maslov index via the unitary-generator reduction: the generators U_s, V_s
// are taken with respect to the splitting of iJ_s, W_s = U_s V_s^{-1}, and
// the index is -SF of the unitary path W through 1 (upward co-orientation).
std::pair<int, FlowComputation>
maslov_index(const LagrangianPath& lambda, const LagrangianPath& mu,
             const SymplecticFamily& family, const Tolerances& tol = default_tols(),
             int sample_hint = 64, ExecPolicy policy = ExecPolicy::parallel);

// Crossing form Q on the subspace of λ_t spanned by the columns of basis:
// Q(u,v) = d/ds|_{s=t} ω_t(u, w_v(s)) with v + w_v(s) in λ_s, w_v in the
// Lagrangian complement W.
Mat crossing_form_q(const LagrangianPath& lambda, double t, const Mat& complement,
                    const SymplecticFamily& family, const Mat& basis,
                    const Tolerances& tol = default_tols());

// Convenience overload on the full λ_t (basis = orthonormalized frame).
Mat crossing_form_q(const LagrangianPath& lambda, double t, const Mat& complement,
                    const SymplecticFamily& family,
                    const Tolerances& tol = default_tols());

// Q(λ,t) - Q(μ,t) restricted to λ_t ∩ μ_t.
CrossingRecordMas crossing_form_gamma(const LagrangianPath& lambda,
                                      const LagrangianPath& mu, double t,
                                      const SymplecticFamily& family,
                                      const Tolerances& tol = default_tols());

// m^+(Γ(0)) - m^-(Γ(1)) + Σ_{0<t<1} sign Γ(t), regular crossings required.
int maslov_via_crossings(const LagrangianPath& lambda, const LagrangianPath& mu,
                         const SymplecticFamily& family,
                         std::vector<CrossingRecordMas>& records,
                         const Tolerances& tol = default_tols());

struct WindingTracePoint {
    double s;
    cplx value;
    double accumulated_arg;
};

// Winding number of s -> det(U_s^{-1} V_0) for a loop of Lagrangians against
// a constant one over a constant family; equals the Maslov index.
int winding_oracle(const LagrangianPath& lambda_loop, const LagrangianPath& mu,
                   const SymplecticFamily& family,
                   std::vector<WindingTracePoint>* trace = nullptr,
                   const Tolerances& tol = default_tols());

// A Lagrangian complement of the given Lagrangian (graph of the negated
// generator).
Mat lagrangian_complement(const SymplecticSpace& space, const SubspaceFrame& lambda,
                          const Tolerances& tol = default_tols());

} // namespace specmas
