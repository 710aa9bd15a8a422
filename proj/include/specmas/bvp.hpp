#pragma once

#include <memory>
#include <optional>
#include <string>

#include "specmas/maslov.hpp"
#include "specmas/report.hpp"
#include "specmas/spectral_flow.hpp"
#include "specmas/symplectic.hpp"

namespace specmas {

// First-order formally self-adjoint system sigma d/dt + B(s,t) on [0,1]:
// sigma constant skew-adjoint invertible, B(s,t) Hermitian.
struct FirstOrderSystem {
    int m = 0;
    Mat sigma;
    std::function<Mat(double s, double t)> B;
    double step_hint = 1e-3; // initial integrator step
};

struct BoundaryPath {
    std::function<SubspaceFrame(double)> eval; // Lagrangian frame in C^{2m}
};

struct Scenario {
    std::string label;
    FirstOrderSystem system;
    BoundaryPath boundary;
    double window = 7.0; // spectral window half-width
    int s_samples = 128;
    uint64_t seed = 0;
    // metadata for reports; set by the JSON layer / generator
    std::string description;
};

// Trace space C^m ⊕ C^m of boundary values (x(0), x(1)) with gram identity
// and J = blockdiag(-sigma, sigma), so that
// ω((x0,x1),(y0,y1)) = <σx1,y1> - <σx0,y0>  (Green's identity).
SymplecticSpace boundary_space(const Mat& sigma, const Tolerances& tol = default_tols());

// Fundamental solution endpoint map: x(1) = T x(0) for sigma x' + Bx = mu x.
// Classical fourth-order one-step integration starting at step_hint, step
// halving until ||T_h - T_{h/2}|| < tol.transfer_tol.
Mat transfer_matrix(const FirstOrderSystem& sys, double s, double mu,
                    const Tolerances& tol = default_tols());

// Graph frame {(v, Tv)} of the transfer matrix at spectral shift mu: the
// trace of ker(A_s^* - mu).
SubspaceFrame cauchy_data(const FirstOrderSystem& sys, double s, double mu,
                          const Tolerances& tol = default_tols());

// Smallest singular value of the concatenated orthonormal frames
// [boundary | cauchy(lambda)]; zero exactly when lambda is an eigenvalue.
double eigenvalue_condition(const FirstOrderSystem& sys, double s,
                            const SubspaceFrame& boundary_frame, double lambda,
                            const Tolerances& tol = default_tols());

struct WindowRoot {
    double lambda;
    int multiplicity;
};

struct WindowEdgeError : ConvergenceError {
    double root;
    explicit WindowEdgeError(double r)
        : ConvergenceError("eigenvalue at spectral window edge: " + std::to_string(r) +
                           "; widen the window"),
          root(r) {}
};

// All eigenvalues of A_{s,boundary} in [-window, window]: scan with grid
// 1e-2 * window plus bisection to 1e-10; multiplicities from the boundary /
// Cauchy intersection.  Throws WindowEdgeError when a root sits at the edge.
std::vector<WindowRoot> eigenvalues_in_window(const FirstOrderSystem& sys, double s,
                                              const SubspaceFrame& boundary_frame,
                                              double window,
                                              const Tolerances& tol = default_tols());

std::vector<double> expand_multiplicities(const std::vector<WindowRoot>& roots);

struct UcpCertificate {
    bool ok = false;
    double min_singular_value = 0.0; // of T(0) across the sampled s sweep
    int samples = 0;
};

// Weak inner unique continuation: no nonzero solution with vanishing trace.
// For these ODE systems the transfer matrix is invertible, so the check
// reports a certificate rather than a nontrivial decision.
UcpCertificate ucp_check(const FirstOrderSystem& sys, double s,
                         const Tolerances& tol = default_tols());
UcpCertificate ucp_sweep(const FirstOrderSystem& sys, int samples = 16,
                         const Tolerances& tol = default_tols());

// Shared evaluation context for one scenario: caches windowed spectra per s
// (Chebyshev-accelerated shooting scan over a padded window) and exposes the
// two spectral-flow routes and the Maslov side.
class ScenarioEngine {
public:
    ScenarioEngine(const Scenario& sc, const Tolerances& tol = default_tols(),
                   ExecPolicy policy = ExecPolicy::parallel);
    ~ScenarioEngine();

    // eigenvalue lists in the padded window, sorted, repeated by multiplicity
    std::vector<double> window_positions(double s);
    void prefetch(const std::vector<double>& svals);

    int spectral_flow(FlowComputation* fc = nullptr); // Definition-style partition sum
    int sf_oracle();                                  // curve-tracking oracle
    std::pair<int, FlowComputation> maslov();         // Maslov index of (γ(D_s), γ(ker A_s*))
    LagrangianPath boundary_path() const;
    LagrangianPath cauchy_path() const;               // s -> trace of ker A_s^*
    const SymplecticSpace& trace_space() const;

    // max gap increment between consecutive Cauchy frames on an n-point grid
    double cauchy_gap_max_increment(int n);
    std::vector<std::pair<double, double>> cauchy_gap_profile(int n);

    const Scenario& scenario() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Data-parallel kernel and its serial reference: windowed eigenvalue lists
// for a batch of s values.
std::vector<std::vector<double>> window_roots_grid(ScenarioEngine& eng,
                                                   const std::vector<double>& svals);
std::vector<std::vector<double>> window_roots_grid_serial(ScenarioEngine& eng,
                                                          const std::vector<double>& svals);

// SF{A_D + a I : a in [0, eps]} and sum over a in (0, eps] of dim ker; the
// two components agree.
std::pair<int, int> perturbation_flow(const FirstOrderSystem& sys, double s0,
                                      const SubspaceFrame& boundary_frame, double eps,
                                      const Tolerances& tol = default_tols());

// Runs both sides of the spectral-flow formula on one scenario and collects
// the report.
FlowReport verify_gsff(const Scenario& sc, const Tolerances& tol = default_tols(),
                       ExecPolicy policy = ExecPolicy::parallel);

// Curve-tracking spectral flow of sampled position lists over a refining
// grid; shared by the ODE oracle and the matrix-path oracle.
int tracked_flow(const std::function<std::vector<double>(double)>& positions,
                 int initial_grid, double zero_band, double edge,
                 const Tolerances& tol = default_tols());

// Eigenvalue-tracking oracle applied to a hermitian matrix path.
int matrix_tracking_oracle(const OperatorPath& path,
                           const Tolerances& tol = default_tols());

} // namespace specmas
