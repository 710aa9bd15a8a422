#pragma once

#include "specmas/grammat.hpp"

namespace specmas {

// A closed subspace of C^n given by a spanning column frame.  k = 0 (zero
// subspace) and k = n (full space) are both legal.
struct SubspaceFrame {
    int ambient_dim = 0;
    Mat frame; // ambient_dim x k, full column rank

    SubspaceFrame() = default;
    SubspaceFrame(int n, Mat f) : ambient_dim(n), frame(std::move(f)) {}

    int dim() const { return static_cast<int>(frame.cols()); }

    static SubspaceFrame zero(int n) { return {n, Mat(n, 0)}; }
    static SubspaceFrame full(int n) { return {n, Mat::Identity(n, n)}; }
    static SubspaceFrame span(const Mat& columns) {
        return {static_cast<int>(columns.rows()), columns};
    }
};

// Finite-dimensional complex Hilbert space with symplectic structure
// ω(x,y) = <Jx,y>, where <x,y> = y^H G x and J is invertible and
// skew-adjoint with respect to G.  The splitting bases of sqrt(-1) J are
// precomputed at construction.  Convention: H^± := H^∓(sqrt(-1) J), so
// basis_plus spans the negative eigenspace of iJ and basis_minus the
// positive one.
class SymplecticSpace {
public:
    static SymplecticSpace create(Mat gram, Mat j,
                                  const Tolerances& tol = default_tols());
    // gram = I, J = diag(i,-i,i,-i,...)
    static SymplecticSpace standard(int dim,
                                    const Tolerances& tol = default_tols());

    int dim() const { return dim_; }
    const Mat& gram() const { return gram_; }
    const Mat& J() const { return j_; }
    const Mat& chol() const { return chol_; }
    const Mat& basis_plus() const { return basis_plus_; }
    const Mat& basis_minus() const { return basis_minus_; }
    // eigenvalues of iJ on H^+ (all negative) and H^- (all positive)
    const RVec& theta_plus() const { return theta_plus_; }
    const RVec& theta_minus() const { return theta_minus_; }

    cplx omega(const Vec& x, const Vec& y) const {
        return (y.adjoint() * gram_ * j_ * x)(0, 0);
    }
    Mat omega_matrix() const { return gram_ * j_; }

private:
    int dim_ = 0;
    Mat gram_, j_, chol_;
    Mat basis_plus_, basis_minus_;
    RVec theta_plus_, theta_minus_;
};

// Map H^+ -> H^- whose graph is a Lagrangian subspace; u is the matrix in
// the space's splitting bases.  In those bases the graph condition reads
// u^H diag(θ⁻) u = -diag(θ⁺) (see docs/conventions.md).
struct UnitaryGenerator {
    Mat basis_plus;
    Mat basis_minus;
    Mat u;
};

enum class SubspaceClass { isotropic, coisotropic, lagrangian, none };

// λ^ω = { y : ω(x,y) = 0 for all x in λ }
SubspaceFrame annihilator(const SymplecticSpace& space, const SubspaceFrame& lambda,
                          const Tolerances& tol = default_tols());

SubspaceClass classify(const SymplecticSpace& space, const SubspaceFrame& lambda,
                       const Tolerances& tol = default_tols());

// dim(λ∩μ) - dim(H/(λ+μ)), by rank-revealing factorizations.
int fredholm_index(const SymplecticSpace& space, const SubspaceFrame& lambda,
                   const SubspaceFrame& mu, const Tolerances& tol = default_tols());

UnitaryGenerator lagrangian_to_unitary(const SymplecticSpace& space,
                                       const SubspaceFrame& lambda,
                                       const Tolerances& tol = default_tols());
SubspaceFrame unitary_to_lagrangian(const SymplecticSpace& space,
                                    const UnitaryGenerator& gen,
                                    const Tolerances& tol = default_tols());

// Generator matrix only (no validation of the input beyond invertibility of
// the H^+ coordinate block); the workhorse behind the Maslov reduction.
Mat generator_matrix(const SymplecticSpace& space, const SubspaceFrame& lambda,
                     const Tolerances& tol = default_tols());
SubspaceFrame lagrangian_from_generator(const SymplecticSpace& space, const Mat& u);

// dim ker(U V^{-1} - I) for the generators of two Lagrangians; cross-checked
// against the direct rank computation of dim(λ∩μ).
int intersection_dim(const SymplecticSpace& space, const SubspaceFrame& lambda,
                     const SubspaceFrame& mu, const Tolerances& tol = default_tols());

double gap_distance(const SymplecticSpace& space, const SubspaceFrame& m,
                    const SubspaceFrame& n, const Tolerances& tol = default_tols());

// Gap between D1/Y and D2/Y, computed as the gap between D1∩Y^⊥ and D2∩Y^⊥.
double quotient_gap(const SymplecticSpace& space, const SubspaceFrame& d1,
                    const SubspaceFrame& d2, const SubspaceFrame& y,
                    const Tolerances& tol = default_tols());

bool check_generator_condition(const SymplecticSpace& space, const Mat& u,
                               const Tolerances& tol = default_tols());

} // namespace specmas
