#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "specmas/tolerances.hpp"

namespace specmas {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

// Linear algebra relative to an inner product <x,y> = y^H G x given by a
// Hermitian positive definite Gram matrix G.  All subspace computations in
// the library go through these helpers so that non-standard metrics are
// handled uniformly.  The convention throughout: inner products are linear
// in the first argument and conjugate linear in the second.

inline Mat identity_like(int n) { return Mat::Identity(n, n); }

// Cholesky factor L with G = L L^H.  Throws if G is not Hermitian positive
// definite at the configured tolerances.
Mat gram_chol(const Mat& gram, const Tolerances& tol = default_tols());

double max_abs_eig(const Mat& hermitian);

// Columns of the result span the same space as F and are G-orthonormal.
// Rank-deficient input is reduced to its numerical rank.
Mat orthonormalize(const Mat& frame, const Mat& gram,
                   const Tolerances& tol = default_tols());
Mat orthonormalize_chol(const Mat& frame, const Mat& chol,
                        const Tolerances& tol = default_tols());

int numeric_rank(const Mat& m, const Tolerances& tol = default_tols());

// Orthonormal (standard metric) basis of the kernel of m; n x 0 when trivial.
Mat nullspace(const Mat& m, const Tolerances& tol = default_tols());

// G-orthogonal projection onto span(frame).
Mat projector(const Mat& frame, const Mat& gram,
              const Tolerances& tol = default_tols());

// Operator norm of P_M - P_N in the G metric; symmetric, in [0,1] when
// the subspaces have equal dimension.
double gap_distance(const Mat& frame_m, const Mat& frame_n, const Mat& gram,
                    const Tolerances& tol = default_tols());

// True when span(inner) is contained in span(outer) up to tol.num.
bool span_contains(const Mat& outer, const Mat& inner, const Mat& gram,
                   const Tolerances& tol = default_tols());
bool span_equal(const Mat& a, const Mat& b, const Mat& gram,
                const Tolerances& tol = default_tols());

// Basis of span(a) ∩ span(b) (G-orthonormal columns).
Mat subspace_intersection(const Mat& a, const Mat& b, const Mat& gram,
                          const Tolerances& tol = default_tols());
int subspace_intersection_dim(const Mat& a, const Mat& b,
                              const Tolerances& tol = default_tols());

// G-orthogonal complement of span(frame).
Mat orthogonal_complement(const Mat& frame, const Mat& gram,
                          const Tolerances& tol = default_tols());

struct WeightedEig {
    RVec values;  // ascending
    Mat vectors;  // columns; vectors^H * G * vectors = I
};

// Eigendecomposition of an operator A that is self-adjoint with respect to
// G, i.e. G*A Hermitian.  For G = I this is the ordinary Hermitian solve.
WeightedEig weighted_eigh(const Mat& a, const Mat& gram);
WeightedEig weighted_eigh(const Mat& a);

// Eigenvalues of an operator that is unitary with respect to G.  Returned
// as complex numbers on (numerically near) the unit circle.
Vec weighted_unitary_eigenvalues(const Mat& w, const Mat& gram);
Vec weighted_unitary_eigenvalues(const Mat& w);

// Sorted arguments in (-pi, pi] of the eigenvalues above.
std::vector<double> unitary_args(const Mat& w, const Mat& gram);

bool is_hermitian(const Mat& a, double tol_abs);

// Entrywise random Hermitian / unitary helpers used by tests and the
// scenario generator.
Mat random_hermitian(int n, std::function<double()> gauss);
Mat random_unitary(int n, std::function<double()> gauss);

} // namespace specmas
