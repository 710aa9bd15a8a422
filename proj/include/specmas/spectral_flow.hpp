#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "specmas/grammat.hpp"
#include "specmas/parallel.hpp"

namespace specmas {

enum class PathKind { hermitian, unitary };

// Co-orientation of the admissible curve.  standard = the convention of the
// two built-in curves (left to right across the imaginary segment, upward
// through 1); reversed flips it.
enum class FlowOrientation { standard, reversed };

// Continuous family s in [0,1] -> matrix, self-adjoint or unitary with
// respect to gram(s) (identity when gram is not set).
struct OperatorPath {
    int dim = 0;
    PathKind kind = PathKind::hermitian;
    std::function<Mat(double)> eval;
    std::function<Mat(double)> gram; // optional
    int sample_hint = 64;            // initial number of partition segments
};

struct FlowComputation {
    std::vector<double> partition;    // s_0 < ... < s_n
    std::vector<double> anchors;      // t_k in [s_k, s_{k+1}]
    std::vector<double> window_radii; // r_k
    std::vector<int> segment_terms;   // m^-(A(s_k,t_k)) - m^-(A(s_{k+1},t_k))
    int total = 0;
};

struct SpectralDecomposition {
    int m_plus = 0, m_zero = 0, m_minus = 0;
    RVec values; // ascending
    Mat vectors; // gram-orthonormal columns
    double zero_band = 0.0;
};

// Eigenvalues classified by sign with a zero band of half-width
// zero_rel * max|eigenvalue|.
SpectralDecomposition spectral_decomposition(const Mat& a, const Mat& gram,
                                             const Tolerances& tol = default_tols());
SpectralDecomposition spectral_decomposition(const Mat& a,
                                             const Tolerances& tol = default_tols());

// Gram-orthogonal projection onto the eigenspaces with eigenvalue in
// (lo, hi).  Throws ConvergenceError when an eigenvalue sits within
// gap_frac * (hi - lo) of either boundary.
Mat spectral_projection(const Mat& a, const Mat& gram, double lo, double hi,
                        const Tolerances& tol = default_tols());

// Resolvent contour integral -(2*pi*i)^-1 ∮ (A - z)^-1 dz over the circle
// |z| = radius, trapezoid rule.  Validation path for spectral_projection.
Mat contour_projection(const Mat& a, const Mat& gram, double radius,
                       int nodes = 256);

// Projection onto X^+(A) ⊕ X^0(A).
Mat aps_projection(const Mat& a, const Mat& gram,
                   const Tolerances& tol = default_tols());

// Rank of the spectral projection onto the part of the spectrum on the
// admissible curve: eigenvalues in the zero band (hermitian) or within the
// band of 1 (unitary).
int hyperbolic_nullity(const Mat& a, PathKind kind, const Mat& gram,
                       const Tolerances& tol = default_tols());

// A (A^2 + I)^{-1/2} by functional calculus.
Mat riesz_transform(const Mat& a, const Mat& gram,
                    const Tolerances& tol = default_tols());

// ---------------------------------------------------------------------------
// Partition engine.  Works on "position" samplers: at each s the sampler
// returns the sorted real coordinates of the spectrum transverse to the
// curve (eigenvalues for hermitian paths, eigenvalue arguments in (-pi, pi]
// for unitary paths).  Lists of varying length are allowed, which is what
// the boundary-value layer feeds in.
// ---------------------------------------------------------------------------

struct SpectrumSampler {
    std::function<std::vector<double>(double)> positions;
    bool circular = false;
    double zero_band = 1e-8; // absolute half-width of the band around 0
};

FlowComputation sf_partition_core(const SpectrumSampler& sampler, int sample_hint,
                                  const Tolerances& tol = default_tols(),
                                  FlowOrientation orientation = FlowOrientation::standard,
                                  ExecPolicy policy = ExecPolicy::parallel);

std::pair<int, FlowComputation>
sf_partition(const OperatorPath& path, const Tolerances& tol = default_tols(),
             FlowOrientation orientation = FlowOrientation::standard,
             ExecPolicy policy = ExecPolicy::parallel);

// Sorted spectrum positions of a path sample; the batch versions are the
// data-parallel kernel and its serial reference.
std::vector<double> path_positions(const OperatorPath& path, double s);
std::vector<std::vector<double>> spectra_grid(const OperatorPath& path,
                                              const std::vector<double>& svals);
std::vector<std::vector<double>> spectra_grid_serial(const OperatorPath& path,
                                                     const std::vector<double>& svals);

// Absolute zero band used for a path, estimated from endpoint and midpoint
// spectral scales.
double path_zero_band(const OperatorPath& path, const Tolerances& tol = default_tols());

SpectrumSampler make_sampler(const OperatorPath& path,
                             const Tolerances& tol = default_tols());

// ---------------------------------------------------------------------------
// Crossing-form engine (self-adjoint case).
// ---------------------------------------------------------------------------

struct CrossingRecordSF {
    double t = 0.0;
    int nullity = 0;
    Mat b_restricted;                         // P_t Ȧ_t P_t on the kernel window
    int m_plus = 0, m_zero = 0, m_minus = 0;  // signature data of b_restricted
    bool at_start = false, at_end = false;
    bool fallback = false; // non-regular crossing, resolved by partition
    int contribution = 0;
};

// Locates crossings of a C^1 hermitian path and sums their crossing-form
// contributions; non-regular crossings fall back to the partition engine on
// a shrunken interval.
int sf_crossing(const OperatorPath& path, std::vector<CrossingRecordSF>& records,
                const Tolerances& tol = default_tols());

// Restriction of a path to [a, b], reparametrized to [0, 1].
OperatorPath subpath(const OperatorPath& path, double a, double b);

} // namespace specmas
