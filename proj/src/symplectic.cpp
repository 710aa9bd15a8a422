#include "specmas/symplectic.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace specmas {

SymplecticSpace SymplecticSpace::create(Mat gram, Mat j, const Tolerances& tol) {
    SymplecticSpace s;
    s.dim_ = static_cast<int>(gram.rows());
    if (j.rows() != s.dim_ || j.cols() != s.dim_)
        throw std::invalid_argument("SymplecticSpace: J dimension mismatch");
    s.chol_ = gram_chol(gram, tol); // validates Hermitian positive definite
    double jscale = j.cwiseAbs().maxCoeff();
    Mat gj = gram * j;
    if ((gj + gj.adjoint()).cwiseAbs().maxCoeff() > tol.num * std::max(1.0, jscale))
        throw std::invalid_argument("SymplecticSpace: J is not skew-adjoint w.r.t. gram");
    {
        Eigen::JacobiSVD<Mat> svd(j);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) <= tol.rank_tol(sv(0)))
            throw std::invalid_argument("SymplecticSpace: J is singular");
    }
    // iJ is self-adjoint w.r.t. gram; its spectrum must stay away from 0 for
    // the splitting to be defined.
    WeightedEig eig = weighted_eigh(Mat(cplx(0, 1) * j), gram);
    int n_neg = 0;
    for (int i = 0; i < s.dim_; ++i) {
        if (std::abs(eig.values(i)) < tol.num)
            throw std::invalid_argument("SymplecticSpace: eigenvalue of iJ too close to 0");
        if (eig.values(i) < 0) ++n_neg;
    }
    // H^+ := H^-(iJ), H^- := H^+(iJ)
    s.basis_plus_ = eig.vectors.leftCols(n_neg);
    s.theta_plus_ = eig.values.head(n_neg);
    s.basis_minus_ = eig.vectors.rightCols(s.dim_ - n_neg);
    s.theta_minus_ = eig.values.tail(s.dim_ - n_neg);
    s.gram_ = std::move(gram);
    s.j_ = std::move(j);
    return s;
}

SymplecticSpace SymplecticSpace::standard(int dim, const Tolerances& tol) {
    Mat j = Mat::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) j(i, i) = (i % 2 == 0) ? cplx(0, 1) : cplx(0, -1);
    return create(Mat::Identity(dim, dim), j, tol);
}

static void require_frame(const SymplecticSpace& space, const SubspaceFrame& f,
                          const Tolerances& tol) {
    if (f.ambient_dim != space.dim() || f.frame.rows() != space.dim())
        throw std::invalid_argument("frame ambient dimension mismatch");
    if (f.dim() == 0) return;
    Eigen::JacobiSVD<Mat> svd(f.frame);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= tol.rank_tol(sv(0)))
        throw std::invalid_argument("rank-deficient subspace frame");
}

SubspaceFrame annihilator(const SymplecticSpace& space, const SubspaceFrame& lambda,
                          const Tolerances& tol) {
    require_frame(space, lambda, tol);
    const int n = space.dim();
    if (lambda.dim() == 0) return SubspaceFrame::full(n);
    // ω(x,y) = y^H (G J) x = 0 for all x = F c  <=>  (G J F)^H y = 0
    Mat cond = (space.omega_matrix() * lambda.frame).adjoint();
    Mat ker = nullspace(cond, tol);
    return {n, orthonormalize_chol(ker, space.chol(), tol)};
}

SubspaceClass classify(const SymplecticSpace& space, const SubspaceFrame& lambda,
                       const Tolerances& tol) {
    SubspaceFrame ann = annihilator(space, lambda, tol);
    bool iso = span_contains(ann.frame, lambda.frame, space.gram(), tol);
    bool coiso = span_contains(lambda.frame, ann.frame, space.gram(), tol);
    if (iso && coiso) return SubspaceClass::lagrangian;
    if (iso) return SubspaceClass::isotropic;
    if (coiso) return SubspaceClass::coisotropic;
    return SubspaceClass::none;
}

int fredholm_index(const SymplecticSpace& space, const SubspaceFrame& lambda,
                   const SubspaceFrame& mu, const Tolerances& tol) {
    require_frame(space, lambda, tol);
    require_frame(space, mu, tol);
    const int n = space.dim();
    int dl = lambda.dim(), dm = mu.dim();
    Mat joint(n, dl + dm);
    if (dl + dm == 0) return 0 - n;
    joint << lambda.frame, mu.frame;
    int dsum = numeric_rank(joint, tol);
    int dcap = dl + dm - dsum;
    return dcap - (n - dsum);
}

Mat generator_matrix(const SymplecticSpace& space, const SubspaceFrame& lambda,
                     const Tolerances& tol) {
    Mat q = orthonormalize_chol(lambda.frame, space.chol(), tol);
    Mat a = space.basis_plus().adjoint() * space.gram() * q;
    Mat b = space.basis_minus().adjoint() * space.gram() * q;
    if (a.rows() != a.cols())
        throw std::invalid_argument("generator: subspace dimension does not match dim H^+");
    Eigen::JacobiSVD<Mat> svd(a);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= tol.rank_tol(sv(0)))
        throw std::invalid_argument("generator: subspace is not transversal to H^-");
    return b * a.inverse();
}

SubspaceFrame lagrangian_from_generator(const SymplecticSpace& space, const Mat& u) {
    Mat f = space.basis_plus() + space.basis_minus() * u;
    return {space.dim(), f};
}

bool check_generator_condition(const SymplecticSpace& space, const Mat& u,
                               const Tolerances& tol) {
    Mat theta_m = space.theta_minus().cast<cplx>().asDiagonal();
    Mat theta_p = (-space.theta_plus()).cast<cplx>().asDiagonal();
    Mat lhs = u.adjoint() * theta_m * u;
    double scale = std::max(1.0, theta_p.cwiseAbs().maxCoeff());
    return (lhs - theta_p).cwiseAbs().maxCoeff() < 1e3 * tol.num * scale;
}

UnitaryGenerator lagrangian_to_unitary(const SymplecticSpace& space,
                                       const SubspaceFrame& lambda,
                                       const Tolerances& tol) {
    require_frame(space, lambda, tol);
    if (classify(space, lambda, tol) != SubspaceClass::lagrangian)
        throw std::invalid_argument("lagrangian_to_unitary: input is not Lagrangian");
    UnitaryGenerator gen;
    gen.basis_plus = space.basis_plus();
    gen.basis_minus = space.basis_minus();
    gen.u = generator_matrix(space, lambda, tol);
    return gen;
}

SubspaceFrame unitary_to_lagrangian(const SymplecticSpace& space,
                                    const UnitaryGenerator& gen,
                                    const Tolerances& tol) {
    if (!check_generator_condition(space, gen.u, tol))
        throw std::invalid_argument("unitary_to_lagrangian: generator condition violated");
    SubspaceFrame f = lagrangian_from_generator(space, gen.u);
    f.frame = orthonormalize_chol(f.frame, space.chol(), tol);
    return f;
}

int intersection_dim(const SymplecticSpace& space, const SubspaceFrame& lambda,
                     const SubspaceFrame& mu, const Tolerances& tol) {
    if (classify(space, lambda, tol) != SubspaceClass::lagrangian ||
        classify(space, mu, tol) != SubspaceClass::lagrangian)
        throw std::invalid_argument("intersection_dim: inputs must be Lagrangian");
    Mat u = generator_matrix(space, lambda, tol);
    Mat v = generator_matrix(space, mu, tol);
    Mat w = u * v.inverse();
    Mat shifted = w - Mat::Identity(w.rows(), w.cols());
    Eigen::JacobiSVD<Mat> svd(shifted);
    const auto& sv = svd.singularValues();
    double cut = tol.rank_tol(std::max(1.0, sv.size() ? sv(0) : 1.0));
    int count = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) < cut) ++count;
    int direct = subspace_intersection_dim(lambda.frame, mu.frame, tol);
    if (count != direct) {
        std::ostringstream os;
        os << "intersection_dim: unitary count " << count
           << " disagrees with rank computation " << direct;
        throw std::runtime_error(os.str());
    }
    return count;
}

double gap_distance(const SymplecticSpace& space, const SubspaceFrame& m,
                    const SubspaceFrame& n, const Tolerances& tol) {
    return gap_distance(m.frame, n.frame, space.gram(), tol);
}

double quotient_gap(const SymplecticSpace& space, const SubspaceFrame& d1,
                    const SubspaceFrame& d2, const SubspaceFrame& y,
                    const Tolerances& tol) {
    if (!span_contains(d1.frame, y.frame, space.gram(), tol) ||
        !span_contains(d2.frame, y.frame, space.gram(), tol))
        throw std::invalid_argument("quotient_gap: Y must be contained in both subspaces");
    Mat yperp = orthogonal_complement(y.frame, space.gram(), tol);
    Mat a = subspace_intersection(d1.frame, yperp, space.gram(), tol);
    Mat b = subspace_intersection(d2.frame, yperp, space.gram(), tol);
    return gap_distance(a, b, space.gram(), tol);
}

} // namespace specmas
