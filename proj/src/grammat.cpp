#include "specmas/grammat.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

namespace specmas {

const Tolerances& default_tols() { return mutable_default_tols(); }

Tolerances& mutable_default_tols() {
    static Tolerances tols;
    return tols;
}

bool is_hermitian(const Mat& a, double tol_abs) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol_abs;
}

double max_abs_eig(const Mat& hermitian) {
    if (hermitian.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Mat gram_chol(const Mat& gram, const Tolerances& tol) {
    const int n = static_cast<int>(gram.rows());
    double scale = gram.cwiseAbs().maxCoeff();
    if (!is_hermitian(gram, tol.num * std::max(1.0, scale)))
        throw std::invalid_argument("gram matrix is not Hermitian");
    Eigen::LLT<Mat> llt(gram);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("gram matrix is not positive definite");
    Mat l = llt.matrixL();
    // reject nearly singular metrics
    double dmin = 1e300, dmax = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = std::abs(l(i, i));
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    if (dmin * dmin <= tol.rank_tol(dmax * dmax))
        throw std::invalid_argument("gram matrix is numerically singular");
    return l;
}

int numeric_rank(const Mat& m, const Tolerances& tol) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& sv = svd.singularValues();
    double cut = tol.rank_tol(sv(0));
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++r;
    return r;
}

Mat nullspace(const Mat& m, const Tolerances& tol) {
    const int cols = static_cast<int>(m.cols());
    if (cols == 0) return Mat(0, 0);
    if (m.rows() == 0) return Mat::Identity(cols, cols);
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double cut = tol.rank_tol(sv.size() ? sv(0) : 0.0);
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++r;
    return svd.matrixV().rightCols(cols - r);
}

Mat orthonormalize_chol(const Mat& frame, const Mat& chol, const Tolerances& tol) {
    const int n = static_cast<int>(frame.rows());
    if (frame.cols() == 0) return Mat(n, 0);
    Mat lifted = chol.adjoint() * frame;
    Eigen::JacobiSVD<Mat> svd(lifted, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    double cut = tol.rank_tol(sv(0));
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++r;
    Mat q = svd.matrixU().leftCols(r);
    // map back: columns of L^{-H} q are G-orthonormal
    return chol.adjoint().template triangularView<Eigen::Upper>().solve(q);
}

Mat orthonormalize(const Mat& frame, const Mat& gram, const Tolerances& tol) {
    return orthonormalize_chol(frame, gram_chol(gram, tol), tol);
}

Mat projector(const Mat& frame, const Mat& gram, const Tolerances& tol) {
    const int n = static_cast<int>(frame.rows());
    Mat q = orthonormalize(frame, gram, tol);
    if (q.cols() == 0) return Mat::Zero(n, n);
    return q * q.adjoint() * gram;
}

double gap_distance(const Mat& frame_m, const Mat& frame_n, const Mat& gram,
                    const Tolerances& tol) {
    if (frame_m.rows() != frame_n.rows())
        throw std::invalid_argument("gap_distance: ambient dimension mismatch");
    Mat l = gram_chol(gram, tol);
    Mat qm = l.adjoint() * orthonormalize_chol(frame_m, l, tol);
    Mat qn = l.adjoint() * orthonormalize_chol(frame_n, l, tol);
    const int n = static_cast<int>(frame_m.rows());
    Mat pm = qm.cols() ? Mat(qm * qm.adjoint()) : Mat::Zero(n, n);
    Mat pn = qn.cols() ? Mat(qn * qn.adjoint()) : Mat::Zero(n, n);
    return max_abs_eig(pm - pn);
}

bool span_contains(const Mat& outer, const Mat& inner, const Mat& gram,
                   const Tolerances& tol) {
    if (inner.cols() == 0) return true;
    Mat l = gram_chol(gram, tol);
    Mat qo = l.adjoint() * orthonormalize_chol(outer, l, tol);
    Mat qi = l.adjoint() * orthonormalize_chol(inner, l, tol);
    if (qi.cols() == 0) return true;
    Mat res = qi - qo * (qo.adjoint() * qi);
    Eigen::JacobiSVD<Mat> svd(res);
    double worst = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    return worst < tol.num;
}

bool span_equal(const Mat& a, const Mat& b, const Mat& gram, const Tolerances& tol) {
    Mat l = gram_chol(gram, tol);
    Mat qa = orthonormalize_chol(a, l, tol);
    Mat qb = orthonormalize_chol(b, l, tol);
    if (qa.cols() != qb.cols()) return false;
    return gap_distance(qa, qb, gram, tol) < tol.num;
}

Mat subspace_intersection(const Mat& a, const Mat& b, const Mat& gram,
                          const Tolerances& tol) {
    const int n = static_cast<int>(a.rows());
    if (a.cols() == 0 || b.cols() == 0) return Mat(n, 0);
    Mat l = gram_chol(gram, tol);
    Mat qa = orthonormalize_chol(a, l, tol);
    Mat qb = orthonormalize_chol(b, l, tol);
    Mat stacked(n, qa.cols() + qb.cols());
    stacked << qa, -qb;
    Mat ker = nullspace(stacked, tol);
    if (ker.cols() == 0) return Mat(n, 0);
    Mat vecs = qa * ker.topRows(qa.cols());
    return orthonormalize_chol(vecs, l, tol);
}

int subspace_intersection_dim(const Mat& a, const Mat& b, const Tolerances& tol) {
    // dim(A)+dim(B)-dim(A+B), ranks in the standard metric
    int da = numeric_rank(a, tol);
    int db = numeric_rank(b, tol);
    Mat qa = orthonormalize(a, identity_like(static_cast<int>(a.rows())), tol);
    Mat qb = orthonormalize(b, identity_like(static_cast<int>(b.rows())), tol);
    Mat jq(a.rows(), qa.cols() + qb.cols());
    jq << qa, qb;
    int dsum = numeric_rank(jq, tol);
    return da + db - dsum;
}

Mat orthogonal_complement(const Mat& frame, const Mat& gram, const Tolerances& tol) {
    const int n = static_cast<int>(frame.rows());
    if (frame.cols() == 0) return Mat::Identity(n, n);
    // y ⟂ span(F) in G iff F^H G y = 0
    Mat ker = nullspace(Mat(frame.adjoint() * gram), tol);
    return orthonormalize(ker, gram, tol);
}

WeightedEig weighted_eigh(const Mat& a, const Mat& gram) {
    WeightedEig out;
    Mat ga = gram * a;
    ga = 0.5 * (ga + ga.adjoint()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(ga, gram);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("weighted_eigh: eigensolver failed");
    out.values = es.eigenvalues();
    out.vectors = es.eigenvectors();
    return out;
}

WeightedEig weighted_eigh(const Mat& a) {
    WeightedEig out;
    Mat h = 0.5 * (a + a.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    out.values = es.eigenvalues();
    out.vectors = es.eigenvectors();
    return out;
}

Vec weighted_unitary_eigenvalues(const Mat& w) {
    Eigen::ComplexEigenSolver<Mat> es(w, false);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("unitary eigenvalue solve failed");
    return es.eigenvalues();
}

Vec weighted_unitary_eigenvalues(const Mat& w, const Mat& gram) {
    Mat l = gram_chol(gram);
    Mat lifted = l.adjoint() * w;
    Mat wt = l.adjoint()
                 .template triangularView<Eigen::Upper>()
                 .solve(lifted.adjoint())
                 .adjoint(); // L^H W L^{-H}
    return weighted_unitary_eigenvalues(wt);
}

std::vector<double> unitary_args(const Mat& w, const Mat& gram) {
    Vec ev = gram.size() ? weighted_unitary_eigenvalues(w, gram)
                         : weighted_unitary_eigenvalues(w);
    std::vector<double> args(ev.size());
    for (int i = 0; i < ev.size(); ++i) args[i] = std::arg(ev(i));
    std::sort(args.begin(), args.end());
    return args;
}

Mat random_hermitian(int n, std::function<double()> gauss) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = cplx(gauss(), gauss());
    return 0.5 * (a + a.adjoint()).eval();
}

Mat random_unitary(int n, std::function<double()> gauss) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = cplx(gauss(), gauss());
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(n, n);
    Mat r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i) {
        cplx d = r(i, i);
        q.col(i) *= (std::abs(d) > 0 ? d / std::abs(d) : cplx(1, 0));
    }
    return q;
}

} // namespace specmas
