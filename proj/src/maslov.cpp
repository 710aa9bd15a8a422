#include "specmas/maslov.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace specmas {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double wrap_angle(double a) {
    while (a > kPi) a -= 2 * kPi;
    while (a <= -kPi) a += 2 * kPi;
    return a;
}

void require_lagrangian_sample(const SymplecticSpace& space, const SubspaceFrame& f,
                               double s, const Tolerances& tol) {
    if (2 * f.dim() != space.dim())
        throw std::invalid_argument("non-Lagrangian sample (wrong dimension) at s=" +
                                    std::to_string(s));
    Mat q = orthonormalize_chol(f.frame, space.chol(), tol);
    Mat form = q.adjoint() * space.omega_matrix() * q;
    double scale = std::max(1.0, space.J().cwiseAbs().maxCoeff());
    if (form.cwiseAbs().maxCoeff() > 1e4 * tol.num * scale)
        throw std::invalid_argument("non-Lagrangian sample (not isotropic) at s=" +
                                    std::to_string(s));
}

} // namespace

SymplecticFamily constant_family(const SymplecticSpace& space) {
    SymplecticFamily fam;
    fam.dim = space.dim();
    Mat g = space.gram(), j = space.J();
    fam.gram_of = [g](double) { return g; };
    fam.J_of = [j](double) { return j; };
    return fam;
}

SymplecticSpace family_space(const SymplecticFamily& family, double s,
                             const Tolerances& tol) {
    Mat g = family.gram_of ? family.gram_of(s) : identity_like(family.dim);
    return SymplecticSpace::create(g, family.J_of(s), tol);
}

namespace {

struct GeneratorData {
    SymplecticSpace space;
    Mat w;          // U V^{-1}
    Mat theta_gram; // diag of iJ eigenvalues on H^-, the metric W is unitary for
};

GeneratorData generator_ratio(const LagrangianPath& lambda, const LagrangianPath& mu,
                              const SymplecticFamily& family, double s,
                              const Tolerances& tol) {
    GeneratorData gd{family_space(family, s, tol), {}, {}};
    SubspaceFrame lf = lambda.eval(s);
    SubspaceFrame mf = mu.eval(s);
    require_lagrangian_sample(gd.space, lf, s, tol);
    require_lagrangian_sample(gd.space, mf, s, tol);
    Mat u = generator_matrix(gd.space, lf, tol);
    Mat v = generator_matrix(gd.space, mf, tol);
    gd.w = u * v.inverse();
    gd.theta_gram = gd.space.theta_minus().cast<cplx>().asDiagonal();
    return gd;
}

std::vector<double> ratio_args(const LagrangianPath& lambda, const LagrangianPath& mu,
                               const SymplecticFamily& family, double s,
                               const Tolerances& tol) {
    GeneratorData gd = generator_ratio(lambda, mu, family, s, tol);
    return unitary_args(gd.w, gd.theta_gram);
}

} // namespace

std::pair<int, FlowComputation>
maslov_index(const LagrangianPath& lambda, const LagrangianPath& mu,
             const SymplecticFamily& family, const Tolerances& tol, int sample_hint,
             ExecPolicy policy) {
    SpectrumSampler sampler;
    sampler.circular = true;
    sampler.zero_band = tol.zero_band(1.0);
    sampler.positions = [&](double s) { return ratio_args(lambda, mu, family, s, tol); };
    FlowComputation fc = sf_partition_core(sampler, sample_hint, tol,
                                           FlowOrientation::standard, policy);
    return {-fc.total, fc};
}

Mat crossing_form_q(const LagrangianPath& lambda, double t, const Mat& complement,
                    const SymplecticFamily& family, const Mat& basis,
                    const Tolerances& tol) {
    SymplecticSpace space = family_space(family, t, tol);
    const int n = space.dim();
    const int p = static_cast<int>(basis.cols());
    if (complement.cols() + basis.cols() > n || complement.rows() != n)
        throw std::invalid_argument("crossing_form_q: bad complement frame");

    // w_v(s) solves v + w = (columns of λ_s) c with w in span(complement)
    auto w_of = [&](double s) -> Mat {
        Mat fs = lambda.eval(s).frame;
        Mat sys(n, fs.cols() + complement.cols());
        sys << fs, -complement;
        Eigen::PartialPivLU<Mat> lu(sys);
        Mat sol = lu.solve(basis);
        double residual = (sys * sol - basis).cwiseAbs().maxCoeff();
        if (residual > 1e-8 * std::max(1.0, basis.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("crossing_form_q: complement is not transversal");
        return complement * sol.bottomRows(complement.cols());
    };

    auto diff = [&](double h) -> Mat {
        if (t - h >= 0.0 && t + h <= 1.0) return (w_of(t + h) - w_of(t - h)) / (2.0 * h);
        if (t + 2 * h <= 1.0)
            return (-3.0 * w_of(t) + 4.0 * w_of(t + h) - w_of(t + 2 * h)) / (2.0 * h);
        return (3.0 * w_of(t) - 4.0 * w_of(t - h) + w_of(t - 2 * h)) / (2.0 * h);
    };
    double h = tol.deriv_step;
    Mat d1 = diff(h);
    Mat d2 = diff(h / 2);
    Mat wdot = (4.0 * d2 - d1) / 3.0;
    double scale = std::max(1.0, wdot.cwiseAbs().maxCoeff());
    if ((wdot - d2).cwiseAbs().maxCoeff() > tol.deriv_check * scale)
        throw ConvergenceError("crossing_form_q: path not differentiable at t=" +
                               std::to_string(t));

    Mat omega = space.omega_matrix();
    Mat q(p, p);
    for (int j = 0; j < p; ++j)
        for (int k = 0; k < p; ++k)
            q(j, k) = (wdot.col(k).adjoint() * omega * basis.col(j))(0, 0);
    return q;
}

Mat crossing_form_q(const LagrangianPath& lambda, double t, const Mat& complement,
                    const SymplecticFamily& family, const Tolerances& tol) {
    SymplecticSpace space = family_space(family, t, tol);
    Mat basis = orthonormalize_chol(lambda.eval(t).frame, space.chol(), tol);
    return crossing_form_q(lambda, t, complement, family, basis, tol);
}

Mat lagrangian_complement(const SymplecticSpace& space, const SubspaceFrame& lambda,
                          const Tolerances& tol) {
    Mat u = generator_matrix(space, lambda, tol);
    return space.basis_plus() - space.basis_minus() * u;
}

CrossingRecordMas crossing_form_gamma(const LagrangianPath& lambda,
                                      const LagrangianPath& mu, double t,
                                      const SymplecticFamily& family,
                                      const Tolerances& tol) {
    SymplecticSpace space = family_space(family, t, tol);
    SubspaceFrame lf = lambda.eval(t);
    SubspaceFrame mf = mu.eval(t);
    Mat basis = subspace_intersection(lf.frame, mf.frame, space.gram(), tol);
    if (basis.cols() == 0)
        throw std::invalid_argument("crossing_form_gamma: t is not a crossing");

    CrossingRecordMas rec;
    rec.t = t;
    rec.intersection_frame = basis;
    Mat wl = lagrangian_complement(space, lf, tol);
    Mat wm = lagrangian_complement(space, mf, tol);
    rec.q_lambda = crossing_form_q(lambda, t, wl, family, basis, tol);
    rec.q_mu = crossing_form_q(mu, t, wm, family, basis, tol);
    Mat gamma = rec.q_lambda - rec.q_mu;
    rec.gamma = 0.5 * (gamma + gamma.adjoint()).eval();
    SpectralDecomposition sig = spectral_decomposition(rec.gamma, tol);
    rec.sig_plus = sig.m_plus;
    rec.sig_zero = sig.m_zero;
    rec.sig_minus = sig.m_minus;
    return rec;
}

namespace {

// circular nearest matching of the target list onto ref; lists are small
std::vector<int> match_args(const std::vector<double>& ref,
                            const std::vector<double>& target) {
    std::vector<int> assign(ref.size(), -1);
    std::vector<bool> used(target.size(), false);
    for (size_t i = 0; i < ref.size(); ++i) {
        double best = 1e300;
        int pick = -1;
        for (size_t j = 0; j < target.size(); ++j) {
            if (used[j]) continue;
            double d = std::abs(wrap_angle(ref[i] - target[j]));
            if (d < best) {
                best = d;
                pick = static_cast<int>(j);
            }
        }
        assign[i] = pick;
        if (pick >= 0) used[pick] = true;
    }
    return assign;
}

} // namespace

int maslov_via_crossings(const LagrangianPath& lambda, const LagrangianPath& mu,
                         const SymplecticFamily& family,
                         std::vector<CrossingRecordMas>& records,
                         const Tolerances& tol) {
    records.clear();
    double band = tol.zero_band(1.0);
    auto args_at = [&](double s) { return ratio_args(lambda, mu, family, s, tol); };

    int grid = 512;
    std::vector<double> crossings;
    for (int round = 0;; ++round) {
        crossings.clear();
        std::vector<double> svals(grid + 1);
        std::vector<std::vector<double>> args(grid + 1);
        for (int i = 0; i <= grid; ++i) svals[i] = static_cast<double>(i) / grid;
        for_each_index(grid + 1, ExecPolicy::parallel,
                       [&](int i) { args[i] = args_at(svals[i]); });

        double max_move = 0.0;
        bool ok = true;
        for (int i = 0; i < grid && ok; ++i) {
            auto assign = match_args(args[i], args[i + 1]);
            for (size_t k = 0; k < assign.size(); ++k) {
                if (assign[k] < 0) { ok = false; break; }
                double x = args[i][k];
                double y = args[i + 1][assign[k]];
                max_move = std::max(max_move, std::abs(wrap_angle(y - x)));
                bool bracket = (std::abs(x) < kPi / 2 && std::abs(y) < kPi / 2 &&
                                ((x < -band && y > band) || (x > band && y < -band)));
                if (std::abs(x) <= band) {
                    crossings.push_back(svals[i]);
                } else if (bracket) {
                    // bisect the matched argument curve
                    double a = svals[i], b = svals[i + 1];
                    double xa = x, xb = y;
                    int guard = 0;
                    while (b - a > 1e-10 && guard++ < 80) {
                        double m = 0.5 * (a + b);
                        auto am = args_at(m);
                        double pred = 0.5 * (xa + xb);
                        double best = 1e300, xm = 0.0;
                        for (double v : am) {
                            double d = std::abs(wrap_angle(v - pred));
                            if (d < best) { best = d; xm = v; }
                        }
                        if ((xa < 0) == (xm < 0)) { a = m; xa = xm; }
                        else { b = m; xb = xm; }
                    }
                    crossings.push_back(0.5 * (a + b));
                }
            }
        }
        for (double v : args[grid])
            if (std::abs(v) <= band) crossings.push_back(1.0);

        if (ok && max_move < kPi / 3) break;
        grid *= 2;
        if (round >= 2)
            throw ConvergenceError("maslov_via_crossings: crossing scan did not stabilize");
    }

    std::sort(crossings.begin(), crossings.end());
    std::vector<double> merged;
    for (double t : crossings)
        if (merged.empty() || t - merged.back() > 1e-8) merged.push_back(t);

    int total = 0;
    for (double t : merged) {
        CrossingRecordMas rec = crossing_form_gamma(lambda, mu, t, family, tol);
        rec.at_start = t < 1e-7;
        rec.at_end = t > 1.0 - 1e-7;
        if (rec.sig_zero != 0) {
            std::ostringstream os;
            os << "maslov_via_crossings: degenerate crossing at t=" << t
               << "; use maslov_index (partition engine) instead";
            throw ConvergenceError(os.str());
        }
        if (rec.at_start)
            rec.contribution = rec.sig_plus;
        else if (rec.at_end)
            rec.contribution = -rec.sig_minus;
        else
            rec.contribution = rec.sig_plus - rec.sig_minus;
        total += rec.contribution;
        records.push_back(rec);
    }
    return total;
}

int winding_oracle(const LagrangianPath& lambda_loop, const LagrangianPath& mu,
                   const SymplecticFamily& family,
                   std::vector<WindingTracePoint>* trace, const Tolerances& tol) {
    SymplecticSpace space = family_space(family, 0.0, tol);
    for (double s : {0.37, 1.0}) {
        SymplecticSpace other = family_space(family, s, tol);
        if ((other.J() - space.J()).cwiseAbs().maxCoeff() > tol.num ||
            (other.gram() - space.gram()).cwiseAbs().maxCoeff() > tol.num)
            throw std::invalid_argument("winding_oracle: family must be constant");
    }
    if (!span_equal(lambda_loop.eval(0.0).frame, lambda_loop.eval(1.0).frame,
                    space.gram(), tol))
        throw std::invalid_argument("winding_oracle: lambda is not a loop");

    Mat v0 = generator_matrix(space, mu.eval(0.0), tol);
    auto det_at = [&](double s) -> cplx {
        Mat u = generator_matrix(space, lambda_loop.eval(s), tol);
        return (u.inverse() * v0).determinant();
    };

    double total = 0.0;
    int n = 256;
    double prev_total = 1e300;
    std::vector<WindingTracePoint> pts;
    for (int round = 0; round < 8; ++round) {
        pts.clear();
        pts.reserve(n + 1);
        total = 0.0;
        cplx f0 = det_at(0.0);
        double acc = std::arg(f0);
        pts.push_back({0.0, f0, acc});
        cplx prev = f0;
        bool step_ok = true;
        for (int i = 1; i <= n; ++i) {
            double s = static_cast<double>(i) / n;
            cplx f = det_at(s);
            double d = wrap_angle(std::arg(f) - std::arg(prev));
            if (std::abs(d) > kPi / 2) step_ok = false;
            acc += d;
            total += d;
            pts.push_back({s, f, acc});
            prev = f;
        }
        if (step_ok && std::abs(total - prev_total) < 1e-6) break;
        prev_total = total;
        n *= 2;
    }
    if (trace) *trace = pts;
    return static_cast<int>(std::lround(total / (2 * kPi)));
}

} // namespace specmas
