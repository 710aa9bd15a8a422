#include "specmas/bvp.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

namespace specmas {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
// Band for "eigenvalue at 0" decisions on shooting roots.  Must sit well
// above the certified root accuracy (~1e-7) and well below eigenvalue
// spacings.
constexpr double kBvpZeroBand = 1e-6;

using SmallMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, 0, 8, 8>;

double wrap_angle(double a) {
    while (a > kPi) a -= 2 * kPi;
    while (a <= -kPi) a += 2 * kPi;
    return a;
}

void validate_system(const FirstOrderSystem& sys, const Tolerances& tol) {
    if (sys.m <= 0 || sys.sigma.rows() != sys.m || sys.sigma.cols() != sys.m)
        throw std::invalid_argument("FirstOrderSystem: bad sigma dimensions");
    double scale = sys.sigma.cwiseAbs().maxCoeff();
    if ((sys.sigma + sys.sigma.adjoint()).cwiseAbs().maxCoeff() > tol.num * std::max(1.0, scale))
        throw std::invalid_argument("FirstOrderSystem: sigma is not skew-adjoint");
    Eigen::JacobiSVD<Mat> svd(sys.sigma);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= tol.rank_tol(sv(0)))
        throw std::invalid_argument("FirstOrderSystem: sigma is singular");
}

// sigma^{-1} B(s, j h/2) on the half-step grid, with the Hermitian invariant
// checked at every node.
std::vector<SmallMat> build_half_grid(const FirstOrderSystem& sys, const SmallMat& sigma_inv,
                                      double s, int nsteps, const Tolerances& tol) {
    std::vector<SmallMat> grid(2 * nsteps + 1);
    double h2 = 0.5 / nsteps;
    for (int j = 0; j <= 2 * nsteps; ++j) {
        Mat b = sys.B(s, j * h2);
        double bscale = std::max(1.0, b.cwiseAbs().maxCoeff());
        if ((b - b.adjoint()).cwiseAbs().maxCoeff() > 100 * tol.num * bscale)
            throw std::invalid_argument("FirstOrderSystem: B(s,t) is not Hermitian");
        grid[j] = sigma_inv * SmallMat(b);
    }
    return grid;
}

SmallMat rk4_transfer_grid(const std::vector<SmallMat>& sinvb, const SmallMat& sigma_inv,
                           double mu, int nsteps) {
    const int m = static_cast<int>(sigma_inv.rows());
    const double h = 1.0 / nsteps;
    SmallMat x = SmallMat::Identity(m, m);
    SmallMat k1(m, m), k2(m, m), k3(m, m), k4(m, m), tmp(m, m), km(m, m);
    for (int j = 0; j < nsteps; ++j) {
        km = mu * sigma_inv - sinvb[2 * j];
        k1.noalias() = km * x;
        km = mu * sigma_inv - sinvb[2 * j + 1];
        tmp = x + (0.5 * h) * k1;
        k2.noalias() = km * tmp;
        tmp = x + (0.5 * h) * k2;
        k3.noalias() = km * tmp;
        km = mu * sigma_inv - sinvb[2 * j + 2];
        tmp = x + h * k3;
        k4.noalias() = km * tmp;
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

// step-halving driver; target is the convergence threshold on ||T_h - T_{h/2}||
Mat transfer_with_target(const FirstOrderSystem& sys, const SmallMat& sigma_inv,
                         double s, double mu, double target, const Tolerances& tol,
                         int* steps_used = nullptr) {
    int nsteps = std::max(2, static_cast<int>(std::lround(1.0 / sys.step_hint)));
    std::vector<SmallMat> grid = build_half_grid(sys, sigma_inv, s, nsteps, tol);
    SmallMat prev = rk4_transfer_grid(grid, sigma_inv, mu, nsteps);
    for (int iter = 0; iter < 14; ++iter) {
        nsteps *= 2;
        grid = build_half_grid(sys, sigma_inv, s, nsteps, tol);
        SmallMat cur = rk4_transfer_grid(grid, sigma_inv, mu, nsteps);
        if ((cur - prev).cwiseAbs().maxCoeff() < target) {
            if (steps_used) *steps_used = nsteps;
            return Mat(cur);
        }
        prev = cur;
    }
    throw ConvergenceError("transfer_matrix: step halving did not converge");
}

SmallMat small_inverse(const Mat& m) {
    return SmallMat(m.partialPivLu().solve(Mat::Identity(m.rows(), m.cols())));
}

} // namespace

SymplecticSpace boundary_space(const Mat& sigma, const Tolerances& tol) {
    const int m = static_cast<int>(sigma.rows());
    Mat j = Mat::Zero(2 * m, 2 * m);
    j.topLeftCorner(m, m) = -sigma;
    j.bottomRightCorner(m, m) = sigma;
    return SymplecticSpace::create(Mat::Identity(2 * m, 2 * m), j, tol);
}

Mat transfer_matrix(const FirstOrderSystem& sys, double s, double mu,
                    const Tolerances& tol) {
    validate_system(sys, tol);
    SmallMat sigma_inv = small_inverse(sys.sigma);
    return transfer_with_target(sys, sigma_inv, s, mu, tol.transfer_tol, tol);
}

SubspaceFrame cauchy_data(const FirstOrderSystem& sys, double s, double mu,
                          const Tolerances& tol) {
    Mat t = transfer_matrix(sys, s, mu, tol);
    Mat f(2 * sys.m, sys.m);
    f.topRows(sys.m) = Mat::Identity(sys.m, sys.m);
    f.bottomRows(sys.m) = t;
    return {2 * sys.m, f};
}

double eigenvalue_condition(const FirstOrderSystem& sys, double s,
                            const SubspaceFrame& boundary_frame, double lambda,
                            const Tolerances& tol) {
    SubspaceFrame cd = cauchy_data(sys, s, lambda, tol);
    Mat eye = Mat::Identity(2 * sys.m, 2 * sys.m);
    Mat qb = orthonormalize(boundary_frame.frame, eye, tol);
    Mat qc = orthonormalize(cd.frame, eye, tol);
    Mat joint(2 * sys.m, qb.cols() + qc.cols());
    joint << qb, qc;
    Eigen::JacobiSVD<Mat> svd(joint);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

std::vector<double> expand_multiplicities(const std::vector<WindowRoot>& roots) {
    std::vector<double> out;
    for (const auto& r : roots)
        for (int k = 0; k < r.multiplicity; ++k) out.push_back(r.lambda);
    return out;
}

// ---------------------------------------------------------------------------
// Shooting scan: roots of the boundary/Cauchy intersection over a lambda
// interval, located through the eigenvalue arguments of the generator ratio
// W(lambda) = U_cauchy(lambda) V_boundary^{-1}.
// ---------------------------------------------------------------------------

namespace {

struct ScanFrame {
    const SymplecticSpace* space;
    Mat v_inv;       // inverse boundary generator
    Mat theta_gram;  // metric making W unitary
};

Mat cauchy_generator(const SymplecticSpace& space, const Mat& transfer,
                     const Tolerances& tol) {
    const int m = static_cast<int>(transfer.rows());
    Mat f(2 * m, m);
    f.topRows(m) = Mat::Identity(m, m);
    f.bottomRows(m) = transfer;
    return generator_matrix(space, SubspaceFrame{2 * m, f}, tol);
}

std::vector<double> args_of(const ScanFrame& sf, const Mat& transfer,
                            const Tolerances& tol) {
    Mat u = cauchy_generator(*sf.space, transfer, tol);
    Mat w = u * sf.v_inv;
    return unitary_args(w, sf.theta_gram);
}

struct RootScanResult {
    std::vector<WindowRoot> roots;
};

// Generic scan over [lo, hi] given a transfer provider.  grid_step controls
// the coarse scan; bisection refines each bracketed argument curve to 1e-10.
std::vector<double> scan_root_values(const std::function<Mat(double)>& transfer_at,
                                     const ScanFrame& sf, double lo, double hi,
                                     double grid_step, const Tolerances& tol) {
    double band = tol.zero_band(1.0);
    int npts = std::max(3, static_cast<int>(std::ceil((hi - lo) / grid_step)) + 1);

    for (int round = 0;; ++round) {
        std::vector<double> xs(npts);
        std::vector<std::vector<double>> args(npts);
        for (int i = 0; i < npts; ++i) {
            xs[i] = lo + (hi - lo) * i / (npts - 1);
            args[i] = args_of(sf, transfer_at(xs[i]), tol);
        }
        // verify the grid resolves the phase motion
        double max_move = 0.0;
        for (int i = 0; i + 1 < npts; ++i) {
            for (double x : args[i]) {
                double best = 1e300;
                for (double y : args[i + 1]) best = std::min(best, std::abs(wrap_angle(y - x)));
                max_move = std::max(max_move, best);
            }
        }
        if (max_move >= kPi / 2 && round < 3) {
            npts = 2 * npts - 1;
            continue;
        }
        if (max_move >= kPi / 2)
            throw ConvergenceError("eigenvalue scan: phase motion not resolved by the grid");

        std::vector<double> roots;
        auto track_bisect = [&](double a, double b, double xa, double xb) {
            int guard = 0;
            while (b - a > 1e-10 && guard++ < 80) {
                double mid = 0.5 * (a + b);
                auto am = args_of(sf, transfer_at(mid), tol);
                double pred = 0.5 * (xa + xb), best = 1e300, xm = 0.0;
                for (double v : am) {
                    double d = std::abs(wrap_angle(v - pred));
                    if (d < best) {
                        best = d;
                        xm = v;
                    }
                }
                if ((xa < 0) == (xm < 0)) {
                    a = mid;
                    xa = xm;
                } else {
                    b = mid;
                    xb = xm;
                }
            }
            return 0.5 * (a + b);
        };

        for (int i = 0; i + 1 < npts; ++i) {
            std::vector<bool> used(args[i + 1].size(), false);
            for (double x : args[i]) {
                double best = 1e300;
                int pick = -1;
                for (size_t j = 0; j < args[i + 1].size(); ++j) {
                    if (used[j]) continue;
                    double d = std::abs(wrap_angle(args[i + 1][j] - x));
                    if (d < best) {
                        best = d;
                        pick = static_cast<int>(j);
                    }
                }
                if (pick < 0) continue;
                used[pick] = true;
                double y = args[i + 1][pick];
                if (std::abs(x) <= band) {
                    roots.push_back(xs[i]);
                } else if (std::abs(x) < kPi / 2 && std::abs(y) < kPi / 2 &&
                           ((x < -band && y > band) || (x > band && y < -band))) {
                    roots.push_back(track_bisect(xs[i], xs[i + 1], x, y));
                }
            }
        }
        for (double v : args[npts - 1])
            if (std::abs(v) <= band) roots.push_back(hi);

        std::sort(roots.begin(), roots.end());
        std::vector<double> merged;
        for (double r : roots)
            if (merged.empty() || r - merged.back() > 1e-9) merged.push_back(r);
        return merged;
    }
}

int root_arg_multiplicity(const ScanFrame& sf, const Mat& transfer, const Tolerances& tol) {
    auto args = args_of(sf, transfer, tol);
    int c = 0;
    for (double a : args)
        if (std::abs(a) < 1e-5) ++c;
    return std::max(1, c);
}

} // namespace

std::vector<WindowRoot> eigenvalues_in_window(const FirstOrderSystem& sys, double s,
                                              const SubspaceFrame& boundary_frame,
                                              double window, const Tolerances& tol) {
    if (!(window > 0)) throw std::invalid_argument("eigenvalues_in_window: window must be > 0");
    validate_system(sys, tol);
    SmallMat sigma_inv = small_inverse(sys.sigma);
    SymplecticSpace space = boundary_space(sys.sigma, tol);

    ScanFrame sf;
    sf.space = &space;
    sf.v_inv = generator_matrix(space, boundary_frame, tol).inverse();
    sf.theta_gram = space.theta_minus().cast<cplx>().asDiagonal();

    auto transfer_at = [&](double lam) {
        return transfer_with_target(sys, sigma_inv, s, lam, tol.transfer_tol, tol);
    };
    double grid_step = 1e-2 * window;
    std::vector<double> values =
        scan_root_values(transfer_at, sf, -window, window, grid_step, tol);

    Tolerances tol_frames = tol;
    tol_frames.num = std::max(tol.num, 1e-6);
    std::vector<WindowRoot> out;
    for (double v : values) {
        if (std::abs(v) > window - 0.5 * grid_step) throw WindowEdgeError(v);
        Mat t = transfer_at(v);
        Mat f(2 * sys.m, sys.m);
        f.topRows(sys.m) = Mat::Identity(sys.m, sys.m);
        f.bottomRows(sys.m) = t;
        int mult;
        try {
            mult = intersection_dim(space, boundary_frame, SubspaceFrame{2 * sys.m, f},
                                    tol_frames);
        } catch (const std::exception&) {
            mult = root_arg_multiplicity(sf, t, tol);
        }
        out.push_back({v, std::max(1, mult)});
    }
    return out;
}

UcpCertificate ucp_check(const FirstOrderSystem& sys, double s, const Tolerances& tol) {
    validate_system(sys, tol);
    Mat t = transfer_matrix(sys, s, 0.0, tol);
    Eigen::JacobiSVD<Mat> svd(t);
    UcpCertificate cert;
    cert.min_singular_value = svd.singularValues()(svd.singularValues().size() - 1);
    cert.samples = 1;
    // a solution vanishing at t=0 is identically zero; the certificate
    // quantifies invertibility of the endpoint map
    cert.ok = cert.min_singular_value > tol.rank_floor;
    return cert;
}

UcpCertificate ucp_sweep(const FirstOrderSystem& sys, int samples, const Tolerances& tol) {
    UcpCertificate cert;
    cert.ok = true;
    cert.min_singular_value = 1e300;
    for (int i = 0; i <= samples; ++i) {
        UcpCertificate c = ucp_check(sys, static_cast<double>(i) / samples, tol);
        cert.ok = cert.ok && c.ok;
        cert.min_singular_value = std::min(cert.min_singular_value, c.min_singular_value);
    }
    cert.samples = samples + 1;
    return cert;
}

// ---------------------------------------------------------------------------
// Chebyshev-accelerated transfer evaluation for the scenario engine: T(s, .)
// is entire in the spectral parameter, so a certified barycentric interpolant
// over the padded window replaces per-lambda integrations in the scan.
// ---------------------------------------------------------------------------

namespace {

struct ChebTransfer {
    double half_width = 0.0;
    std::vector<double> xs;  // Chebyshev-Lobatto nodes in [-1, 1]
    std::vector<double> ws;  // barycentric weights
    std::vector<Mat> values; // T at half_width * xs[j]

    Mat eval(double lambda) const {
        double x = lambda / half_width;
        const int n = static_cast<int>(xs.size());
        for (int j = 0; j < n; ++j)
            if (x == xs[j]) return values[j];
        Mat num = Mat::Zero(values[0].rows(), values[0].cols());
        double den = 0.0;
        for (int j = 0; j < n; ++j) {
            double c = ws[j] / (x - xs[j]);
            num += c * values[j];
            den += c;
        }
        return num / den;
    }
};

ChebTransfer build_cheb(const std::function<Mat(double)>& transfer_at, double half_width,
                        double target, double seed01) {
    for (int n = 32; n <= 256; n *= 2) {
        ChebTransfer ct;
        ct.half_width = half_width;
        ct.xs.resize(n + 1);
        ct.ws.resize(n + 1);
        ct.values.resize(n + 1);
        for (int j = 0; j <= n; ++j) {
            ct.xs[j] = std::cos(kPi * j / n);
            ct.ws[j] = (j % 2 == 0 ? 1.0 : -1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
            ct.values[j] = transfer_at(half_width * ct.xs[j]);
        }
        bool ok = true;
        for (int k = 0; k < 3 && ok; ++k) {
            double u = std::fmod(seed01 * 127.331 + 0.217 + 0.383 * k, 1.0);
            double lam = half_width * (2.0 * u - 1.0);
            Mat direct = transfer_at(lam);
            if ((ct.eval(lam) - direct).cwiseAbs().maxCoeff() > target) ok = false;
        }
        if (ok) return ct;
    }
    throw ConvergenceError("transfer interpolation did not certify");
}

} // namespace

// ---------------------------------------------------------------------------
// Curve tracker
// ---------------------------------------------------------------------------

namespace {

struct Chain {
    double value = 0.0;
    int last_sign = 0; // 0 = started on the band (only legal at s=0)
    bool in_zero = false;
    bool alive = true;
};

int sign_of(double v, double band) { return v < -band ? -1 : (v > band ? 1 : 0); }

int sign_transition(int last, int now) {
    if (now == 0 || last == now) return 0;
    if (last == -1 && now == 1) return 1;
    if (last == 1 && now == -1) return -1;
    if (last == 0) return now == -1 ? -1 : 0; // departure from an endpoint kernel
    return 0;
}

struct TrackOutcome {
    bool ok = false;
    int total = 0;
    std::string why;
};

TrackOutcome track_once(const std::vector<std::vector<double>>& lists, double band,
                        double edge) {
    TrackOutcome out;
    const int n = static_cast<int>(lists.size());

    // pass 1: step and separation statistics via nearest matching
    double max_step = 0.0, min_sep = 1e300;
    for (int i = 0; i < n; ++i) {
        const auto& cur = lists[i];
        for (size_t a = 0; a + 1 < cur.size(); ++a) {
            double d = cur[a + 1] - cur[a];
            if (d > 10 * band) min_sep = std::min(min_sep, d); // coincident values are one cluster
        }
        if (i + 1 < n) {
            std::vector<bool> used(lists[i + 1].size(), false);
            for (double x : cur) {
                double best = 1e300;
                int pick = -1;
                for (size_t j = 0; j < lists[i + 1].size(); ++j) {
                    if (used[j]) continue;
                    double d = std::abs(lists[i + 1][j] - x);
                    if (d < best) {
                        best = d;
                        pick = static_cast<int>(j);
                    }
                }
                if (pick >= 0) {
                    used[pick] = true;
                    max_step = std::max(max_step, best);
                }
            }
        }
    }
    if (min_sep < 1e300 && !(min_sep > 3.0 * max_step)) {
        out.why = "curve separation below 3x step change";
        return out;
    }
    double cutoff = std::max({3.0 * max_step, 20 * band, 1e-9});
    double edge_slack = edge - 2.0 * max_step - cutoff;

    // pass 2: chain tracking with the run rule
    std::vector<Chain> chains;
    int total = 0;
    for (double v : lists[0]) {
        Chain c;
        c.value = v;
        int s = sign_of(v, band);
        c.last_sign = s;
        c.in_zero = (s == 0);
        chains.push_back(c);
    }
    for (int i = 1; i < n; ++i) {
        const auto& cur = lists[i];
        std::vector<bool> used(cur.size(), false);
        for (auto& c : chains) {
            if (!c.alive) continue;
            double best = 1e300;
            int pick = -1;
            for (size_t j = 0; j < cur.size(); ++j) {
                if (used[j]) continue;
                double d = std::abs(cur[j] - c.value);
                if (d < best) {
                    best = d;
                    pick = static_cast<int>(j);
                }
            }
            if (pick < 0 || best > cutoff) {
                // curve must have left through the window edge
                if (std::abs(c.value) < edge_slack) {
                    out.why = "lost a curve away from the window edge";
                    return out;
                }
                c.alive = false;
                continue;
            }
            used[pick] = true;
            c.value = cur[pick];
            int s = sign_of(c.value, band);
            if (s == 0) {
                c.in_zero = true;
            } else {
                if (c.in_zero || c.last_sign != s) total += sign_transition(c.last_sign, s);
                c.in_zero = false;
                c.last_sign = s;
            }
        }
        for (size_t j = 0; j < cur.size(); ++j) {
            if (used[j]) continue;
            if (std::abs(cur[j]) < edge_slack) {
                out.why = "curve appeared away from the window edge";
                return out;
            }
            Chain c;
            c.value = cur[j];
            c.last_sign = sign_of(cur[j], band);
            c.in_zero = false; // entries at the edge are far from the band
            chains.push_back(c);
        }
    }
    for (const auto& c : chains)
        if (c.alive && c.in_zero && c.last_sign == -1) total += 1; // arrival at the kernel

    out.ok = true;
    out.total = total;
    return out;
}

} // namespace

int tracked_flow(const std::function<std::vector<double>(double)>& positions,
                 int initial_grid, double zero_band, double edge, const Tolerances& tol,
                 const std::function<void(const std::vector<double>&)>& prefetch) {
    (void)tol;
    int grid = std::max(16, initial_grid);
    std::string last_why;
    for (int round = 0; round < 6; ++round) {
        std::vector<double> svals(grid + 1);
        for (int i = 0; i <= grid; ++i) svals[i] = static_cast<double>(i) / grid;
        if (prefetch) prefetch(svals);
        std::vector<std::vector<double>> lists(grid + 1);
        for (int i = 0; i <= grid; ++i) lists[i] = positions(svals[i]);
        TrackOutcome out = track_once(lists, zero_band, edge);
        if (out.ok) return out.total;
        last_why = out.why;
        grid *= 2;
    }
    throw ConvergenceError("eigenvalue tracking did not stabilize: " + last_why);
}

int matrix_tracking_oracle(const OperatorPath& path, const Tolerances& tol) {
    if (path.kind != PathKind::hermitian)
        throw std::invalid_argument("matrix_tracking_oracle: hermitian paths only");
    double band = path_zero_band(path, tol);
    auto fn = [&](double s) { return path_positions(path, s); };
    return tracked_flow(fn, std::max(64, 2 * path.sample_hint), band, 1e300, tol);
}

// ---------------------------------------------------------------------------
// ScenarioEngine
// ---------------------------------------------------------------------------

struct ScenarioEngine::Impl {
    Scenario sc;
    Tolerances tol;
    Tolerances tol_frames;
    ExecPolicy policy;
    SymplecticSpace bspace;
    SmallMat sigma_inv;
    double pad = 0.0;
    double scan_target = 1e-8; // step-halving threshold for scan-tier transfers

    std::mutex lock;
    std::map<double, std::vector<double>> roots;
    std::map<double, Mat> t_at_zero; // full-accuracy T(s, 0)

    Impl(const Scenario& s0, const Tolerances& t0, ExecPolicy p0)
        : sc(s0), tol(t0), tol_frames(t0), policy(p0),
          bspace(boundary_space(s0.system.sigma, t0)) {
        validate_system(sc.system, tol);
        if (!(sc.window > 0)) throw std::invalid_argument("Scenario: window must be > 0");
        tol_frames.num = std::max(tol.num, 1e-6);
        sigma_inv = small_inverse(sc.system.sigma);
        pad = sc.window + std::max(0.5, 0.05 * sc.window);
    }

    std::vector<double> compute_positions(double s) {
        // per-s validated step at the stiffest spectral shift, reused for the
        // whole node set
        int nsteps = 0;
        transfer_with_target(sc.system, sigma_inv, s, pad, scan_target, tol, &nsteps);
        std::vector<SmallMat> grid = build_half_grid(sc.system, sigma_inv, s, nsteps, tol);
        auto cheap_transfer = [&](double lam) {
            return Mat(rk4_transfer_grid(grid, sigma_inv, lam, nsteps));
        };
        ChebTransfer ct = build_cheb(cheap_transfer, pad, 30 * scan_target, s);

        ScanFrame sf;
        sf.space = &bspace;
        sf.v_inv = generator_matrix(bspace, sc.boundary.eval(s), tol).inverse();
        sf.theta_gram = bspace.theta_minus().cast<cplx>().asDiagonal();
        auto transfer_at = [&](double lam) { return ct.eval(lam); };
        std::vector<double> values =
            scan_root_values(transfer_at, sf, -pad, pad, 1e-2 * sc.window, tol);

        std::vector<double> out;
        for (double v : values) {
            int mult = root_arg_multiplicity(sf, ct.eval(v), tol);
            for (int k = 0; k < mult; ++k) out.push_back(v);
        }
        return out;
    }

    std::vector<double> positions(double s) {
        {
            std::lock_guard<std::mutex> g(lock);
            auto it = roots.find(s);
            if (it != roots.end()) return it->second;
        }
        std::vector<double> v = compute_positions(s);
        std::lock_guard<std::mutex> g(lock);
        return roots.emplace(s, std::move(v)).first->second;
    }

    Mat transfer_zero(double s) {
        {
            std::lock_guard<std::mutex> g(lock);
            auto it = t_at_zero.find(s);
            if (it != t_at_zero.end()) return it->second;
        }
        Mat t = transfer_with_target(sc.system, sigma_inv, s, 0.0, tol.transfer_tol, tol);
        std::lock_guard<std::mutex> g(lock);
        return t_at_zero.emplace(s, std::move(t)).first->second;
    }

    SubspaceFrame cauchy_frame(double s) {
        Mat t = transfer_zero(s);
        Mat f(2 * sc.system.m, sc.system.m);
        f.topRows(sc.system.m) = Mat::Identity(sc.system.m, sc.system.m);
        f.bottomRows(sc.system.m) = t;
        return {2 * sc.system.m, f};
    }
};

ScenarioEngine::ScenarioEngine(const Scenario& sc, const Tolerances& tol, ExecPolicy policy)
    : impl_(std::make_unique<Impl>(sc, tol, policy)) {}

ScenarioEngine::~ScenarioEngine() = default;

const Scenario& ScenarioEngine::scenario() const { return impl_->sc; }

std::vector<double> ScenarioEngine::window_positions(double s) { return impl_->positions(s); }

void ScenarioEngine::prefetch(const std::vector<double>& svals) {
    std::vector<double> missing;
    {
        std::lock_guard<std::mutex> g(impl_->lock);
        for (double s : svals)
            if (!impl_->roots.count(s)) missing.push_back(s);
    }
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::vector<std::vector<double>> results(missing.size());
    for_each_index(static_cast<int>(missing.size()), impl_->policy,
                   [&](int i) { results[i] = impl_->compute_positions(missing[i]); });
    std::lock_guard<std::mutex> g(impl_->lock);
    for (size_t i = 0; i < missing.size(); ++i)
        impl_->roots.emplace(missing[i], std::move(results[i]));
}

int ScenarioEngine::spectral_flow(FlowComputation* fc) {
    SpectrumSampler sampler;
    sampler.circular = false;
    sampler.zero_band = kBvpZeroBand;
    sampler.positions = [this](double s) { return impl_->positions(s); };
    int hint = std::max(8, impl_->sc.s_samples / 8);
    FlowComputation comp =
        sf_partition_core(sampler, hint, impl_->tol, FlowOrientation::standard, impl_->policy);
    if (fc) *fc = comp;
    return comp.total;
}

int ScenarioEngine::sf_oracle() {
    auto fn = [this](double s) { return impl_->positions(s); };
    // refinement grids are dyadic; prefetch the first two rounds in parallel
    std::vector<double> warm;
    int g0 = std::max(16, impl_->sc.s_samples);
    for (int i = 0; i <= 2 * g0; ++i) warm.push_back(static_cast<double>(i) / (2 * g0));
    prefetch(warm);
    return tracked_flow(fn, g0, kBvpZeroBand, impl_->pad - 0.1, impl_->tol);
}

LagrangianPath ScenarioEngine::boundary_path() const {
    auto b = impl_->sc.boundary;
    return LagrangianPath{[b](double s) { return b.eval(s); }};
}

LagrangianPath ScenarioEngine::cauchy_path() const {
    Impl* im = impl_.get();
    return LagrangianPath{[im](double s) { return im->cauchy_frame(s); }};
}

const SymplecticSpace& ScenarioEngine::trace_space() const { return impl_->bspace; }

std::pair<int, FlowComputation> ScenarioEngine::maslov() {
    SymplecticFamily fam = constant_family(impl_->bspace);
    int hint = std::max(16, impl_->sc.s_samples / 8);
    std::vector<double> warm;
    for (int i = 0; i <= 2 * hint; ++i) warm.push_back(static_cast<double>(i) / (2 * hint));
    for_each_index(static_cast<int>(warm.size()), impl_->policy,
                   [&](int i) { impl_->transfer_zero(warm[i]); });
    return maslov_index(boundary_path(), cauchy_path(), fam, impl_->tol, hint,
                        ExecPolicy::serial);
}

double ScenarioEngine::cauchy_gap_max_increment(int n) {
    std::vector<double> svals(n + 1);
    for (int i = 0; i <= n; ++i) svals[i] = static_cast<double>(i) / n;
    for_each_index(n + 1, impl_->policy, [&](int i) { impl_->transfer_zero(svals[i]); });
    double worst = 0.0;
    Mat eye = Mat::Identity(2 * impl_->sc.system.m, 2 * impl_->sc.system.m);
    SubspaceFrame prev = impl_->cauchy_frame(svals[0]);
    for (int i = 1; i <= n; ++i) {
        SubspaceFrame cur = impl_->cauchy_frame(svals[i]);
        worst = std::max(worst, gap_distance(prev.frame, cur.frame, eye, impl_->tol));
        prev = cur;
    }
    return worst;
}

std::vector<std::pair<double, double>> ScenarioEngine::cauchy_gap_profile(int n) {
    std::vector<std::pair<double, double>> out;
    Mat eye = Mat::Identity(2 * impl_->sc.system.m, 2 * impl_->sc.system.m);
    SubspaceFrame prev = impl_->cauchy_frame(0.0);
    for (int i = 1; i <= n; ++i) {
        double s = static_cast<double>(i) / n;
        SubspaceFrame cur = impl_->cauchy_frame(s);
        out.emplace_back(s, gap_distance(prev.frame, cur.frame, eye, impl_->tol));
        prev = cur;
    }
    return out;
}

std::vector<std::vector<double>> window_roots_grid(ScenarioEngine& eng,
                                                   const std::vector<double>& svals) {
    eng.prefetch(svals); // data-parallel fill
    std::vector<std::vector<double>> out(svals.size());
    for (size_t i = 0; i < svals.size(); ++i) out[i] = eng.window_positions(svals[i]);
    return out;
}

std::vector<std::vector<double>> window_roots_grid_serial(ScenarioEngine& eng,
                                                          const std::vector<double>& svals) {
    std::vector<std::vector<double>> out(svals.size());
    for (size_t i = 0; i < svals.size(); ++i) out[i] = eng.window_positions(svals[i]);
    return out;
}

std::pair<int, int> perturbation_flow(const FirstOrderSystem& sys, double s0,
                                      const SubspaceFrame& boundary_frame, double eps,
                                      const Tolerances& tol) {
    if (!(eps > 0)) throw std::invalid_argument("perturbation_flow: eps must be > 0");
    double window = std::max(2.5 * eps, 0.5);
    std::vector<WindowRoot> roots = eigenvalues_in_window(sys, s0, boundary_frame, window, tol);
    double band = kBvpZeroBand;
    int kernel_sum = 0;
    for (const auto& r : roots) {
        if (std::abs(r.lambda + eps) <= band)
            throw std::invalid_argument("perturbation_flow: eps hits an eigenvalue");
        if (r.lambda >= -eps && r.lambda < -band) kernel_sum += r.multiplicity;
    }
    // SF of the shifted family A + a I, a = eps * s
    std::vector<double> base = expand_multiplicities(roots);
    SpectrumSampler sampler;
    sampler.circular = false;
    sampler.zero_band = band;
    sampler.positions = [base, eps](double s) {
        std::vector<double> out = base;
        for (double& v : out) v += eps * s;
        std::sort(out.begin(), out.end());
        return out;
    };
    FlowComputation fc = sf_partition_core(sampler, 16, tol);
    return {fc.total, kernel_sum};
}

FlowReport verify_gsff(const Scenario& sc, const Tolerances& tol, ExecPolicy policy) {
    FlowReport rep;
    rep.label = sc.label;
    rep.seed = sc.seed;
    rep.tolerances = tolerances_to_json(tol);

    UcpCertificate ucp = ucp_sweep(sc.system, 16, tol);
    rep.ucp_ok = ucp.ok;
    rep.ucp_min_singular_value = ucp.min_singular_value;
    if (!ucp.ok)
        throw ConvergenceError("verify_gsff: UCP certificate failed for " + sc.label);

    ScenarioEngine eng(sc, tol, policy);
    FlowComputation fc;
    rep.sf_partition = eng.spectral_flow(&fc);
    rep.sf_oracle = eng.sf_oracle();
    auto [mas, mfc] = eng.maslov();
    rep.maslov_partition = mas;
    rep.gsff_lhs = rep.sf_partition;
    rep.gsff_rhs = -mas;
    rep.equal = (rep.sf_partition == -mas);
    rep.oracle_agrees = (rep.sf_oracle == rep.sf_partition);
    rep.cauchy_gap_max = eng.cauchy_gap_max_increment(sc.s_samples);
    rep.cauchy_gap_max_double = eng.cauchy_gap_max_increment(2 * sc.s_samples);
    return rep;
}

} // namespace specmas
