#include "specmas/spectral_flow.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace specmas {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

Mat gram_or_identity(const std::function<Mat(double)>& gram, double s, int dim) {
    return gram ? gram(s) : identity_like(dim);
}

} // namespace

SpectralDecomposition spectral_decomposition(const Mat& a, const Mat& gram,
                                             const Tolerances& tol) {
    double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    Mat ga = gram * a;
    if ((ga - ga.adjoint()).cwiseAbs().maxCoeff() > tol.num * scale * gram.cwiseAbs().maxCoeff() * 10)
        throw std::invalid_argument("spectral_decomposition: operator is not self-adjoint w.r.t. gram");
    WeightedEig eig = weighted_eigh(a, gram);
    SpectralDecomposition out;
    out.values = eig.values;
    out.vectors = eig.vectors;
    double vmax = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
    out.zero_band = tol.zero_band(vmax);
    for (int i = 0; i < eig.values.size(); ++i) {
        double v = eig.values(i);
        if (v > out.zero_band)
            ++out.m_plus;
        else if (v < -out.zero_band)
            ++out.m_minus;
        else
            ++out.m_zero;
    }
    return out;
}

SpectralDecomposition spectral_decomposition(const Mat& a, const Tolerances& tol) {
    return spectral_decomposition(a, identity_like(static_cast<int>(a.rows())), tol);
}

Mat spectral_projection(const Mat& a, const Mat& gram, double lo, double hi,
                        const Tolerances& tol) {
    if (!(hi > lo)) throw std::invalid_argument("spectral_projection: empty window");
    SpectralDecomposition dec = spectral_decomposition(a, gram, tol);
    double margin = std::max(tol.gap_frac * (hi - lo), 1e-13);
    std::vector<int> inside;
    for (int i = 0; i < dec.values.size(); ++i) {
        double v = dec.values(i);
        if (std::abs(v - lo) < margin || std::abs(v - hi) < margin) {
            std::ostringstream os;
            os << "spectral_projection: eigenvalue " << v
               << " collides with window boundary (" << lo << ", " << hi << ")";
            throw ConvergenceError(os.str());
        }
        if (v > lo && v < hi) inside.push_back(i);
    }
    const int n = static_cast<int>(a.rows());
    Mat v(n, static_cast<int>(inside.size()));
    for (size_t k = 0; k < inside.size(); ++k) v.col(static_cast<int>(k)) = dec.vectors.col(inside[k]);
    if (v.cols() == 0) return Mat::Zero(n, n);
    return v * v.adjoint() * gram;
}

Mat contour_projection(const Mat& a, const Mat& gram, double radius, int nodes) {
    const int n = static_cast<int>(a.rows());
    Mat acc = Mat::Zero(n, n);
    for (int k = 0; k < nodes; ++k) {
        double phi = 2.0 * kPi * (k + 0.5) / nodes;
        cplx z = radius * std::exp(cplx(0, phi));
        Mat res = (a - z * Mat::Identity(n, n)).partialPivLu().solve(Mat::Identity(n, n));
        acc += z * res;
    }
    (void)gram; // the resolvent formula is metric-free
    return -acc / static_cast<double>(nodes);
}

Mat aps_projection(const Mat& a, const Mat& gram, const Tolerances& tol) {
    SpectralDecomposition dec = spectral_decomposition(a, gram, tol);
    const int n = static_cast<int>(a.rows());
    std::vector<int> keep;
    for (int i = 0; i < dec.values.size(); ++i)
        if (dec.values(i) >= -dec.zero_band) keep.push_back(i);
    Mat v(n, static_cast<int>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) v.col(static_cast<int>(k)) = dec.vectors.col(keep[k]);
    if (v.cols() == 0) return Mat::Zero(n, n);
    return v * v.adjoint() * gram;
}

int hyperbolic_nullity(const Mat& a, PathKind kind, const Mat& gram,
                       const Tolerances& tol) {
    if (kind == PathKind::hermitian) {
        SpectralDecomposition dec = spectral_decomposition(a, gram, tol);
        return dec.m_zero;
    }
    Vec ev = weighted_unitary_eigenvalues(a, gram);
    double band = tol.zero_band(1.0);
    int count = 0;
    for (int i = 0; i < ev.size(); ++i)
        if (std::abs(ev(i) - cplx(1, 0)) <= band) ++count;
    return count;
}

Mat riesz_transform(const Mat& a, const Mat& gram, const Tolerances& tol) {
    (void)tol;
    WeightedEig eig = weighted_eigh(a, gram);
    const int n = static_cast<int>(a.rows());
    Mat out = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double lam = eig.values(i);
        double f = lam / std::sqrt(1.0 + lam * lam);
        out += f * eig.vectors.col(i) * eig.vectors.col(i).adjoint();
    }
    return out * gram;
}

// ---------------------------------------------------------------------------
// Partition engine
// ---------------------------------------------------------------------------

namespace {

struct SampleCache {
    const SpectrumSampler* sampler;
    ExecPolicy policy;
    std::map<double, std::vector<double>> data;

    const std::vector<double>& get(double s) {
        auto it = data.find(s);
        if (it == data.end()) it = data.emplace(s, sampler->positions(s)).first;
        return it->second;
    }

    // Batch-fill missing keys, data-parallel over the new points.
    void prefetch(const std::vector<double>& svals) {
        std::vector<double> missing;
        for (double s : svals)
            if (!data.count(s)) missing.push_back(s);
        if (missing.empty()) return;
        std::vector<std::vector<double>> results(missing.size());
        for_each_index(static_cast<int>(missing.size()), policy,
                       [&](int i) { results[i] = sampler->positions(missing[i]); });
        for (size_t i = 0; i < missing.size(); ++i)
            data.emplace(missing[i], std::move(results[i]));
    }
};

// Midpoint of the widest gap of {0} ∪ {|p|}; for unitary spectra the gap
// list is capped at pi, for hermitian ones a sentinel gap above the largest
// position allows an all-containing window.
double window_radius(const std::vector<double>& positions, bool circular,
                     double zero_band) {
    std::vector<double> marks;
    marks.reserve(positions.size() + 2);
    marks.push_back(0.0);
    for (double p : positions) marks.push_back(std::abs(p));
    std::sort(marks.begin(), marks.end());
    if (circular)
        marks.push_back(kPi);
    else
        marks.push_back(2.0 * marks.back() + 2.0);
    double best_gap = -1.0, best_mid = 0.0;
    for (size_t i = 0; i + 1 < marks.size(); ++i) {
        double g = marks[i + 1] - marks[i];
        if (g > best_gap) {
            best_gap = g;
            best_mid = 0.5 * (marks[i] + marks[i + 1]);
        }
    }
    if (best_gap < 8.0 * zero_band)
        return circular ? kPi / 2.0 : std::max(1.0, marks.back() + 1.0);
    return best_mid;
}

int window_count(const std::vector<double>& pos, double r) {
    int c = 0;
    for (double p : pos)
        if (std::abs(p) < r) ++c;
    return c;
}

bool boundary_violation(const std::vector<double>& pos, double r, double margin) {
    for (double p : pos)
        if (std::abs(std::abs(p) - r) < margin) return true;
    return false;
}

int side_count(const std::vector<double>& pos, double r, double band, bool negative) {
    int c = 0;
    for (double p : pos) {
        if (negative) {
            if (p < -band && p > -r) ++c;
        } else {
            if (p > band && p < r) ++c;
        }
    }
    return c;
}

struct PartitionBuilder {
    SampleCache cache;
    const Tolerances* tol;
    bool circular;
    double zero_band;
    bool count_negative; // standard orientation counts the negative side
    FlowComputation out;

    void process(double a, double b, int depth) {
        if (depth > tol->max_depth) {
            std::ostringstream os;
            os << "sf_partition: no admissible window on segment [" << a << ", " << b
               << "] after " << tol->max_depth << " bisections";
            throw ConvergenceError(os.str());
        }
        double anchor = 0.5 * (a + b);
        double r = window_radius(cache.get(anchor), circular, zero_band);
        double margin = std::max(tol->gap_frac * r, 1e-13);

        int stable_rounds = 0;
        int last_count = -1;
        bool accepted = false;
        for (int k = 8; k <= 2048; k *= 2) {
            std::vector<double> svals(k + 1);
            for (int j = 0; j <= k; ++j) svals[j] = a + (b - a) * j / k;
            svals.front() = a;
            svals.back() = b;
            cache.prefetch(svals);
            bool ok = true;
            int count0 = window_count(cache.get(svals[0]), r);
            for (double s : svals) {
                const auto& pos = cache.get(s);
                if (boundary_violation(pos, r, margin) || window_count(pos, r) != count0) {
                    ok = false;
                    break;
                }
            }
            if (!ok) {
                double mid = anchor;
                process(a, mid, depth + 1);
                process(mid, b, depth + 1);
                return;
            }
            if (stable_rounds > 0 && count0 == last_count) {
                accepted = true;
                break;
            }
            last_count = count0;
            stable_rounds = 1;
        }
        if (!accepted) {
            double mid = anchor;
            process(a, mid, depth + 1);
            process(mid, b, depth + 1);
            return;
        }
        int term = side_count(cache.get(a), r, zero_band, count_negative) -
                   side_count(cache.get(b), r, zero_band, count_negative);
        if (out.partition.empty()) out.partition.push_back(a);
        out.partition.push_back(b);
        out.anchors.push_back(anchor);
        out.window_radii.push_back(r);
        out.segment_terms.push_back(term);
        out.total += term;
    }
};

} // namespace

FlowComputation sf_partition_core(const SpectrumSampler& sampler, int sample_hint,
                                  const Tolerances& tol, FlowOrientation orientation,
                                  ExecPolicy policy) {
    PartitionBuilder pb;
    pb.cache.sampler = &sampler;
    pb.cache.policy = policy;
    pb.tol = &tol;
    pb.circular = sampler.circular;
    pb.zero_band = sampler.zero_band;
    pb.count_negative = (orientation == FlowOrientation::standard);

    int n = std::max(1, sample_hint);
    std::vector<double> grid(n + 1);
    for (int j = 0; j <= n; ++j) grid[j] = static_cast<double>(j) / n;
    pb.cache.prefetch(grid);
    for (int j = 0; j < n; ++j) pb.process(grid[j], grid[j + 1], 0);
    return pb.out;
}

std::vector<double> path_positions(const OperatorPath& path, double s) {
    Mat a = path.eval(s);
    Mat g = gram_or_identity(path.gram, s, path.dim);
    if (path.kind == PathKind::hermitian) {
        WeightedEig eig = weighted_eigh(a, g);
        std::vector<double> pos(eig.values.data(), eig.values.data() + eig.values.size());
        return pos;
    }
    return unitary_args(a, g);
}

std::vector<std::vector<double>> spectra_grid(const OperatorPath& path,
                                              const std::vector<double>& svals) {
    std::vector<std::vector<double>> out(svals.size());
    for_each_index(static_cast<int>(svals.size()), ExecPolicy::parallel,
                   [&](int i) { out[i] = path_positions(path, svals[i]); });
    return out;
}

std::vector<std::vector<double>> spectra_grid_serial(const OperatorPath& path,
                                                     const std::vector<double>& svals) {
    std::vector<std::vector<double>> out(svals.size());
    for (size_t i = 0; i < svals.size(); ++i) out[i] = path_positions(path, svals[i]);
    return out;
}

double path_zero_band(const OperatorPath& path, const Tolerances& tol) {
    if (path.kind == PathKind::unitary) return tol.zero_band(1.0);
    double scale = 0.0;
    for (double s : {0.0, 0.26, 0.5, 0.74, 1.0}) {
        auto pos = path_positions(path, s);
        for (double p : pos) scale = std::max(scale, std::abs(p));
    }
    return tol.zero_band(scale);
}

SpectrumSampler make_sampler(const OperatorPath& path, const Tolerances& tol) {
    SpectrumSampler sampler;
    sampler.circular = (path.kind == PathKind::unitary);
    sampler.zero_band = path_zero_band(path, tol);
    sampler.positions = [&path](double s) { return path_positions(path, s); };
    return sampler;
}

std::pair<int, FlowComputation> sf_partition(const OperatorPath& path,
                                             const Tolerances& tol,
                                             FlowOrientation orientation,
                                             ExecPolicy policy) {
    SpectrumSampler sampler = make_sampler(path, tol);
    FlowComputation fc = sf_partition_core(sampler, path.sample_hint, tol, orientation, policy);
    return {fc.total, fc};
}

OperatorPath subpath(const OperatorPath& path, double a, double b) {
    OperatorPath sub = path;
    auto eval = path.eval;
    sub.eval = [eval, a, b](double s) { return eval(a + (b - a) * s); };
    if (path.gram) {
        auto gram = path.gram;
        sub.gram = [gram, a, b](double s) { return gram(a + (b - a) * s); };
    }
    sub.sample_hint = std::max(8, path.sample_hint / 4);
    return sub;
}

// ---------------------------------------------------------------------------
// Crossing-form engine
// ---------------------------------------------------------------------------

namespace {

// derivative of the path at t with one Richardson step; ok=false when the
// extrapolation disagrees with the half-step estimate
Mat path_derivative(const OperatorPath& path, double t, const Tolerances& tol, bool& ok) {
    auto diff = [&](double h) -> Mat {
        if (t - h >= 0.0 && t + h <= 1.0)
            return (path.eval(t + h) - path.eval(t - h)) / (2.0 * h);
        if (t + 2 * h <= 1.0)
            return (-3.0 * path.eval(t) + 4.0 * path.eval(t + h) - path.eval(t + 2 * h)) / (2.0 * h);
        return (3.0 * path.eval(t) - 4.0 * path.eval(t - h) + path.eval(t - 2 * h)) / (2.0 * h);
    };
    double h = tol.deriv_step;
    Mat d1 = diff(h);
    Mat d2 = diff(h / 2);
    Mat rich = (4.0 * d2 - d1) / 3.0;
    double scale = std::max(1.0, rich.cwiseAbs().maxCoeff());
    ok = (rich - d2).cwiseAbs().maxCoeff() <= tol.deriv_check * scale;
    return rich;
}

double min_abs_position(const std::vector<double>& pos) {
    double m = 1e300;
    for (double p : pos) m = std::min(m, std::abs(p));
    return m;
}

} // namespace

int sf_crossing(const OperatorPath& path, std::vector<CrossingRecordSF>& records,
                const Tolerances& tol) {
    if (path.kind != PathKind::hermitian)
        throw std::invalid_argument("sf_crossing: hermitian paths only");
    records.clear();

    std::map<double, std::vector<double>> cache;
    auto positions = [&](double s) -> const std::vector<double>& {
        auto it = cache.find(s);
        if (it == cache.end()) it = cache.emplace(s, path_positions(path, s)).first;
        return it->second;
    };

    double band = path_zero_band(path, tol);
    double scale = 1.0;
    {
        for (double s : {0.0, 0.5, 1.0})
            for (double p : positions(s)) scale = std::max(scale, std::abs(p));
    }
    double kernel_band = std::max(band, 1e-7 * scale);

    auto locate = [&](int grid) {
        std::vector<double> times;
        std::vector<double> f(grid + 1);
        std::vector<double> svals(grid + 1);
        {
            std::vector<std::vector<double>> batch(grid + 1);
            for (int i = 0; i <= grid; ++i) svals[i] = static_cast<double>(i) / grid;
            for_each_index(grid + 1, ExecPolicy::parallel, [&](int i) {
                batch[i] = path_positions(path, svals[i]);
            });
            for (int i = 0; i <= grid; ++i) {
                cache[svals[i]] = batch[i];
                f[i] = min_abs_position(batch[i]);
            }
        }
        double max_step = 0.0;
        for (int i = 0; i < grid; ++i) max_step = std::max(max_step, std::abs(f[i + 1] - f[i]));
        double thr = 2.0 * max_step + kernel_band;

        if (f[0] <= kernel_band) times.push_back(0.0);
        if (f[grid] <= kernel_band) times.push_back(1.0);
        for (int i = 1; i < grid; ++i) {
            if (f[i] > thr) continue;
            if (f[i] > f[i - 1] || f[i] > f[i + 1]) continue; // not a local minimum
            // golden-section refine the dip
            double a = svals[i - 1], b = svals[i + 1];
            const double gr = 0.6180339887498949;
            double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
            double f1 = min_abs_position(positions(x1));
            double f2 = min_abs_position(positions(x2));
            int guard = 0;
            while (b - a > 1e-10 && guard++ < 200) {
                if (f1 < f2) {
                    b = x2; x2 = x1; f2 = f1;
                    x1 = b - gr * (b - a);
                    f1 = min_abs_position(positions(x1));
                } else {
                    a = x1; x1 = x2; f1 = f2;
                    x2 = a + gr * (b - a);
                    f2 = min_abs_position(positions(x2));
                }
            }
            double tstar = 0.5 * (a + b);
            if (min_abs_position(positions(tstar)) <= kernel_band) times.push_back(tstar);
        }
        std::sort(times.begin(), times.end());
        // merge coincident crossings
        std::vector<double> merged;
        for (double t : times)
            if (merged.empty() || t - merged.back() > 1e-8) merged.push_back(t);
        return merged;
    };

    int grid = std::max(256, 4 * path.sample_hint);
    std::vector<double> crossings = locate(grid);
    for (int round = 0; round < 4; ++round) {
        std::vector<double> next = locate(grid * 2);
        bool same = next.size() == crossings.size();
        if (same)
            for (size_t i = 0; i < next.size(); ++i)
                if (std::abs(next[i] - crossings[i]) > 1e-6) same = false;
        crossings = next;
        grid *= 2;
        if (same) break;
        if (round == 3)
            throw ConvergenceError("sf_crossing: crossing set did not stabilize under refinement");
    }

    int total = 0;
    for (double t : crossings) {
        CrossingRecordSF rec;
        rec.t = t;
        rec.at_start = t < 1e-7;
        rec.at_end = t > 1.0 - 1e-7;
        Mat g = gram_or_identity(path.gram, t, path.dim);
        WeightedEig eig = weighted_eigh(path.eval(t), g);
        std::vector<int> kernel;
        for (int i = 0; i < eig.values.size(); ++i)
            if (std::abs(eig.values(i)) <= kernel_band) kernel.push_back(i);
        rec.nullity = static_cast<int>(kernel.size());
        if (rec.nullity == 0) continue; // near miss, no crossing after refinement

        bool deriv_ok = false;
        Mat b = path_derivative(path, t, tol, deriv_ok);
        Mat v(path.dim, rec.nullity);
        for (int k = 0; k < rec.nullity; ++k) v.col(k) = eig.vectors.col(kernel[k]);
        Mat pbp = v.adjoint() * g * b * v;
        pbp = 0.5 * (pbp + pbp.adjoint()).eval();
        rec.b_restricted = pbp;
        SpectralDecomposition sig = spectral_decomposition(pbp, tol);
        rec.m_plus = sig.m_plus;
        rec.m_zero = sig.m_zero;
        rec.m_minus = sig.m_minus;

        bool regular = deriv_ok && sig.m_zero == 0;
        if (!regular) {
            rec.fallback = true;
            double w = 0.05;
            for (double other : crossings)
                if (std::abs(other - t) > 1e-8) w = std::min(w, 0.45 * std::abs(other - t));
            double a0 = std::max(0.0, t - w), b0 = std::min(1.0, t + w);
            auto [sub_total, sub_fc] = sf_partition(subpath(path, a0, b0), tol);
            (void)sub_fc;
            rec.contribution = sub_total;
        } else if (rec.at_start) {
            rec.contribution = -rec.m_minus;
        } else if (rec.at_end) {
            rec.contribution = rec.m_plus;
        } else {
            rec.contribution = rec.m_plus - rec.m_minus;
        }
        total += rec.contribution;
        records.push_back(rec);
    }
    return total;
}

} // namespace specmas
