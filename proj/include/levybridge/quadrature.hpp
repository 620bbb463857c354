#ifndef LEVYBRIDGE_QUADRATURE_HPP
#define LEVYBRIDGE_QUADRATURE_HPP

// Globally adaptive Gauss-Kronrod (21-point) integration over a set of
// mapped pieces. Infinite ends and integrable edge singularities are handled
// by fixed changes of variable so the adaptive loop only ever bisects [0,1].

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <sstream>
#include <type_traits>
#include <vector>

#include "levybridge/errors.hpp"

namespace levybridge {

struct QuadratureConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-12;
    int max_subdivisions = 200;
    /// Tail cutoff for truncated Fourier integrals: exp(-t y^a) < truncation.
    double truncation = 1e-16;
    /// When set, the relative target is taken against int |f| instead of
    /// |int f|, so sign-cancelling integrands with a near-zero value converge.
    bool relative_to_l1 = false;

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || !(truncation > 0.0) || truncation >= 1.0)
            throw ValidationError("quadrature tolerances must be positive (truncation in (0,1))");
        if (max_subdivisions < 1) throw ValidationError("max_subdivisions must be >= 1");
    }

    /// Same tolerances with the absolute floor removed: accuracy relative to the
    /// integral itself, for Bayes ratios whose absolute size is arbitrary.
    QuadratureConfig relative_only() const {
        QuadratureConfig c = *this;
        c.abs_tol = 1e-300;
        return c;
    }

    /// relative_only() with the target measured against int |f|.
    QuadratureConfig relative_l1() const {
        QuadratureConfig c = relative_only();
        c.relative_to_l1 = true;
        return c;
    }
};

/// A location the integrand cares about. scale > 0 adds breakpoints at
/// center + scale * {0, +-1, +-8, +-64}; scale == 0 is a plain breakpoint.
struct Feature {
    double center;
    double scale;
};

struct EdgeSingularity {
    bool lo = false;
    bool hi = false;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int intervals = 0;
};

namespace detail {

// QUADPACK qk21 abscissae/weights.
inline constexpr double kXgk[11] = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr double kWgk[11] = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208931860930, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr double kWg[5] = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

enum class PieceKind { Finite, RightInfinite, LeftInfinite, SingularLeft, SingularRight };

struct Piece {
    PieceKind kind;
    double a;
    double b;
    double length;  // scale for the infinite maps
    double dom_lo = -INFINITY;
    double dom_hi = INFINITY;

    // x(u) and dx/du for u in (0,1).
    void map(double u, double& x, double& jac) const {
        double off;
        map(u, x, jac, off);
    }

    // Also the exact distance `off` from the singular endpoint (else NaN).
    void map(double u, double& x, double& jac, double& off) const {
        off = NAN;
        switch (kind) {
            case PieceKind::Finite:
                x = a + (b - a) * u;
                jac = b - a;
                return;
            case PieceKind::RightInfinite: {
                const double v = 1.0 - u;
                x = a + length * u / v;
                jac = length / (v * v);
                return;
            }
            case PieceKind::LeftInfinite: {
                const double v = 1.0 - u;
                x = b - length * u / v;
                jac = length / (v * v);
                return;
            }
            case PieceKind::SingularLeft:
            case PieceKind::SingularRight: {
                const double v = 1.0 - u;
                const double e = std::exp(-u / v);
                off = (b - a) * e;
                x = kind == PieceKind::SingularLeft ? a + off : b - off;
                jac = off / (v * v);
                return;
            }
        }
    }
};

struct Interval {
    int piece;
    double u0;
    double u1;
    double value;
    double error;
    double l1 = 0.0;
    bool operator<(const Interval& o) const { return error < o.error; }
};

template <class F>
double eval_mapped(F& f, const Piece& p, double u) {
    double x = 0.0, jac = 0.0, off = NAN;
    p.map(u, x, jac, off);
    if (jac == 0.0 || !std::isfinite(x)) return 0.0;
    double fx;
    if constexpr (std::is_invocable_r_v<double, F&, double, double, double>) {
        // Offsets from the domain ends, exact on endpoint-singular pieces.
        const double dl = p.kind == PieceKind::SingularLeft ? off : x - p.dom_lo;
        const double dr = p.kind == PieceKind::SingularRight ? off : p.dom_hi - x;
        if (off == 0.0) return 0.0;
        fx = f(x, dl, dr);
    } else {
        // A node that rounds onto a singular endpoint carries less than one ulp of width.
        if ((p.kind == PieceKind::SingularLeft && x == p.a) || (p.kind == PieceKind::SingularRight && x == p.b))
            return 0.0;
        fx = f(x);
    }
    if (fx == 0.0) return 0.0;
    const double v = fx * jac;
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite integrand value " << fx << " at x=" << x;
        throw NumericalFailure(os.str());
    }
    return v;
}

template <class F>
Interval gk21(F& f, const Piece& p, int piece_index, double u0, double u1) {
    constexpr double epmach = std::numeric_limits<double>::epsilon();
    constexpr double uflow = std::numeric_limits<double>::min();
    const double centr = 0.5 * (u0 + u1);
    const double hlgth = 0.5 * (u1 - u0);
    const double dhlgth = std::abs(hlgth);

    double fv1[10], fv2[10];
    const double fc = eval_mapped(f, p, centr);
    double resg = 0.0;
    double resk = kWgk[10] * fc;
    double resabs = std::abs(resk);
    for (int j = 0; j < 5; ++j) {
        const int jtw = 2 * j + 1;
        const double absc = hlgth * kXgk[jtw];
        const double f1 = eval_mapped(f, p, centr - absc);
        const double f2 = eval_mapped(f, p, centr + absc);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += kWg[j] * (f1 + f2);
        resk += kWgk[jtw] * (f1 + f2);
        resabs += kWgk[jtw] * (std::abs(f1) + std::abs(f2));
    }
    for (int j = 0; j < 5; ++j) {
        const int jtwm1 = 2 * j;
        const double absc = hlgth * kXgk[jtwm1];
        const double f1 = eval_mapped(f, p, centr - absc);
        const double f2 = eval_mapped(f, p, centr + absc);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += kWgk[jtwm1] * (f1 + f2);
        resabs += kWgk[jtwm1] * (std::abs(f1) + std::abs(f2));
    }
    const double reskh = resk * 0.5;
    double resasc = kWgk[10] * std::abs(fc - reskh);
    for (int j = 0; j < 10; ++j)
        resasc += kWgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));

    Interval iv{piece_index, u0, u1, resk * hlgth, 0.0};
    resabs *= dhlgth;
    resasc *= dhlgth;
    double abserr = std::abs((resk - resg) * hlgth);
    if (resasc != 0.0 && abserr != 0.0)
        abserr = resasc * std::min(1.0, std::pow(200.0 * abserr / resasc, 1.5));
    if (resabs > uflow / (50.0 * epmach)) abserr = std::max(epmach * 50.0 * resabs, abserr);
    iv.error = abserr;
    iv.l1 = resabs;
    return iv;
}

inline double neumaier_sum(std::span<const double> xs) {
    double sum = 0.0, c = 0.0;
    for (double x : xs) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            c += (sum - t) + x;
        else
            c += (x - t) + sum;
        sum = t;
    }
    return sum + c;
}

template <class F>
QuadratureResult integrate_pieces(F& f, const std::vector<Piece>& pieces, const QuadratureConfig& cfg) {
    std::priority_queue<Interval> heap;
    double total = 0.0, err = 0.0, l1 = 0.0;
    for (int i = 0; i < static_cast<int>(pieces.size()); ++i) {
        Interval iv = gk21(f, pieces[i], i, 0.0, 1.0);
        total += iv.value;
        err += iv.error;
        l1 += iv.l1;
        heap.push(iv);
    }
    int bisections = 0;
    auto target = [&] {
        return std::max(cfg.abs_tol, cfg.rel_tol * (cfg.relative_to_l1 ? l1 : std::abs(total)));
    };
    while (err > target()) {
        if (bisections >= cfg.max_subdivisions) {
            std::ostringstream os;
            os << "quadrature did not converge in " << cfg.max_subdivisions
               << " subdivisions (estimate " << total << ", error " << err << ")";
            throw NumericalFailure(os.str());
        }
        const Interval worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.u0 + worst.u1);
        if (!(mid > worst.u0 && mid < worst.u1))
            throw NumericalFailure("quadrature interval collapsed below double resolution");
        const Interval left = gk21(f, pieces[worst.piece], worst.piece, worst.u0, mid);
        const Interval right = gk21(f, pieces[worst.piece], worst.piece, mid, worst.u1);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        l1 += left.l1 + right.l1 - worst.l1;
        heap.push(left);
        heap.push(right);
        ++bisections;
        if (bisections % 64 == 0) {
            // Resynchronise the running sums.
            auto copy = heap;
            double t = 0.0, e = 0.0, a = 0.0;
            while (!copy.empty()) {
                t += copy.top().value;
                e += copy.top().error;
                a += copy.top().l1;
                copy.pop();
            }
            total = t;
            err = e;
            l1 = a;
        }
    }
    std::vector<double> values;
    values.reserve(heap.size());
    QuadratureResult res;
    res.intervals = static_cast<int>(heap.size());
    double e = 0.0;
    while (!heap.empty()) {
        values.push_back(heap.top().value);
        e += heap.top().error;
        heap.pop();
    }
    std::sort(values.begin(), values.end(), [](double x, double y) { return std::abs(x) < std::abs(y); });
    res.value = neumaier_sum(values);
    res.error = e;
    return res;
}

inline std::vector<Piece> build_pieces(double lo, double hi, std::span<const Feature> features,
                                       EdgeSingularity edges) {
    if (!(lo < hi)) throw PreconditionViolation("integration bounds must satisfy lo < hi");
    if (edges.lo && !std::isfinite(lo)) edges.lo = false;
    if (edges.hi && !std::isfinite(hi)) edges.hi = false;

    std::vector<double> pts;
    double min_scale = std::numeric_limits<double>::infinity();
    for (const Feature& ft : features) {
        if (!std::isfinite(ft.center)) continue;
        if (ft.scale > 0.0 && std::isfinite(ft.scale)) {
            min_scale = std::min(min_scale, ft.scale);
            for (double k : {-64.0, -8.0, -1.0, 0.0, 1.0, 8.0, 64.0}) pts.push_back(ft.center + k * ft.scale);
        } else {
            pts.push_back(ft.center);
        }
    }
    std::erase_if(pts, [&](double p) { return !(p > lo && p < hi); });
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    const double unit = std::isfinite(min_scale) ? min_scale : 1.0;
    if (pts.empty()) {
        if (!std::isfinite(lo) && !std::isfinite(hi)) pts.push_back(0.0);
        else if (!std::isfinite(hi)) pts.push_back(lo + std::max(unit, std::abs(lo) * 1e-8 + unit));
        else if (!std::isfinite(lo)) pts.push_back(hi - std::max(unit, std::abs(hi) * 1e-8 + unit));
        else if (edges.lo && edges.hi) pts.push_back(0.5 * (lo + hi));
    }

    std::vector<double> nodes;
    nodes.reserve(pts.size() + 2);
    nodes.push_back(lo);
    nodes.insert(nodes.end(), pts.begin(), pts.end());
    nodes.push_back(hi);

    std::vector<Piece> pieces;
    const std::size_t n = nodes.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = nodes[i], b = nodes[i + 1];
        if (!std::isfinite(a)) {
            const double len = n >= 2 && std::isfinite(nodes[2]) ? nodes[2] - nodes[1] : std::max(1.0, std::abs(b));
            pieces.push_back({PieceKind::LeftInfinite, a, b, std::max(len, unit)});
        } else if (!std::isfinite(b)) {
            const double len = n >= 2 && std::isfinite(nodes[n - 2]) ? nodes[n - 1] - nodes[n - 2]
                                                                     : std::max(1.0, std::abs(a));
            pieces.push_back({PieceKind::RightInfinite, a, b, std::max(len, unit)});
        } else if (i == 0 && edges.lo) {
            pieces.push_back({PieceKind::SingularLeft, a, b, 0.0});
        } else if (i + 1 == n && edges.hi) {
            pieces.push_back({PieceKind::SingularRight, a, b, 0.0});
        } else {
            pieces.push_back({PieceKind::Finite, a, b, 0.0});
        }
        pieces.back().dom_lo = lo;
        pieces.back().dom_hi = hi;
    }
    return pieces;
}

}  // namespace detail

/// Integral of f over [lo, hi]; either end may be infinite. f is called as
/// f(x), or as f(x, x - lo, hi - x) when it accepts three arguments; the
/// offsets are exact near an endpoint flagged singular.
template <class F>
QuadratureResult integrate_detailed(F&& f, double lo, double hi, const QuadratureConfig& cfg,
                                    std::span<const Feature> features = {}, EdgeSingularity edges = {}) {
    if (lo == hi) return {};
    if (lo > hi) {
        QuadratureResult r = integrate_detailed(f, hi, lo, cfg, features, edges);
        r.value = -r.value;
        return r;
    }
    const auto pieces = detail::build_pieces(lo, hi, features, edges);
    return detail::integrate_pieces(f, pieces, cfg);
}

template <class F>
double integrate(F&& f, double lo, double hi, const QuadratureConfig& cfg,
                 std::span<const Feature> features = {}, EdgeSingularity edges = {}) {
    return integrate_detailed(f, lo, hi, cfg, features, edges).value;
}

/// Integral over consecutive finite panels [b_0,b_1], [b_1,b_2], ... under one
/// global error budget. Used for sign-alternating oscillatory sums.
template <class F>
QuadratureResult integrate_panels(F&& f, std::span<const double> bounds, const QuadratureConfig& cfg) {
    std::vector<detail::Piece> pieces;
    pieces.reserve(bounds.size());
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i)
        if (bounds[i + 1] > bounds[i])
            pieces.push_back({detail::PieceKind::Finite, bounds[i], bounds[i + 1], 0.0, bounds.front(), bounds.back()});
    if (pieces.empty()) return {};
    return detail::integrate_pieces(f, pieces, cfg);
}

}  // namespace levybridge

#endif
