#ifndef LEVYBRIDGE_BRIDGE_SIM_HPP
#define LEVYBRIDGE_BRIDGE_SIM_HPP

// Samplers for fixed bridges X^{r,z} and for the random bridge zeta with
// independent random length tau and pinning point Z. Every path is constant
// and bit-equal to z from time r on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "levybridge/density_kernels.hpp"
#include "levybridge/errors.hpp"
#include "levybridge/measures.hpp"
#include "levybridge/parallel.hpp"
#include "levybridge/rng.hpp"

namespace levybridge {

struct GridSpec {
    double horizon = 1.0;
    int steps = 1;
    std::vector<double> times;  // explicit grid; overrides horizon/steps when nonempty

    static GridSpec explicit_times(std::vector<double> ts) {
        GridSpec g;
        g.times = std::move(ts);
        g.validate();
        return g;
    }
    static GridSpec uniform(double horizon, int steps) {
        GridSpec g;
        g.horizon = horizon;
        g.steps = steps;
        g.validate();
        return g;
    }

    void validate() const {
        if (!times.empty()) {
            double prev = 0.0;
            for (double t : times) {
                if (!(t > prev) || !std::isfinite(t)) throw ValidationError("grid times must be positive and increasing");
                prev = t;
            }
            return;
        }
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("grid horizon must be positive");
        if (steps < 1) throw ValidationError("grid needs at least one step");
    }

    std::vector<double> points() const {
        validate();
        if (!times.empty()) return times;
        std::vector<double> ts(static_cast<std::size_t>(steps));
        for (int k = 1; k <= steps; ++k) ts[k - 1] = horizon * k / steps;
        return ts;
    }
};

struct BridgePath {
    std::vector<double> grid;
    std::vector<double> values;
    double r = NAN;  // realised length
    double z = NAN;  // realised pinning point
    Family family = Family::BrownianDrift;
    int nudges = 0;  // pre-r values moved one ulp off z
};

enum class SamplerKind { Auto, Explicit, Generic };

namespace detail {

/// A pre-r value that rounded onto z is moved one ulp back toward the
/// previous state, so {zeta_t = z} stays equivalent to {tau <= t}.
inline double keep_off_pin(double y, double z, double prev, int& nudges) {
    if (y != z) return y;
    ++nudges;
    const double toward = prev != z ? prev : -INFINITY;
    return std::nextafter(z, toward);
}

inline double standard_normal(RngStream& rng) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * rng.uniform());
}

inline void require_pin_density(const LevyModel& m, double r, double z) {
    if (!(r > 0.0) || !std::isfinite(r)) throw PreconditionViolation("bridge length must be positive and finite");
    const double f = marginal_density(m, r, z);
    if (!(f > 0.0) || !std::isfinite(f)) {
        std::ostringstream os;
        os.precision(17);
        os << "f_r(z) = " << f << " at r=" << r << ", z=" << z << "; the bridge is undefined";
        throw DegeneratePin(os.str());
    }
}

/// Inverse-CDF draw from an unnormalised density g on [a,b]. Cell masses
/// come from 10-point Gauss-Legendre on equal cells; inside the selected cell
/// the CDF is solved by safeguarded Newton on the same rule. The cell count
/// doubles from 16 until two successive draws of the same uniform agree.
template <class G, class ToY>
double mapped_inverse_cdf(G&& g, double a, double b, double u, ToY&& to_y, double y_tol, const char* what) {
    using GL = boost::math::quadrature::gauss<double, 10>;
    constexpr int kBaseCells = 16;
    constexpr int kMaxCells = 16 << 9;
    double prev = NAN;
    for (int cells = kBaseCells; cells <= kMaxCells; cells *= 2) {
        const double h = (b - a) / cells;
        std::vector<double> cum(static_cast<std::size_t>(cells) + 1, 0.0);
        for (int i = 0; i < cells; ++i) cum[i + 1] = cum[i] + GL::integrate(g, a + i * h, a + (i + 1) * h);
        const double total = cum.back();
        if (std::abs(total - 1.0) > 1e-6) {
            // Under-resolved (a narrow mode) or mass outside [a,b]; refine, and give up at the cap.
            if (cells * 2 <= kMaxCells) {
                prev = NAN;
                continue;
            }
            std::ostringstream os;
            os.precision(10);
            os << what << ": kernel mass " << total << " on [" << a << "," << b << "] with " << cells
               << " cells differs from 1";
            throw NumericalFailure(os.str());
        }
        const double target = u * total;
        std::size_t i = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), target) - cum.begin());
        i = std::clamp<std::size_t>(i, 1, static_cast<std::size_t>(cells)) - 1;
        const double c0 = a + static_cast<double>(i) * h;
        const double need = target - cum[i];
        double lo = c0, hi = c0 + h;
        const double cell_mass = cum[i + 1] - cum[i];
        double s = cell_mass > 0.0 ? c0 + h * std::clamp(need / cell_mass, 0.0, 1.0) : c0 + 0.5 * h;
        for (int it = 0; it < 60; ++it) {
            const double f = GL::integrate(g, c0, s) - need;
            if (f > 0.0) hi = s; else lo = s;
            const double d = g(s);
            double ns = d > 0.0 ? s - f / d : 0.5 * (lo + hi);
            if (!(ns > lo && ns < hi)) ns = 0.5 * (lo + hi);
            const bool done = std::abs(ns - s) <= 1e-14 * (1.0 + std::abs(s)) || hi - lo <= 1e-15 * (1.0 + std::abs(s));
            s = ns;
            if (done) break;
        }
        const double y = to_y(s);
        if (std::abs(y - prev) < y_tol) return y;
        prev = y;
    }
    std::ostringstream os;
    os << what << ": draw did not stabilise under refinement";
    throw NumericalFailure(os.str());
}

/// One draw from y -> f_dt(y - x) f_rho(z - y) / f_{dt+rho}(z - x), in the
/// increment delta = y - x. Returns y.
inline double generic_bridge_step(const LevyModel& m, double dt, double rho, double x, double z, double u) {
    const MarginalKernel kd(m, dt), kr(m, rho);
    const double D = z - x;
    const double norm = MarginalKernel(m, dt + rho)(D);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw UnreachableState("bridge cannot reach its pin from the current state");
    const double inv_norm = 1.0 / norm;
    constexpr double kEdge = 1e-10;

    if (m.is_subordinator()) {
        if (!(D > 0.0)) throw UnreachableState("subordinator bridge sits at or above its pin");
        // delta = D / (1 + e^{-2 sinh v}) and D - delta = D / (1 + e^{2 sinh v}), both without cancellation.
        auto parts = [&](double v, double& lo_off, double& hi_off, double& jac) {
            const double sh = std::sinh(v);
            lo_off = D / (1.0 + std::exp(-2.0 * sh));
            hi_off = D / (1.0 + std::exp(2.0 * sh));
            jac = 2.0 * std::cosh(v) * lo_off * hi_off / D;
        };
        auto g = [&](double v) {
            double lo_off, hi_off, jac;
            parts(v, lo_off, hi_off, jac);
            if (jac == 0.0 || lo_off == 0.0 || hi_off == 0.0) return 0.0;
            return kd(lo_off) * kr(hi_off) * jac * inv_norm;
        };
        double vlo = -3.0, vhi = 3.0;
        while (g(vlo) > kEdge) {
            vlo -= 0.5;
            if (vlo < -6.5)
                throw NumericalFailure("subordinator bridge mass not bracketed near the start (shape too small for the generic sampler)");
        }
        while (g(vhi) > kEdge) {
            vhi += 0.5;
            if (vhi > 6.5)
                throw NumericalFailure("subordinator bridge mass not bracketed near the pin (shape too small for the generic sampler)");
        }
        auto to_y = [&](double v) {
            double lo_off, hi_off, jac;
            parts(v, lo_off, hi_off, jac);
            return lo_off <= hi_off ? x + lo_off : z - hi_off;
        };
        return mapped_inverse_cdf(g, vlo, vhi, u, to_y, 1e-9 * std::max(1.0, D), "subordinator bridge step");
    }

    const double c = dt / (dt + rho) * D;
    const double w = m.width(dt * rho / (dt + rho));
    auto g = [&](double s) {
        const double delta = c + w * std::sinh(s);
        return kd(delta) * kr(D - delta) * w * std::cosh(s) * inv_norm;
    };
    // Start wide enough to contain both delta = 0 and delta = D.
    const double reach = std::max(std::abs(c), std::abs(D - c)) + 8.0 * w;
    const double s0 = std::asinh(reach / w);
    double slo = -s0, shi = s0;
    while (g(slo) > kEdge) {
        slo -= 0.5;
        if (slo < -40.0) throw NumericalFailure("bridge kernel mass not bracketed on the left");
    }
    while (g(shi) > kEdge) {
        shi += 0.5;
        if (shi > 40.0) throw NumericalFailure("bridge kernel mass not bracketed on the right");
    }
    auto to_y = [&](double s) { return x + (c + w * std::sinh(s)); };
    return mapped_inverse_cdf(g, slo, shi, u, to_y, 1e-9 * std::max(1.0, w), "bridge step");
}

inline BridgePath start_path(const std::vector<double>& grid, double r, double z, Family f) {
    BridgePath p;
    p.grid = grid;
    p.values.assign(grid.size(), z);
    p.r = r;
    p.z = z;
    p.family = f;
    return p;
}

}  // namespace detail

/// Sequential draws from the bridge transition density at grid times < r.
inline BridgePath sample_fixed_bridge_generic(const LevyModel& m, double r, double z, const std::vector<double>& grid,
                                              RngStream& rng) {
    detail::require_pin_density(m, r, z);
    BridgePath p = detail::start_path(grid, r, z, m.family);
    double s = 0.0, x = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid[k];
        if (t >= r) break;
        const double y = detail::generic_bridge_step(m, t - s, r - t, x, z, rng.uniform());
        p.values[k] = detail::keep_off_pin(y, z, x, p.nudges);
        s = t;
        x = p.values[k];
    }
    return p;
}

/// B_{t^r} - (t^r)/r B_r + (t^r)/r z with B_t = sigma W_t + b t.
inline BridgePath sample_brownian_bridge_explicit(double sigma, double b, double r, double z,
                                                  const std::vector<double>& grid, RngStream& rng) {
    if (!(r > 0.0)) throw PreconditionViolation("bridge length must be positive");
    BridgePath p = detail::start_path(grid, r, z, Family::BrownianDrift);
    std::vector<double> bt;
    bt.reserve(grid.size());
    double s = 0.0, w = 0.0;
    for (double t : grid) {
        if (t >= r) break;
        w += std::sqrt(t - s) * detail::standard_normal(rng);
        bt.push_back(sigma * w + b * t);
        s = t;
    }
    w += std::sqrt(r - s) * detail::standard_normal(rng);
    const double br = sigma * w + b * r;
    double prev = 0.0;
    for (std::size_t k = 0; k < bt.size(); ++k) {
        const double frac = grid[k] / r;
        const double y = bt[k] - frac * br + frac * z;
        p.values[k] = detail::keep_off_pin(y, z, prev, p.nudges);
        prev = p.values[k];
    }
    return p;
}

namespace detail {

/// log of a Gamma(shape, 1) variate; shapes below 1 go through
/// G_a = G_{a+1} U^{1/a} so tiny shapes do not underflow.
inline double log_gamma_variate(double shape, RngStream& rng) {
    if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
    const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return std::log(g) + std::log1p(-u) / shape;
}

inline double log_add(double a, double b) {
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace detail

/// z gamma_{t^r} / gamma_r for a gamma process with gamma_t ~ Gamma(m t, theta).
/// Increments are drawn in log space; theta cancels in the ratio.
inline BridgePath sample_gamma_bridge_explicit(double m, double theta, double r, double z,
                                               const std::vector<double>& grid, RngStream& rng) {
    if (!(z > 0.0)) throw PreconditionViolation("gamma bridge needs a positive pin z");
    if (!(r > 0.0)) throw PreconditionViolation("bridge length must be positive");
    (void)theta;
    BridgePath p = detail::start_path(grid, r, z, Family::GammaSubordinator);
    std::vector<double> lg;
    lg.reserve(grid.size());
    double s = 0.0, acc = -INFINITY;
    for (double t : grid) {
        if (t >= r) break;
        if (t > s) acc = detail::log_add(acc, detail::log_gamma_variate(m * (t - s), rng));
        lg.push_back(acc);
        s = t;
    }
    const double lr = detail::log_add(acc, detail::log_gamma_variate(m * (r - s), rng));
    if (!std::isfinite(lr)) throw NumericalFailure("gamma process total is not finite in log space");
    double prev = 0.0;
    for (std::size_t k = 0; k < lg.size(); ++k) {
        const double y = z * std::exp(lg[k] - lr);
        p.values[k] = detail::keep_off_pin(y, z, prev, p.nudges);
        prev = p.values[k];
    }
    return p;
}

inline BridgePath sample_fixed_bridge(const LevyModel& m, double r, double z, const std::vector<double>& grid,
                                      RngStream& rng, SamplerKind kind = SamplerKind::Auto) {
    const bool has_explicit = m.family != Family::SymmetricStable;
    if (kind == SamplerKind::Explicit && !has_explicit)
        throw PreconditionViolation("no explicit bridge construction for the stable family");
    if (kind == SamplerKind::Generic || !has_explicit) return sample_fixed_bridge_generic(m, r, z, grid, rng);
    if (m.family == Family::BrownianDrift) return sample_brownian_bridge_explicit(m.sigma, m.drift, r, z, grid, rng);
    return sample_gamma_bridge_explicit(m.gamma_m, m.gamma_theta, r, z, grid, rng);
}

/// Draws tau ~ P_tau and Z ~ P_Z independently, then the bridge X^{tau,Z}.
inline BridgePath sample_random_bridge(const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm,
                                       const std::vector<double>& grid, RngStream& rng,
                                       SamplerKind kind = SamplerKind::Auto) {
    const double r = sample_length(lm, rng);
    const double z = sample_pinning(pm, rng);
    return sample_fixed_bridge(m, r, z, grid, rng, kind);
}

/// Builds interpolation tables that parallel sampling would otherwise race to build.
inline void prepare_sampler(const LevyModel& m) {
    if (m.family == Family::SymmetricStable) (void)stable_table(m.alpha, m.quad);
}

/// n random-bridge paths; path i uses stream (seed, i).
inline std::vector<BridgePath> sample_random_bridges(const LevyModel& m, const LengthMeasure& lm,
                                                     const PinningMeasure& pm, const std::vector<double>& grid,
                                                     std::size_t n, std::uint64_t seed, int threads = 0,
                                                     SamplerKind kind = SamplerKind::Auto) {
    prepare_sampler(m);
    std::vector<BridgePath> out(n);
    parallel_for(n, threads, [&](std::size_t i) {
        RngStream rng(seed, i);
        out[i] = sample_random_bridge(m, lm, pm, grid, rng, kind);
    });
    return out;
}

/// CSV rows: time,value,r,z,path_id with 17 significant digits.
inline void write_paths_csv(std::ostream& os, const std::vector<BridgePath>& paths, std::size_t first_id = 0) {
    char buf[160];
    os << "time,value,r,z,path_id\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const BridgePath& p = paths[i];
        for (std::size_t k = 0; k < p.grid.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%zu\n", p.grid[k], p.values[k], p.r, p.z,
                          first_id + i);
            os << buf;
        }
    }
}

}  // namespace levybridge

#endif
