#ifndef LEVYBRIDGE_CONDITIONAL_HPP
#define LEVYBRIDGE_CONDITIONAL_HPP

// Conditional laws of a random bridge given one or two observed states.
//
// Notation used throughout:
//   K(r,t,x;z) = f_{r-t}(z-x) / f_r(z)            (bridge likelihood ratio)
//   Phi_g(r)   = int g(z) K(r,t,x;z) P_Z(dz)
//   D_g        = int_{(t,inf)} Phi_g(r) P_tau(dr)
// An observation x at time t outside the pin set has posterior past-mass
//   A / (A + f_t(x) D_1),  A = a_ac f_Z(x) F_tau(t).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "levybridge/density_kernels.hpp"
#include "levybridge/errors.hpp"
#include "levybridge/measures.hpp"
#include "levybridge/quadrature.hpp"

namespace levybridge {

inline constexpr double kZeroEvidence = 1e-300;

/// Depth of the lattice that represents a Cantor pin part as atoms inside a
/// PosteriorLaw. Integrals against the Cantor part keep the configured depth.
inline constexpr int kCantorPosteriorDepth = 12;

struct Observation {
    double t;
    double x;
    bool in_pin_set = false;

    static Observation at(double t, double x, const MembershipOracle& oracle) { return {t, x, oracle.contains(x)}; }

    void validate() const {
        if (!(t > 0.0) || !std::isfinite(t)) throw PreconditionViolation("observation time must be positive");
        if (!std::isfinite(x)) throw PreconditionViolation("observed state must be finite");
    }
};

/// Unnormalized density on [lo, hi]; `mass` is its integral.
struct ContinuousPart {
    std::function<double(double)> kernel;
    /// Optional form of `kernel` used for integration: (y, a, y - a, b, b - y)
    /// for the enclosing cut [a, b], with exact offsets near a or b.
    std::function<double(double, double, double, double, double)> edge_kernel;
    double lo = -INFINITY;
    double hi = INFINITY;
    std::vector<Feature> features;
    std::vector<double> breaks;  // interior points where the kernel may be singular or discontinuous
    double mass = 0.0;
};

/// Atoms plus a weighted continuous density. Total mass is 1 up to quadrature error.
struct PosteriorLaw {
    std::string variable;
    std::vector<Atom> atoms;
    double continuous_weight = 0.0;
    ContinuousPart continuous;
    /// P(tau <= t | observation) when the law was built from one; NaN otherwise.
    double past_mass = NAN;

    double atom_mass() const {
        double s = 0.0;
        for (const Atom& a : atoms) s += a.prob;
        return s;
    }
    double total_mass() const { return atom_mass() + continuous_weight; }

    /// Normalized continuous density; zero when there is no continuous part.
    double density(double v) const {
        if (continuous_weight <= 0.0 || !(continuous.mass > 0.0)) return 0.0;
        if (v < continuous.lo || v > continuous.hi) return 0.0;
        return continuous.kernel(v) / continuous.mass;
    }

    /// int h d(law).
    template <class H>
    double expectation(H&& h, const QuadratureConfig& cfg) const {
        double s = 0.0;
        for (const Atom& a : atoms) s += a.prob * h(a.location);
        if (continuous_weight > 0.0 && continuous.mass > 0.0)
            s += continuous_weight * integrate_kernel(h, cfg) / continuous.mass;
        return s;
    }

    /// int h(y) kernel(y) dy over the continuous domain.
    template <class H>
    double integrate_kernel(H&& h, const QuadratureConfig& cfg) const {
        if (continuous.edge_kernel)
            return integrate_continuous(
                [&](double y, double a, double dl, double b, double dr) {
                    const double k = continuous.edge_kernel(y, a, dl, b, dr);
                    return k == 0.0 ? 0.0 : h(y) * k;
                },
                cfg);
        return integrate_continuous(
            [&](double y, double, double, double, double) {
                const double k = continuous.kernel(y);
                return k == 0.0 ? 0.0 : h(y) * k;
            },
            cfg);
    }

    /// int f(y, a, y - a, b, b - y) dy over the cuts [a, b] of the continuous
    /// domain; finite edges take the endpoint-singular mapping.
    template <class F>
    double integrate_continuous(F&& f, const QuadratureConfig& cfg) const {
        std::vector<double> cuts{continuous.lo};
        for (double b : continuous.breaks)
            if (b > continuous.lo && b < continuous.hi) cuts.push_back(b);
        cuts.push_back(continuous.hi);
        std::sort(cuts.begin() + 1, cuts.end() - 1);
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const double a = cuts[i], b = cuts[i + 1];
            s += integrate([&](double y, double dl, double dr) { return f(y, a, dl, b, dr); }, a, b, cfg,
                           continuous.features, EdgeSingularity{true, true});
        }
        return s;
    }
};

namespace detail {

inline QuadratureConfig outer_cfg(const LevyModel& m) { return m.quad.relative_l1(); }

// Inner integrals are tighter so their noise does not stall the outer rule.
inline QuadratureConfig inner_cfg(const LevyModel& m) {
    QuadratureConfig q = m.quad.relative_l1();
    q.rel_tol = std::max(m.quad.rel_tol * 1e-2, 1e-13);
    return q;
}

inline double past_weight(const PinningMeasure& pm, double x) {
    return pm.a_ac > 0.0 ? pm.a_ac * pm.ac.pdf(x) : 0.0;
}

/// K(r,t,x;z) with the increment d = z - x passed separately so callers can
/// supply it exactly near a singular edge; zero where the numerator vanishes.
inline double pin_kernel_d(const LevyModel& m, double r, double t, double d, double z) {
    const double ln = log_marginal_density(m, r - t, d);
    if (ln == -INFINITY) return 0.0;
    const double ld = log_marginal_density(m, r, z);
    if (!std::isfinite(ld)) throw DegeneratePin("f_r(z) vanishes at a pin point carrying mass");
    return std::exp(ln - ld);
}

inline double pin_kernel(const LevyModel& m, double r, double t, double x, double z) {
    return pin_kernel_d(m, r, t, z - x, z);
}

/// Quadrature hints for z -> K(r,t,x;z): the kernel peaks near x plus the
/// (r-t)-increment.
inline std::vector<Feature> pin_features(const LevyModel& m, double r, double t, double x) {
    return {Feature{x + m.location(r - t), m.width(r - t)}};
}

/// A pin atom at `z` whose distance z - x is known exactly as `d`.
struct Gap {
    double z = NAN;
    double d = NAN;
};

/// Phi_g(r) = int g(z) K(r,t,x;z) P_Z(dz).
template <class G>
double pin_integral(G&& g, const LevyModel& m, const PinningMeasure& pm, double r, double t, double x,
                    Gap gap = {}) {
    auto kern = [&](double z, double d) {
        const double k = pin_kernel_d(m, r, t, d, z);
        return k == 0.0 ? 0.0 : g(z) * k;
    };
    double s = 0.0;
    if (pm.a_sd > 0.0) {
        double a = 0.0;
        for (const Atom& at : pm.atoms) a += at.prob * kern(at.location, at.location == gap.z ? gap.d : at.location - x);
        s += pm.a_sd * a;
    }
    if (pm.a_sc > 0.0) s += pm.a_sc * pm.integrate_cantor([&](double z) { return kern(z, z - x); });
    if (pm.a_ac > 0.0) {
        std::vector<Feature> feats = pin_features(m, r, t, x);
        if (!m.is_subordinator()) {
            s += pm.a_ac * pm.integrate_ac([&](double z) { return kern(z, z - x); }, inner_cfg(m), feats);
        } else {
            // Subordinator increments are singular at z = x; integrate in the offset.
            const double lo = std::max(pm.ac.lower(), x), hi = pm.ac.upper();
            if (hi > lo) {
                for (const Feature& f : pm.ac.features()) feats.push_back(f);
                s += pm.a_ac * integrate(
                                   [&](double z, double dl, double) {
                                       const double p = pm.ac.pdf(z);
                                       return p == 0.0 ? 0.0 : p * kern(z, lo == x ? dl : z - x);
                                   },
                                   lo, hi, inner_cfg(m), feats, EdgeSingularity{true, true});
            }
        }
    }
    return s;
}

/// int_{(a,b]} h(r) P_tau(dr) with the density part split at `splits`.
template <class H>
double length_integral(H&& h, const LengthMeasure& lm, double a, double b, const QuadratureConfig& cfg,
                       std::span<const double> splits = {}) {
    if (!(b > a)) return 0.0;
    double s = 0.0;
    for (const Atom& at : lm.atoms)
        if (at.location > a && at.location <= b && at.prob > 0.0) s += at.prob * h(at.location);
    if (lm.density_weight > 0.0) {
        std::vector<double> cuts{std::max(a, lm.density.lower())};
        const double hi = std::min(b, lm.density.upper());
        if (!(hi > cuts[0])) return s;
        for (double c : splits)
            if (c > cuts[0] && c < hi) cuts.push_back(c);
        cuts.push_back(hi);
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        const auto feats = lm.density.features();
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            s += lm.density_weight *
                 integrate([&](double r) { return h(r) * lm.density.pdf(r); }, cuts[i], cuts[i + 1], cfg, feats);
    }
    return s;
}

/// D_g over (a, b].
template <class G>
double future_integral(G&& g, const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm, double t,
                       double x, double a, double b, Gap gap = {}) {
    return length_integral([&](double r) { return pin_integral(g, m, pm, r, t, x, gap); }, lm, a, b, outer_cfg(m));
}

inline void require_evidence(double v, const char* what) {
    if (!(v > kZeroEvidence) || !std::isfinite(v)) throw ZeroEvidence(what);
}

inline void require_after(double t, double u) {
    if (!(u > t)) throw PreconditionViolation("future time must exceed the observation time");
}

inline void require_two_time(const LengthMeasure& lm, double t1, double t2) {
    if (!(t1 > 0.0) || !(t2 > t1)) throw PreconditionViolation("two-time laws need 0 < t1 < t2");
    if (lm.cdf(t1) != 0.0) throw PreconditionViolation("two-time laws need F_tau(t1) = 0");
}

/// int_{(t1,t2]} f_{r-t1}(x2-x1)/f_r(x2) h(r) P_tau(dr)
template <class H>
double window_integral(H&& h, const LevyModel& m, const LengthMeasure& lm, double t1, double t2, double x1,
                       double x2) {
    return length_integral(
        [&](double r) {
            const double k = pin_kernel(m, r, t1, x1, x2);
            return k == 0.0 ? 0.0 : k * h(r);
        },
        lm, t1, t2, outer_cfg(m));
}

/// State-space integration hints for y -> f_{u-t}(y-x) g(y).
inline ContinuousPart state_domain(const LevyModel& m, double t, double u, double x) {
    ContinuousPart c;
    if (m.is_subordinator()) {
        c.lo = x;
        c.breaks.push_back(x);
    }
    c.features.push_back(Feature{x + m.location(u - t), m.width(u - t)});
    return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One observation.

/// Radon-Nikodym density of zeta_t given tau = r against P_Z^s + Lebesgue.
inline double q_density(const LevyModel& m, const PinningMeasure& pm, const MembershipOracle& oracle, double r,
                        double x, double t) {
    if (!(t > 0.0)) throw PreconditionViolation("q_density needs t > 0");
    const bool in_z = oracle.contains(x);
    if (r <= t) return in_z ? 1.0 - pm.a_ac : detail::past_weight(pm, x);
    if (in_z) return 0.0;
    const double ft = marginal_density(m, t, x);
    if (ft == 0.0) return 0.0;
    return ft * detail::pin_integral([](double) { return 1.0; }, m, pm, r, t, x);
}

/// Law of tau given zeta_t = x.
inline PosteriorLaw tau_posterior(const Observation& obs, const LevyModel& m, const LengthMeasure& lm,
                                  const PinningMeasure& pm) {
    obs.validate();
    const double t = obs.t, x = obs.x;
    const double Ft = lm.cdf(t);
    PosteriorLaw law;
    law.variable = "tau";
    law.continuous.lo = lm.density_weight > 0.0 ? lm.density.lower() : 0.0;
    law.continuous.hi = lm.density_weight > 0.0 ? lm.density.upper() : 0.0;
    law.continuous.features = lm.density.features();
    law.continuous.breaks = {t};

    if (obs.in_pin_set) {
        detail::require_evidence(Ft, "observation in the pin set before any length mass");
        for (const Atom& a : lm.atoms)
            if (a.location <= t && a.prob > 0.0) law.atoms.push_back({a.location, a.prob / Ft});
        if (lm.density_weight > 0.0) {
            const LengthDensity d = lm.density;
            law.continuous.kernel = [d, t](double r) { return r <= t ? d.pdf(r) : 0.0; };
            law.continuous.mass = d.cdf(t);
            law.continuous_weight = lm.density_weight * law.continuous.mass / Ft;
        }
        law.past_mass = 1.0;
        return law;
    }

    const double w_past = detail::past_weight(pm, x);
    const double ft = marginal_density(m, t, x);
    auto future = [&m, &pm, t, x](double r) {
        return detail::pin_integral([](double) { return 1.0; }, m, pm, r, t, x);
    };

    std::vector<Atom> raw;
    double total = 0.0;
    for (const Atom& a : lm.atoms) {
        if (a.prob <= 0.0) continue;
        const double w = a.location <= t ? w_past * a.prob : (ft > 0.0 ? ft * future(a.location) * a.prob : 0.0);
        raw.push_back({a.location, w});
        total += w;
    }
    double past = 0.0;
    for (const Atom& a : raw)
        if (a.location <= t) past += a.prob;

    if (lm.density_weight > 0.0) {
        const LengthDensity d = lm.density;
        law.continuous.kernel = [d, t, w_past, ft, future](double r) {
            const double p = d.pdf(r);
            if (p == 0.0) return 0.0;
            if (r <= t) return w_past * p;
            return ft > 0.0 ? ft * future(r) * p : 0.0;
        };
        const double past_c = w_past * d.cdf(t);
        const double fut_c =
            ft > 0.0 ? detail::length_integral(future, LengthMeasure::density_only(d), t, INFINITY, detail::outer_cfg(m)) *
                           ft
                     : 0.0;
        law.continuous.mass = past_c + fut_c;
        const double cw = lm.density_weight * law.continuous.mass;
        total += cw;
        past += lm.density_weight * past_c;
        law.continuous_weight = cw;
    }
    detail::require_evidence(total, "observation has zero likelihood under every length");
    for (const Atom& a : raw)
        if (a.prob > 0.0) law.atoms.push_back({a.location, a.prob / total});
    law.continuous_weight /= total;
    law.past_mass = past / total;
    return law;
}

/// P(tau <= t | zeta_t = x).
inline double survival_given_state(const Observation& obs, const LevyModel& m, const LengthMeasure& lm,
                                   const PinningMeasure& pm) {
    obs.validate();
    if (obs.in_pin_set) {
        detail::require_evidence(lm.cdf(obs.t), "observation in the pin set before any length mass");
        return 1.0;
    }
    const double A = detail::past_weight(pm, obs.x) * lm.cdf(obs.t);
    const double ft = marginal_density(m, obs.t, obs.x);
    const double B =
        ft > 0.0 ? ft * detail::future_integral([](double) { return 1.0; }, m, lm, pm, obs.t, obs.x, obs.t, INFINITY)
                 : 0.0;
    detail::require_evidence(A + B, "observation has zero likelihood under every length");
    return A / (A + B);
}

/// E[g(Z) | zeta_t = x].
template <class G>
double z_posterior_expectation(G&& g, const Observation& obs, const LevyModel& m, const LengthMeasure& lm,
                               const PinningMeasure& pm) {
    obs.validate();
    const double t = obs.t, x = obs.x;
    if (obs.in_pin_set) {
        detail::require_evidence(lm.cdf(t), "observation in the pin set before any length mass");
        return g(x);
    }
    const double A = detail::past_weight(pm, x) * lm.cdf(t);
    const double ft = marginal_density(m, t, x);
    double num = A > 0.0 ? A * g(x) : 0.0, den = A;
    if (ft > 0.0) {
        num += ft * detail::future_integral(g, m, lm, pm, t, x, t, INFINITY);
        den += ft * detail::future_integral([](double) { return 1.0; }, m, lm, pm, t, x, t, INFINITY);
    }
    detail::require_evidence(den, "observation has zero likelihood under every length");
    return num / den;
}

/// E[g(Z) | X^{r,Z}_t = x] for a bridge of fixed length r.
template <class G>
double fixed_length_z_expectation(G&& g, double r, double t, double x, const LevyModel& m, const PinningMeasure& pm) {
    if (r <= t) return g(x);
    const double num = detail::pin_integral(g, m, pm, r, t, x);
    const double den = detail::pin_integral([](double) { return 1.0; }, m, pm, r, t, x);
    detail::require_evidence(den, "pin posterior has zero evidence");
    return num / den;
}

/// Law of zeta_u given zeta_t = x, u > t.
inline PosteriorLaw predictive_law(const Observation& obs, double u, const LevyModel& m, const LengthMeasure& lm,
                                   const PinningMeasure& pm) {
    obs.validate();
    detail::require_after(obs.t, u);
    const double t = obs.t, x = obs.x;
    PosteriorLaw law;
    law.variable = "zeta_u";
    law.continuous = detail::state_domain(m, t, u, x);

    const double s = survival_given_state(obs, m, lm, pm);
    law.past_mass = s;
    if (s >= 1.0) {
        law.atoms.push_back({x, 1.0});
        return law;
    }
    const double D = detail::future_integral([](double) { return 1.0; }, m, lm, pm, t, x, t, INFINITY);
    detail::require_evidence(D, "observation has zero likelihood after t");
    const double scale = (1.0 - s) / D;

    // Pin part: z weighted by int_{(t,u]} K(r,t,x;z) P_tau(dr).
    auto pin_weight = [&m, &lm, t, u, x](double z) {
        if (m.is_subordinator() && !(z > x)) return 0.0;
        return detail::length_integral([&](double r) { return detail::pin_kernel(m, r, t, x, z); }, lm, t, u,
                                       detail::inner_cfg(m));
    };
    std::vector<Atom> atoms;
    if (s > 0.0) atoms.push_back({x, s});
    if (pm.a_sd > 0.0)
        for (const Atom& a : pm.atoms) {
            const double w = pm.a_sd * a.prob * pin_weight(a.location) * scale;
            if (w > 0.0) atoms.push_back({a.location, w});
        }
    if (pm.a_sc > 0.0) {
        const CantorSpec& c = *pm.cantor;
        const std::uint64_t n = std::uint64_t{1} << kCantorPosteriorDepth;
        const double cell = std::ldexp(1.0, -kCantorPosteriorDepth);
        for (std::uint64_t k = 0; k < n; ++k) {
            const double z = cantor_lattice_point(c.lo, c.hi, k, kCantorPosteriorDepth);
            const double w = pm.a_sc * cell * pin_weight(z) * scale;
            if (w > 0.0) atoms.push_back({z, w});
        }
    }
    // Merge equal locations (x may coincide with a pin atom only in the pin set).
    std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
    for (const Atom& a : atoms) {
        if (!law.atoms.empty() && law.atoms.back().location == a.location)
            law.atoms.back().prob += a.prob;
        else
            law.atoms.push_back(a);
    }

    // Continuous part: AC pin density plus the travelling density in y.
    const bool ac = pm.a_ac > 0.0;
    const bool travelling = lm.cdf(u) < 1.0;
    const PinningMeasure pmc = pm;
    const LengthMeasure lmc = lm;
    const LevyModel mc = m;
    law.continuous.edge_kernel = [=](double y, double a, double dl, double b, double dr) {
        const double dx = a == x ? dl : y - x;
        const detail::Gap gap{b, dr};
        double v = 0.0;
        if (ac && !(mc.is_subordinator() && !(dx > 0.0))) {
            const double fz = pmc.ac.pdf(y);
            if (fz > 0.0)
                v += pmc.a_ac * fz *
                     detail::length_integral([&](double r) { return detail::pin_kernel_d(mc, r, t, dx, y); }, lmc, t,
                                             u, detail::inner_cfg(mc));
        }
        if (travelling) {
            const double f = marginal_density(mc, u - t, dx);
            if (f > 0.0)
                v += f * detail::future_integral([](double) { return 1.0; }, mc, lmc, pmc, u, y, u, INFINITY, gap);
        }
        return v * scale;
    };
    law.continuous.kernel = [k = law.continuous.edge_kernel](double y) { return k(y, NAN, NAN, NAN, NAN); };
    if (ac) {
        law.continuous.features.push_back(Feature{0.5 * (pm.ac.lower() + pm.ac.upper()), 1.0});
        for (const Feature& f : pm.ac.features()) law.continuous.features.push_back(f);
        if (std::isfinite(pm.ac.lower())) law.continuous.breaks.push_back(pm.ac.lower());
        if (std::isfinite(pm.ac.upper())) law.continuous.breaks.push_back(pm.ac.upper());
    }
    if (pm.a_sd > 0.0)
        for (const Atom& a : pm.atoms) law.continuous.breaks.push_back(a.location);
    if (ac || travelling) {
        law.continuous_weight = law.integrate_kernel([](double) { return 1.0; }, detail::outer_cfg(m));
        law.continuous.mass = law.continuous_weight;
    }
    if (!(law.continuous_weight > 0.0)) {
        law.continuous_weight = 0.0;
        law.continuous.mass = 0.0;
    }
    return law;
}

// ---------------------------------------------------------------------------
// Two observations (t1 < t2, F_tau(t1) = 0).

/// Law of tau given zeta_{t1} = x1, zeta_{t2} = x2.
inline PosteriorLaw two_time_tau_posterior(double t1, double t2, double x1, double x2, bool x2_in_pin_set,
                                           const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm) {
    detail::require_two_time(lm, t1, t2);
    PosteriorLaw law;
    law.variable = "tau";
    law.continuous.lo = lm.density_weight > 0.0 ? lm.density.lower() : 0.0;
    law.continuous.hi = lm.density_weight > 0.0 ? lm.density.upper() : 0.0;
    law.continuous.features = lm.density.features();
    law.continuous.breaks = {t2};

    const double w_past = x2_in_pin_set ? 1.0 : detail::past_weight(pm, x2);
    const double f12 = x2_in_pin_set ? 0.0 : marginal_density(m, t2 - t1, x2 - x1);
    auto weight = [&m, &pm, t1, t2, x1, x2, w_past, f12](double r) -> double {
        if (r <= t1) return 0.0;
        if (r <= t2) return w_past > 0.0 ? w_past * detail::pin_kernel(m, r, t1, x1, x2) : 0.0;
        return f12 > 0.0 ? f12 * detail::pin_integral([](double) { return 1.0; }, m, pm, r, t2, x2) : 0.0;
    };

    std::vector<Atom> raw;
    double total = 0.0, past = 0.0;
    for (const Atom& a : lm.atoms) {
        if (a.prob <= 0.0) continue;
        const double w = weight(a.location) * a.prob;
        raw.push_back({a.location, w});
        total += w;
        if (a.location <= t2) past += w;
    }
    if (lm.density_weight > 0.0) {
        const LengthDensity d = lm.density;
        law.continuous.kernel = [d, weight](double r) {
            const double p = d.pdf(r);
            return p == 0.0 ? 0.0 : p * weight(r);
        };
        const LengthMeasure dens = LengthMeasure::density_only(d);
        const double pc = detail::length_integral(weight, dens, t1, t2, detail::outer_cfg(m));
        const double fc = detail::length_integral(weight, dens, t2, INFINITY, detail::outer_cfg(m));
        law.continuous.mass = pc + fc;
        law.continuous_weight = lm.density_weight * law.continuous.mass;
        total += law.continuous_weight;
        past += lm.density_weight * pc;
    }
    detail::require_evidence(total, "two-time observation has zero likelihood");
    for (const Atom& a : raw)
        if (a.prob > 0.0) law.atoms.push_back({a.location, a.prob / total});
    law.continuous_weight /= total;
    law.past_mass = past / total;
    return law;
}

/// U_{t1,t2}(x1,x2) = f_{t2-t1}(x2-x1) / int_{(t1,t2]} f_{r-t1}(x2-x1)/f_r(x2) P_tau(dr).
inline double u_ratio(double t1, double t2, double x1, double x2, const LevyModel& m, const LengthMeasure& lm) {
    detail::require_two_time(lm, t1, t2);
    const double I1 = detail::window_integral([](double) { return 1.0; }, m, lm, t1, t2, x1, x2);
    detail::require_evidence(I1, "no length mass can explain the pair");
    return marginal_density(m, t2 - t1, x2 - x1) / I1;
}

/// E[g(Z) | zeta_{t1} = x1, zeta_{t2} = x2].
template <class G>
double two_time_z_expectation(G&& g, double t1, double t2, double x1, double x2, bool x2_in_pin_set,
                              const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm) {
    detail::require_two_time(lm, t1, t2);
    if (x2_in_pin_set) {
        const double I1 = detail::window_integral([](double) { return 1.0; }, m, lm, t1, t2, x1, x2);
        detail::require_evidence(I1, "pin-set observation with no length mass in (t1, t2]");
        return g(x2);
    }
    const double w = detail::past_weight(pm, x2);
    const double I1 = w > 0.0 ? detail::window_integral([](double) { return 1.0; }, m, lm, t1, t2, x1, x2) : 0.0;
    const double f12 = marginal_density(m, t2 - t1, x2 - x1);
    double num = w * I1 > 0.0 ? w * I1 * g(x2) : 0.0, den = w * I1;
    if (f12 > 0.0) {
        num += f12 * detail::future_integral(g, m, lm, pm, t2, x2, t2, INFINITY);
        den += f12 * detail::future_integral([](double) { return 1.0; }, m, lm, pm, t2, x2, t2, INFINITY);
    }
    detail::require_evidence(den, "two-time observation has zero likelihood");
    return num / den;
}

// ---------------------------------------------------------------------------
// Transition kernel of the pair (Z, zeta).

/// E[G(Z, zeta_u) | Z = z, zeta_t = x]; the stopped branch is x == z exactly.
template <class G>
double y_transition(G&& G_, double t, double u, double z, double x, const LevyModel& m, const LengthMeasure& lm) {
    detail::require_after(t, u);
    if (x == z) return G_(z, z);
    auto k = [&](double r, double s, double y) { return detail::pin_kernel(m, r, s, y, z); };
    const double den = detail::length_integral([&](double r) { return k(r, t, x); }, lm, t, INFINITY,
                                               detail::outer_cfg(m));
    detail::require_evidence(den, "pin unreachable from the current state");
    const double stop = detail::length_integral([&](double r) { return k(r, t, x); }, lm, t, u, detail::outer_cfg(m));
    double total = G_(z, z) * stop;
    if (lm.cdf(u) < 1.0) {
        PosteriorLaw carrier;
        carrier.continuous = detail::state_domain(m, t, u, x);
        carrier.continuous.features.push_back(Feature{x + (u - t) / (u - t + 1.0) * (z - x), m.width(u - t)});
        carrier.continuous.breaks.push_back(z);
        if (m.is_subordinator()) carrier.continuous.hi = z;
        const QuadratureConfig inner = detail::inner_cfg(m);
        total += carrier.integrate_continuous(
            [&](double y, double a, double dl, double b, double dr) {
                const double f = marginal_density(m, u - t, a == x ? dl : y - x);
                if (f == 0.0) return 0.0;
                const double dz = b == z ? dr : z - y;
                const double w = detail::length_integral(
                    [&](double r) { return detail::pin_kernel_d(m, r, u, dz, z); }, lm, u, INFINITY, inner);
                return w == 0.0 ? 0.0 : f * w * G_(z, y);
            },
            detail::outer_cfg(m));
    }
    return total / den;
}

}  // namespace levybridge

#endif
