#ifndef LEVYBRIDGE_MEASURES_HPP
#define LEVYBRIDGE_MEASURES_HPP

// The pinning law P_Z as atoms + Cantor + density, and the length law P_tau
// as atoms + density, with integration, sampling and the Z-membership test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/exponential.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "levybridge/density_kernels.hpp"
#include "levybridge/errors.hpp"
#include "levybridge/quadrature.hpp"
#include "levybridge/rng.hpp"

namespace levybridge {

struct Atom {
    double location;
    double prob;
};

namespace detail {

inline double sum_probs(std::span<const Atom> atoms) {
    double s = 0.0;
    for (const Atom& a : atoms) s += a.prob;
    return s;
}

inline void check_atoms(std::span<const Atom> atoms, const char* what) {
    for (const Atom& a : atoms)
        if (!std::isfinite(a.location) || !(a.prob >= 0.0) || !std::isfinite(a.prob)) {
            std::ostringstream os;
            os << what << ": atom locations must be finite and probabilities nonnegative";
            throw ValidationError(os.str());
        }
}

inline double standard_normal_quantile(double u) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); }

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// 3^k as an exact integer (k <= 33 keeps it below 2^53).
inline std::uint64_t pow3(int k) {
    std::uint64_t p = 1;
    for (int i = 0; i < k; ++i) p *= 3;
    return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Absolutely continuous part f_Z.

struct AcDensity {
    enum class Kind { None, Uniform, Normal, Table };
    Kind kind = Kind::None;
    double p1 = 0.0;  // Uniform: lower end; Normal: mean
    double p2 = 1.0;  // Uniform: upper end; Normal: standard deviation
    std::vector<double> xs, ys;  // Table nodes; ys normalised on construction
    std::vector<double> cum;     // Table cumulative mass at nodes

    static AcDensity uniform(double lo, double hi) {
        AcDensity d;
        d.kind = Kind::Uniform;
        d.p1 = lo;
        d.p2 = hi;
        d.validate();
        return d;
    }
    static AcDensity normal(double mean, double sd) {
        AcDensity d;
        d.kind = Kind::Normal;
        d.p1 = mean;
        d.p2 = sd;
        d.validate();
        return d;
    }
    /// Piecewise-linear density through (xs[i], ys[i]); rescaled to unit mass.
    static AcDensity table(std::vector<double> xs, std::vector<double> ys) {
        AcDensity d;
        d.kind = Kind::Table;
        d.xs = std::move(xs);
        d.ys = std::move(ys);
        if (d.xs.size() != d.ys.size() || d.xs.size() < 2) throw ValidationError("density table needs >= 2 nodes");
        for (std::size_t i = 0; i < d.xs.size(); ++i) {
            if (!std::isfinite(d.xs[i]) || !(d.ys[i] >= 0.0) || !std::isfinite(d.ys[i]))
                throw ValidationError("density table values must be finite, heights nonnegative");
            if (i > 0 && !(d.xs[i] > d.xs[i - 1])) throw ValidationError("density table nodes must increase");
        }
        d.cum.assign(d.xs.size(), 0.0);
        for (std::size_t i = 1; i < d.xs.size(); ++i)
            d.cum[i] = d.cum[i - 1] + 0.5 * (d.ys[i] + d.ys[i - 1]) * (d.xs[i] - d.xs[i - 1]);
        const double mass = d.cum.back();
        if (!(mass > 0.0)) throw ValidationError("density table has zero mass");
        for (double& y : d.ys) y /= mass;
        for (double& c : d.cum) c /= mass;
        return d;
    }

    void validate() const {
        switch (kind) {
            case Kind::None: return;
            case Kind::Uniform:
                if (!(p1 < p2) || !std::isfinite(p1) || !std::isfinite(p2))
                    throw ValidationError("uniform density needs finite lo < hi");
                return;
            case Kind::Normal:
                if (!std::isfinite(p1) || !(p2 > 0.0) || !std::isfinite(p2))
                    throw ValidationError("normal density needs finite mean and sd > 0");
                return;
            case Kind::Table:
                if (xs.size() < 2 || xs.size() != ys.size() || cum.size() != xs.size())
                    throw ValidationError("density table is malformed");
                if (std::abs(cum.back() - 1.0) > 1e-8) throw ValidationError("density table mass differs from 1");
                return;
        }
    }

    double lower() const {
        switch (kind) {
            case Kind::Uniform: return p1;
            case Kind::Table: return xs.front();
            default: return -INFINITY;
        }
    }
    double upper() const {
        switch (kind) {
            case Kind::Uniform: return p2;
            case Kind::Table: return xs.back();
            default: return INFINITY;
        }
    }

    double pdf(double x) const {
        switch (kind) {
            case Kind::None: return 0.0;
            case Kind::Uniform: return (x >= p1 && x <= p2) ? 1.0 / (p2 - p1) : 0.0;
            case Kind::Normal: {
                const double d = (x - p1) / p2;
                return std::exp(-0.5 * d * d) / (p2 * std::sqrt(2.0 * std::numbers::pi));
            }
            case Kind::Table: {
                if (x < xs.front() || x > xs.back()) return 0.0;
                const auto it = std::upper_bound(xs.begin(), xs.end(), x);
                const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - xs.begin()), xs.size() - 1);
                const std::size_t j = i == 0 ? 0 : i - 1;
                if (i == j) return ys[0];
                const double w = (x - xs[j]) / (xs[i] - xs[j]);
                return ys[j] + w * (ys[i] - ys[j]);
            }
        }
        return 0.0;
    }

    /// Breakpoints describing where the density has kinks or its bulk.
    std::vector<Feature> features() const {
        std::vector<Feature> f;
        switch (kind) {
            case Kind::Normal: f.push_back({p1, p2}); break;
            case Kind::Table:
                for (double x : xs) f.push_back({x, 0.0});
                break;
            default: break;
        }
        return f;
    }

    double sample(RngStream& rng) const {
        const double u = rng.uniform();
        switch (kind) {
            case Kind::None: throw PreconditionViolation("no density part to sample");
            case Kind::Uniform: return p1 + (p2 - p1) * u;
            case Kind::Normal: return p1 + p2 * detail::standard_normal_quantile(u);
            case Kind::Table: {
                const auto it = std::upper_bound(cum.begin(), cum.end(), u);
                std::size_t i = static_cast<std::size_t>(it - cum.begin());
                i = std::clamp<std::size_t>(i, 1, xs.size() - 1);
                const double x0 = xs[i - 1], h = xs[i] - x0;
                const double y0 = ys[i - 1], y1 = ys[i];
                const double need = u - cum[i - 1];
                // Solve y0 d + (y1 - y0) d^2 / (2h) = need for d in [0,h].
                const double a = 0.5 * (y1 - y0) / h;
                double d;
                if (std::abs(a) < 1e-14 * std::max(1.0, y0)) {
                    d = y0 > 0.0 ? need / y0 : 0.0;
                } else {
                    const double disc = std::max(0.0, y0 * y0 + 4.0 * a * need);
                    d = 2.0 * need / (y0 + std::sqrt(disc));
                }
                return x0 + std::clamp(d, 0.0, h);
            }
        }
        return 0.0;
    }
};

struct CantorSpec {
    double lo = 0.0;
    double hi = 1.0;
    int depth = 20;  // quadrature depth for integrate_pinning

    void validate() const {
        if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) throw ValidationError("cantor support needs lo < hi");
        if (depth < 1 || depth > 33) throw ValidationError("cantor depth must lie in [1,33]");
    }
};

/// Digits of the Cantor lattice used by the sampler and the membership test.
inline constexpr int kCantorSampleDigits = 30;

/// Point of the depth-k ternary lattice: lo + (hi - lo) * N / 3^k.
inline double cantor_lattice_point(double lo, double hi, std::uint64_t n, int k) {
    return lo + (hi - lo) * (static_cast<double>(n) / static_cast<double>(detail::pow3(k)));
}

struct CantorResult {
    double value = 0.0;
    double error_bound = NAN;  // Lipschitz bound times (hi - lo) 3^-depth, when supplied
};

/// Depth-d self-similar approximation: equal weights at the 2^d left
/// endpoints of the surviving middle-thirds intervals.
template <class G>
CantorResult cantor_integrate(G&& g, int depth, double lo, double hi, double lipschitz = NAN) {
    if (depth < 1 || depth > 33) throw PreconditionViolation("cantor depth must lie in [1,33]");
    // Pairwise recursion keeps the summation order fixed and the error O(log n).
    struct Rec {
        G& g;
        double lo, hi;
        int depth;
        double go(std::uint64_t n, int level) {
            if (level == depth) return g(cantor_lattice_point(lo, hi, n, depth));
            return 0.5 * (go(3 * n, level + 1) + go(3 * n + 2, level + 1));
        }
    } rec{g, lo, hi, depth};
    CantorResult r;
    r.value = rec.go(0, 0);
    if (std::isfinite(lipschitz)) r.error_bound = lipschitz * (hi - lo) * std::pow(3.0, -depth);
    return r;
}

// ---------------------------------------------------------------------------
// P_Z

struct PinningMeasure {
    double a_sd = 1.0;
    double a_sc = 0.0;
    double a_ac = 0.0;
    std::vector<Atom> atoms;
    std::optional<CantorSpec> cantor;
    AcDensity ac;

    void validate() const {
        for (double w : {a_sd, a_sc, a_ac})
            if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("pinning weights must be nonnegative");
        if (std::abs(a_sd + a_sc + a_ac - 1.0) > 1e-12) throw ValidationError("pinning weights must sum to 1");
        if (a_sd > 0.0) {
            if (atoms.empty()) throw ValidationError("a_sd > 0 needs atoms");
            detail::check_atoms(atoms, "pinning");
            if (std::abs(detail::sum_probs(atoms) - 1.0) > 1e-12)
                throw ValidationError("pinning atom probabilities must sum to 1");
        }
        if (a_sc > 0.0) {
            if (!cantor) throw ValidationError("a_sc > 0 needs a cantor part");
            cantor->validate();
        }
        if (a_ac > 0.0) {
            if (ac.kind == AcDensity::Kind::None) throw ValidationError("a_ac > 0 needs a density part");
            ac.validate();
        }
    }

    static PinningMeasure atoms_only(std::vector<Atom> a) {
        PinningMeasure p;
        p.a_sd = 1.0;
        p.atoms = std::move(a);
        p.validate();
        return p;
    }
    static PinningMeasure density_only(AcDensity d) {
        PinningMeasure p;
        p.a_sd = 0.0;
        p.a_ac = 1.0;
        p.ac = std::move(d);
        p.validate();
        return p;
    }
    static PinningMeasure cantor_only(CantorSpec c) {
        PinningMeasure p;
        p.a_sd = 0.0;
        p.a_sc = 1.0;
        p.cantor = c;
        p.validate();
        return p;
    }

    /// Integral of g against the density part f_Z only (no a_ac factor).
    /// `singular_points` split the support and are treated as integrable
    /// singular edges of g.
    template <class G>
    double integrate_ac(G&& g, const QuadratureConfig& cfg, std::span<const Feature> extra = {},
                        std::span<const double> singular_points = {}) const {
        const double lo = ac.lower(), hi = ac.upper();
        std::vector<Feature> feats = ac.features();
        feats.insert(feats.end(), extra.begin(), extra.end());
        std::vector<double> cuts{lo};
        for (double s : singular_points)
            if (s > lo && s < hi) cuts.push_back(s);
        cuts.push_back(hi);
        std::sort(cuts.begin() + 1, cuts.end() - 1);
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        auto is_singular = [&](double x) {
            return std::find(singular_points.begin(), singular_points.end(), x) != singular_points.end();
        };
        auto integrand = [&](double z) { return g(z) * ac.pdf(z); };
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            total += integrate(integrand, cuts[i], cuts[i + 1], cfg, feats,
                               EdgeSingularity{is_singular(cuts[i]), is_singular(cuts[i + 1])});
        return total;
    }

    /// Cantor-part integral at the configured depth.
    template <class G>
    double integrate_cantor(G&& g, int depth_override = 0) const {
        const int d = depth_override > 0 ? depth_override : cantor->depth;
        return cantor_integrate(g, d, cantor->lo, cantor->hi).value;
    }
};

/// a_sd sum p_i g(z_i) + a_sc int g dCantor + a_ac int g f_Z.
template <class G>
double integrate_pinning(G&& g, const PinningMeasure& pm, const QuadratureConfig& cfg,
                         std::span<const Feature> extra = {}, std::span<const double> singular_points = {}) {
    double total = 0.0;
    if (pm.a_sd > 0.0) {
        double s = 0.0;
        for (const Atom& a : pm.atoms) s += a.prob * g(a.location);
        total += pm.a_sd * s;
    }
    if (pm.a_sc > 0.0) total += pm.a_sc * pm.integrate_cantor(g);
    if (pm.a_ac > 0.0) total += pm.a_ac * pm.integrate_ac(g, cfg, extra, singular_points);
    return total;
}

inline double sample_pinning(const PinningMeasure& pm, RngStream& rng) {
    const double u = rng.uniform();
    if (u < pm.a_sd || (pm.a_sc == 0.0 && pm.a_ac == 0.0)) {
        const double v = rng.uniform();
        double acc = 0.0;
        for (const Atom& a : pm.atoms) {
            acc += a.prob;
            if (v < acc) return a.location;
        }
        for (auto it = pm.atoms.rbegin(); it != pm.atoms.rend(); ++it)
            if (it->prob > 0.0) return it->location;
        return pm.atoms.back().location;
    }
    if (u < pm.a_sd + pm.a_sc || pm.a_ac == 0.0) {
        std::uint64_t n = 0;
        std::uint64_t bits = rng();
        for (int i = 0; i < kCantorSampleDigits; ++i) {
            n = 3 * n + ((bits >> i) & 1ULL) * 2;
        }
        return cantor_lattice_point(pm.cantor->lo, pm.cantor->hi, n, kCantorSampleDigits);
    }
    return pm.ac.sample(rng);
}

/// Decides x in the singular support: atoms by exact equality, the Cantor
/// part by exact membership in the sampler's ternary lattice.
class MembershipOracle {
  public:
    explicit MembershipOracle(const PinningMeasure& pm) {
        if (pm.a_sd > 0.0)
            for (const Atom& a : pm.atoms)
                if (a.prob > 0.0) atoms_.push_back(a.location);
        std::sort(atoms_.begin(), atoms_.end());
        if (pm.a_sc > 0.0 && pm.cantor) cantor_ = *pm.cantor;
    }

    bool is_atom(double x) const { return std::binary_search(atoms_.begin(), atoms_.end(), x); }

    bool in_cantor(double x) const {
        if (!cantor_ || !std::isfinite(x)) return false;
        const double lo = cantor_->lo, hi = cantor_->hi;
        if (x < lo || x > hi) return false;
        const std::uint64_t full = detail::pow3(kCantorSampleDigits);
        const double y = (x - lo) / (hi - lo) * static_cast<double>(full);
        const auto n0 = static_cast<std::int64_t>(std::llround(y));
        for (std::int64_t n = n0 - 2; n <= n0 + 2; ++n) {
            if (n < 0 || n >= static_cast<std::int64_t>(full)) continue;
            if (!ternary_digits_avoid_one(static_cast<std::uint64_t>(n))) continue;
            if (cantor_lattice_point(lo, hi, static_cast<std::uint64_t>(n), kCantorSampleDigits) == x) return true;
        }
        return false;
    }

    bool contains(double x) const { return is_atom(x) || in_cantor(x); }

  private:
    static bool ternary_digits_avoid_one(std::uint64_t n) {
        for (int i = 0; i < kCantorSampleDigits; ++i) {
            if (n % 3 == 1) return false;
            n /= 3;
        }
        return true;
    }

    std::vector<double> atoms_;
    std::optional<CantorSpec> cantor_;
};

// ---------------------------------------------------------------------------
// P_tau

struct LengthDensity {
    enum class Kind { None, Exponential, Uniform, Gamma };
    Kind kind = Kind::None;
    double p1 = 1.0;  // Exponential: rate; Uniform: lower end; Gamma: shape
    double p2 = 1.0;  // Uniform: upper end; Gamma: scale

    void validate() const {
        switch (kind) {
            case Kind::None: return;
            case Kind::Exponential:
                if (!(p1 > 0.0) || !std::isfinite(p1)) throw ValidationError("exponential length needs rate > 0");
                return;
            case Kind::Uniform:
                if (!(p1 >= 0.0) || !(p1 < p2) || !std::isfinite(p2))
                    throw ValidationError("uniform length needs 0 <= lo < hi");
                return;
            case Kind::Gamma:
                if (!(p1 > 0.0) || !(p2 > 0.0) || !std::isfinite(p1) || !std::isfinite(p2))
                    throw ValidationError("gamma length needs shape > 0 and scale > 0");
                return;
        }
    }

    double lower() const { return kind == Kind::Uniform ? p1 : 0.0; }
    double upper() const { return kind == Kind::Uniform ? p2 : INFINITY; }

    double pdf(double r) const {
        switch (kind) {
            case Kind::None: return 0.0;
            case Kind::Exponential: return r < 0.0 ? 0.0 : p1 * std::exp(-p1 * r);
            case Kind::Uniform: return (r >= p1 && r <= p2) ? 1.0 / (p2 - p1) : 0.0;
            case Kind::Gamma:
                if (!(r > 0.0)) return 0.0;
                return boost::math::pdf(boost::math::gamma_distribution<>(p1, p2), r);
        }
        return 0.0;
    }

    double cdf(double r) const {
        switch (kind) {
            case Kind::None: return 0.0;
            case Kind::Exponential: return r <= 0.0 ? 0.0 : -std::expm1(-p1 * r);
            case Kind::Uniform: return r <= p1 ? 0.0 : r >= p2 ? 1.0 : (r - p1) / (p2 - p1);
            case Kind::Gamma:
                if (!(r > 0.0)) return 0.0;
                if (!std::isfinite(r)) return 1.0;
                return boost::math::cdf(boost::math::gamma_distribution<>(p1, p2), r);
        }
        return 0.0;
    }

    double sample(RngStream& rng) const {
        const double u = rng.uniform();
        switch (kind) {
            case Kind::None: throw PreconditionViolation("no density part to sample");
            case Kind::Exponential: return -std::log(u) / p1;
            case Kind::Uniform: return p1 + (p2 - p1) * u;
            case Kind::Gamma: return boost::math::quantile(boost::math::gamma_distribution<>(p1, p2), u);
        }
        return 0.0;
    }

    std::vector<Feature> features() const {
        switch (kind) {
            case Kind::Exponential: return {{1.0 / p1, 1.0 / p1}};
            case Kind::Gamma: return {{p1 * p2, std::sqrt(p1) * p2}};
            default: return {};
        }
    }
};

struct LengthMeasure {
    std::vector<Atom> atoms;  // absolute probabilities
    double density_weight = 0.0;
    LengthDensity density;

    void validate() const {
        detail::check_atoms(atoms, "length");
        for (const Atom& a : atoms)
            if (!(a.location > 0.0)) throw ValidationError("length atoms must be strictly positive");
        if (!(density_weight >= 0.0)) throw ValidationError("length density weight must be nonnegative");
        if (density_weight > 0.0) {
            if (density.kind == LengthDensity::Kind::None) throw ValidationError("density weight > 0 needs a density");
            density.validate();
        }
        if (std::abs(detail::sum_probs(atoms) + density_weight - 1.0) > 1e-12)
            throw ValidationError("length measure must have total mass 1");
    }

    static LengthMeasure atoms_only(std::vector<Atom> a) {
        LengthMeasure m;
        m.atoms = std::move(a);
        m.validate();
        return m;
    }
    static LengthMeasure density_only(LengthDensity d) {
        LengthMeasure m;
        m.density_weight = 1.0;
        m.density = d;
        m.validate();
        return m;
    }

    /// F_tau(t) = P(tau <= t), right-continuous.
    double cdf(double t) const {
        double s = 0.0;
        for (const Atom& a : atoms)
            if (a.location <= t) s += a.prob;
        if (density_weight > 0.0) s += density_weight * density.cdf(t);
        return s;
    }

    /// P(a < tau <= b).
    double mass(double a, double b) const {
        if (!(b > a)) return 0.0;
        double s = 0.0;
        for (const Atom& at : atoms)
            if (at.location > a && at.location <= b) s += at.prob;
        if (density_weight > 0.0) s += density_weight * (density.cdf(b) - density.cdf(a));
        return s;
    }
};

/// int_{(a,b]} h(r) P_tau(dr).
template <class H>
double integrate_length(H&& h, const LengthMeasure& lm, double a, double b, const QuadratureConfig& cfg,
                        std::span<const Feature> extra = {}) {
    if (!(b > a)) throw PreconditionViolation("length window (a,b] must be nonempty");
    double total = 0.0;
    for (const Atom& at : lm.atoms)
        if (at.location > a && at.location <= b && at.prob > 0.0) total += at.prob * h(at.location);
    if (lm.density_weight > 0.0) {
        const double lo = std::max(a, lm.density.lower());
        const double hi = std::min(b, lm.density.upper());
        if (hi > lo) {
            std::vector<Feature> feats = lm.density.features();
            feats.insert(feats.end(), extra.begin(), extra.end());
            total += lm.density_weight *
                     integrate([&](double r) { return h(r) * lm.density.pdf(r); }, lo, hi, cfg, feats);
        }
    }
    return total;
}

inline double sample_length(const LengthMeasure& lm, RngStream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const Atom& a : lm.atoms) {
        acc += a.prob;
        if (u < acc) return a.location;
    }
    if (lm.density_weight > 0.0) return lm.density.sample(rng);
    return lm.atoms.back().location;
}

// ---------------------------------------------------------------------------
// Pair validation: f_r(z) must be positive and finite P_(tau,Z)-a.e.

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;
    void add(std::string v) {
        ok = false;
        violations.push_back(std::move(v));
    }
};

inline ValidationReport validate_pair(const LevyModel& model, const LengthMeasure& lm, const PinningMeasure& pm) {
    ValidationReport rep;
    auto guarded = [&](const char* what, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            rep.add(std::string(what) + ": " + e.what());
        }
    };
    guarded("model", [&] { model.validate(); });
    guarded("length", [&] { lm.validate(); });
    guarded("pinning", [&] { pm.validate(); });
    if (!rep.ok) return rep;

    if (model.is_subordinator()) {
        if (pm.a_sd > 0.0)
            for (const Atom& a : pm.atoms)
                if (a.prob > 0.0 && !(a.location > 0.0)) {
                    std::ostringstream os;
                    os.precision(17);
                    os << "pinning atom z=" << a.location << " lies outside (0,inf), the support of a subordinator";
                    rep.add(os.str());
                }
        if (pm.a_sc > 0.0 && !(pm.cantor->lo > 0.0))
            rep.add("cantor part must lie in (0,inf) for a subordinator");
        if (pm.a_ac > 0.0) {
            if (pm.ac.kind == AcDensity::Kind::Normal)
                rep.add("normal pinning density has mass on (-inf,0], outside a subordinator's support");
            else if (pm.ac.lower() < 0.0)
                rep.add("pinning density support must lie in [0,inf) for a subordinator");
        }
    }

    // Pointwise check on atom pairs and on representative density-part points.
    std::vector<double> rs;
    for (const Atom& a : lm.atoms)
        if (a.prob > 0.0) rs.push_back(a.location);
    if (lm.density_weight > 0.0)
        for (double q : {0.001, 0.25, 0.5, 0.75, 0.999}) {
            double lo = lm.density.lower(), hi = std::isfinite(lm.density.upper()) ? lm.density.upper() : 1.0;
            while (lm.density.cdf(hi) < q) hi *= 2.0;
            for (int i = 0; i < 80; ++i) {
                const double mid = 0.5 * (lo + hi);
                (lm.density.cdf(mid) < q ? lo : hi) = mid;
            }
            if (hi > 0.0) rs.push_back(hi);
        }
    std::vector<double> zs;
    if (pm.a_sd > 0.0)
        for (const Atom& a : pm.atoms)
            if (a.prob > 0.0) zs.push_back(a.location);
    if (pm.a_sc > 0.0) {
        zs.push_back(pm.cantor->lo);
        zs.push_back(pm.cantor->hi);
    }
    if (pm.a_ac > 0.0 && pm.ac.kind == AcDensity::Kind::Uniform) zs.push_back(0.5 * (pm.ac.p1 + pm.ac.p2));
    if (pm.a_ac > 0.0 && pm.ac.kind == AcDensity::Kind::Normal) zs.push_back(pm.ac.p1);
    for (double r : rs)
        for (double z : zs) {
            if (model.is_subordinator() && !(z > 0.0)) continue;  // already reported
            guarded("density", [&] {
                const double f = marginal_density(model, r, z);
                if (!(f > 0.0) || !std::isfinite(f)) {
                    std::ostringstream os;
                    os.precision(17);
                    os << "f_r(z) = " << f << " at r=" << r << ", z=" << z << " is not in (0,inf)";
                    rep.add(os.str());
                }
            });
        }
    return rep;
}

}  // namespace levybridge

#endif
