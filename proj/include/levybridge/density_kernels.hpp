#ifndef LEVYBRIDGE_DENSITY_KERNELS_HPP
#define LEVYBRIDGE_DENSITY_KERNELS_HPP

// Marginal densities f_t of the three Lévy families and the bridge kernels
// built from them: the likelihood ratio f_{r-t}(z-x)/f_r(z), the bridge
// transition density and the finite-dimensional bridge density.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "levybridge/errors.hpp"
#include "levybridge/quadrature.hpp"

namespace levybridge {

enum class Family { BrownianDrift, GammaSubordinator, SymmetricStable };

inline std::string to_string(Family f) {
    switch (f) {
        case Family::BrownianDrift: return "brownian";
        case Family::GammaSubordinator: return "gamma";
        case Family::SymmetricStable: return "stable";
    }
    return "?";
}

struct LevyModel {
    Family family = Family::BrownianDrift;
    double sigma = 1.0;        // Brownian volatility
    double drift = 0.0;        // Brownian drift b
    double gamma_m = 1.0;      // Gamma shape rate: gamma_t ~ Gamma(m t, theta)
    double gamma_theta = 1.0;  // Gamma scale
    double alpha = 1.5;        // stable index
    QuadratureConfig quad{};

    static LevyModel brownian(double sigma, double drift = 0.0) {
        LevyModel m;
        m.family = Family::BrownianDrift;
        m.sigma = sigma;
        m.drift = drift;
        m.validate();
        return m;
    }
    static LevyModel gamma(double shape_rate, double scale) {
        LevyModel m;
        m.family = Family::GammaSubordinator;
        m.gamma_m = shape_rate;
        m.gamma_theta = scale;
        m.validate();
        return m;
    }
    static LevyModel stable(double alpha) {
        LevyModel m;
        m.family = Family::SymmetricStable;
        m.alpha = alpha;
        m.validate();
        return m;
    }

    void validate() const {
        quad.validate();
        switch (family) {
            case Family::BrownianDrift:
                if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(drift))
                    throw ValidationError("brownian model needs sigma > 0 and finite drift");
                break;
            case Family::GammaSubordinator:
                if (!(gamma_m > 0.0) || !(gamma_theta > 0.0) || !std::isfinite(gamma_m) || !std::isfinite(gamma_theta))
                    throw ValidationError("gamma model needs m > 0 and theta > 0");
                break;
            case Family::SymmetricStable:
                // alpha = 1 and alpha = 2 are admitted as Cauchy and Gaussian cross-checks.
                if (!(alpha > 0.0 && alpha <= 2.0)) throw ValidationError("stable index must lie in (0,2]");
                break;
        }
    }

    bool is_subordinator() const { return family == Family::GammaSubordinator; }

    /// Centre of the law of X_t.
    double location(double t) const {
        switch (family) {
            case Family::BrownianDrift: return drift * t;
            case Family::GammaSubordinator: return gamma_m * t * gamma_theta;
            case Family::SymmetricStable: return 0.0;
        }
        return 0.0;
    }

    /// Natural width of the law of X_t (standard deviation, or t^{1/alpha}).
    double width(double t) const {
        switch (family) {
            case Family::BrownianDrift: return sigma * std::sqrt(t);
            case Family::GammaSubordinator: return gamma_theta * std::sqrt(gamma_m * t);
            case Family::SymmetricStable: return std::pow(t, 1.0 / alpha);
        }
        return 1.0;
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        switch (family) {
            case Family::BrownianDrift: os << "brownian(sigma=" << sigma << ",b=" << drift << ")"; break;
            case Family::GammaSubordinator: os << "gamma(m=" << gamma_m << ",theta=" << gamma_theta << ")"; break;
            case Family::SymmetricStable: os << "stable(alpha=" << alpha << ")"; break;
        }
        return os.str();
    }
};

namespace detail {

inline void require_positive_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        std::ostringstream os;
        os << "time must be positive and finite, got " << t;
        throw PreconditionViolation(os.str());
    }
}

inline void require_stable_index(double alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw ValidationError("stable index must lie in (0,2]");
}

/// Scaled abscissa |x| t^{-1/alpha} beyond which the tail series replaces
/// Fourier inversion. For alpha < 1 the series converges everywhere, so the
/// switch moves inward when the panel count at s = 10 would be excessive.
inline double stable_series_switch(double alpha, double truncation) {
    if (alpha >= 1.0) return 50.0;
    const double panels_per_unit = std::pow(std::log(1.0 / truncation), 1.0 / alpha) / std::numbers::pi;
    return std::clamp(3000.0 / panels_per_unit, 2.0, 10.0);
}

/// Log-magnitudes and signs of the tail-series coefficients
/// Gamma(k alpha + 1)/k! sin(k pi alpha / 2), k = 1..K.
struct StableSeriesCoefficients {
    double alpha = 0.0;
    std::vector<double> log_mag;
    std::vector<int> sign;

    explicit StableSeriesCoefficients(double a, int kmax = 400) : alpha(a) {
        log_mag.resize(kmax + 1, -INFINITY);
        sign.resize(kmax + 1, 0);
        for (int k = 1; k <= kmax; ++k) {
            // Argument reduced mod 4 so sin(k pi a / 2) vanishes exactly where it should.
            const double arg = std::fmod(k * a, 4.0);
            if (arg == 0.0 || arg == 2.0) continue;
            const double sn = std::sin(arg * std::numbers::pi / 2.0);
            log_mag[k] = boost::math::lgamma(k * a + 1.0) - boost::math::lgamma(k + 1.0) + std::log(std::abs(sn));
            sign[k] = ((k + 1) % 2 == 0 ? 1 : -1) * (sn > 0.0 ? 1 : -1);
        }
    }

    /// log f_t(x) from the tail series, |x| > 0. Throws when the series
    /// cannot deliver about ten significant digits.
    double log_density(double t, double ax) const {
        const double lt = std::log(t);
        const double lx = std::log(ax);
        const int kmax = static_cast<int>(log_mag.size()) - 1;
        auto log_term = [&](int k) { return log_mag[k] + k * lt - (k * alpha + 1.0) * lx; };
        int first = 1;
        while (first <= kmax && sign[first] == 0) ++first;
        if (first > kmax) return -INFINITY;
        const double l0 = log_term(first);
        double sum = sign[first];
        double prev = 0.0;
        bool have_prev = false;
        double last_mag = 1.0;
        for (int k = first + 1; k <= kmax; ++k) {
            if (sign[k] == 0) continue;
            const double mag = std::exp(log_term(k) - l0);
            if (alpha > 1.0 && have_prev && mag > prev) break;  // asymptotic: stop at the smallest term
            sum += sign[k] * mag;
            last_mag = mag;
            prev = mag;
            have_prev = true;
            if (mag < 1e-17 * std::abs(sum)) {
                last_mag = 0.0;
                break;
            }
        }
        if (!(sum > 0.0) || last_mag > 1e-10 * std::abs(sum)) {
            std::ostringstream os;
            os << "stable tail series did not converge (alpha=" << alpha << ", t=" << t << ", x=" << ax << ")";
            throw NumericalFailure(os.str());
        }
        return l0 - std::log(std::numbers::pi) + std::log(sum);
    }
};

inline std::shared_ptr<const StableSeriesCoefficients> stable_series(double alpha) {
    static std::mutex mu;
    static std::map<double, std::shared_ptr<const StableSeriesCoefficients>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(alpha);
    if (it != cache.end()) return it->second;
    auto p = std::make_shared<const StableSeriesCoefficients>(alpha);
    cache.emplace(alpha, p);
    return p;
}

}  // namespace detail

/// Upper bound Gamma(1 + 1/alpha) t^{-1/alpha} / pi on the symmetric stable density.
inline double stable_density_bound(double alpha, double t) {
    return std::tgamma(1.0 + 1.0 / alpha) * std::pow(t, -1.0 / alpha) / std::numbers::pi;
}

/// (1/pi) int_0^inf cos(x y) exp(-t y^alpha) dy by adaptive quadrature, with
/// the integrand split at the zeros of cos(x y) when it oscillates.
inline double stable_density_fourier(double alpha, double t, double x, const QuadratureConfig& cfg) {
    detail::require_stable_index(alpha);
    detail::require_positive_time(t);
    cfg.validate();
    if (!std::isfinite(x)) return 0.0;
    const double ax = std::abs(x);  // evenness in x is exact
    const double unit = std::pow(t, -1.0 / alpha);
    const double ymax = std::pow(std::log(1.0 / cfg.truncation) / t, 1.0 / alpha);

    QuadratureConfig local = cfg;
    local.abs_tol = cfg.abs_tol * unit;  // scale-free stopping rule

    std::vector<double> bounds{0.0};
    if (ax * ymax > 2.0 * std::numbers::pi) {
        const double step = std::numbers::pi / ax;
        for (long k = 0;; ++k) {
            const double z = (static_cast<double>(k) + 0.5) * step;
            if (z >= ymax) break;
            bounds.push_back(z);
        }
        local.max_subdivisions = cfg.max_subdivisions + static_cast<int>(bounds.size());
    } else {
        for (double c : {0.01, 0.1, 1.0, 4.0})
            if (c * unit < ymax) bounds.push_back(c * unit);
    }
    bounds.push_back(ymax);

    auto integrand = [&](double y) { return std::cos(ax * y) * std::exp(-t * std::pow(y, alpha)); };
    const QuadratureResult res = integrate_panels(integrand, bounds, local);
    const double value = res.value / std::numbers::pi;
    const double err = res.error / std::numbers::pi;

    const double bound = stable_density_bound(alpha, t);
    if (value > bound * (1.0 + 1e-9) + err) {
        std::ostringstream os;
        os << "stable density " << value << " exceeds its upper bound " << bound;
        throw NumericalFailure(os.str());
    }
    if (value < 0.0) {
        if (value < -std::max(10.0 * err, 1e-10 * bound)) {
            std::ostringstream os;
            os << "stable density quadrature returned " << value << " at x=" << x;
            throw NumericalFailure(os.str());
        }
        return 0.0;
    }
    return value;
}

/// Symmetric stable density: Fourier inversion for moderate |x| t^{-1/alpha},
/// tail series beyond. For alpha = 2 the far tail is below 1e-270 and is
/// returned as an exact zero.
inline double stable_density(double alpha, double t, double x, const QuadratureConfig& cfg) {
    detail::require_stable_index(alpha);
    detail::require_positive_time(t);
    const double ax = std::abs(x);
    const double s = ax * std::pow(t, -1.0 / alpha);
    if (s <= detail::stable_series_switch(alpha, cfg.truncation)) return stable_density_fourier(alpha, t, x, cfg);
    if (alpha == 2.0) return 0.0;
    return std::exp(detail::stable_series(alpha)->log_density(t, ax));
}

inline double stable_log_density(double alpha, double t, double x, const QuadratureConfig& cfg) {
    detail::require_stable_index(alpha);
    detail::require_positive_time(t);
    const double ax = std::abs(x);
    const double s = ax * std::pow(t, -1.0 / alpha);
    if (s <= detail::stable_series_switch(alpha, cfg.truncation)) {
        const double v = stable_density_fourier(alpha, t, x, cfg);
        return v > 0.0 ? std::log(v) : -INFINITY;
    }
    if (alpha == 2.0) return -INFINITY;
    return detail::stable_series(alpha)->log_density(t, ax);
}

inline double marginal_density(const LevyModel& m, double t, double x) {
    detail::require_positive_time(t);
    switch (m.family) {
        case Family::BrownianDrift: {
            const double var = m.sigma * m.sigma * t;
            const double d = x - m.drift * t;
            return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
        }
        case Family::GammaSubordinator: {
            if (!(x > 0.0)) return 0.0;
            const double k = m.gamma_m * t;
            return std::exp((k - 1.0) * std::log(x) - x / m.gamma_theta - boost::math::lgamma(k) -
                            k * std::log(m.gamma_theta));
        }
        case Family::SymmetricStable: return stable_density(m.alpha, t, x, m.quad);
    }
    return 0.0;
}

inline double log_marginal_density(const LevyModel& m, double t, double x) {
    detail::require_positive_time(t);
    switch (m.family) {
        case Family::BrownianDrift: {
            const double var = m.sigma * m.sigma * t;
            const double d = x - m.drift * t;
            return -0.5 * d * d / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
        }
        case Family::GammaSubordinator: {
            if (!(x > 0.0)) return -INFINITY;
            const double k = m.gamma_m * t;
            return (k - 1.0) * std::log(x) - x / m.gamma_theta - boost::math::lgamma(k) - k * std::log(m.gamma_theta);
        }
        case Family::SymmetricStable: return stable_log_density(m.alpha, t, x, m.quad);
    }
    return -INFINITY;
}

// ---------------------------------------------------------------------------
// Interpolated stable densities for sampler hot paths.

/// f_1 tabulated on s in [0, s_switch] at nodes uniform in asinh(s), with
/// four-point Lagrange interpolation; the tail series takes over beyond.
class StableTable {
  public:
    StableTable(double alpha, const QuadratureConfig& cfg, int nodes = 2048)
        : alpha_(alpha), series_(detail::stable_series(alpha)) {
        detail::require_stable_index(alpha);
        s_switch_ = detail::stable_series_switch(alpha, cfg.truncation);
        umax_ = std::asinh(s_switch_);
        du_ = umax_ / nodes;
        values_.resize(nodes + 1);
        for (int i = 0; i <= nodes; ++i) values_[i] = stable_density_fourier(alpha, 1.0, std::sinh(i * du_), cfg);
    }

    double alpha() const { return alpha_; }

    /// f_t(x).
    double density(double t, double x) const {
        const double scale = std::pow(t, -1.0 / alpha_);
        const double s = std::abs(x) * scale;
        if (s <= s_switch_) return scale * interpolate(std::asinh(s));
        if (alpha_ == 2.0) return 0.0;
        return std::exp(series_->log_density(t, std::abs(x)));
    }

    /// f_t(x) given precomputed scale = t^{-1/alpha}.
    double density_scaled(double t, double scale, double x) const {
        const double s = std::abs(x) * scale;
        if (s <= s_switch_) return scale * interpolate(std::asinh(s));
        if (alpha_ == 2.0) return 0.0;
        return std::exp(series_->log_density(t, std::abs(x)));
    }

  private:
    double interpolate(double u) const {
        const int n = static_cast<int>(values_.size()) - 1;
        const double pos = u / du_;
        int i = static_cast<int>(pos);
        i = std::clamp(i - 1, 0, n - 3);
        const double p = pos - i;  // in [0,3]
        const double y0 = values_[i], y1 = values_[i + 1], y2 = values_[i + 2], y3 = values_[i + 3];
        const double v = -y0 * (p - 1) * (p - 2) * (p - 3) / 6.0 + y1 * p * (p - 2) * (p - 3) / 2.0 -
                         y2 * p * (p - 1) * (p - 3) / 2.0 + y3 * p * (p - 1) * (p - 2) / 6.0;
        return std::max(v, 0.0);
    }

    double alpha_;
    std::shared_ptr<const detail::StableSeriesCoefficients> series_;
    double s_switch_ = 0.0;
    double umax_ = 0.0;
    double du_ = 0.0;
    std::vector<double> values_;
};

/// Process-wide cache of tables, one per alpha. Thread-safe; call once
/// before a parallel section to keep the build out of the timed region.
inline std::shared_ptr<const StableTable> stable_table(double alpha, const QuadratureConfig& cfg) {
    static std::mutex mu;
    static std::map<double, std::shared_ptr<const StableTable>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(alpha);
    if (it != cache.end()) return it->second;
    auto p = std::make_shared<const StableTable>(alpha, cfg);
    cache.emplace(alpha, p);
    return p;
}

/// x -> f_t(x) for a fixed t with per-t constants precomputed. Stable
/// kernels use the interpolated table, so this is for sampling only.
class MarginalKernel {
  public:
    MarginalKernel(const LevyModel& m, double t) : family_(m.family), t_(t) {
        detail::require_positive_time(t);
        switch (family_) {
            case Family::BrownianDrift: {
                mean_ = m.drift * t;
                const double var = m.sigma * m.sigma * t;
                inv2var_ = 0.5 / var;
                lognorm_ = -0.5 * std::log(2.0 * std::numbers::pi * var);
                break;
            }
            case Family::GammaSubordinator: {
                shape_ = m.gamma_m * t;
                inv_theta_ = 1.0 / m.gamma_theta;
                lognorm_ = -boost::math::lgamma(shape_) - shape_ * std::log(m.gamma_theta);
                break;
            }
            case Family::SymmetricStable: {
                table_ = stable_table(m.alpha, m.quad);
                scale_ = std::pow(t, -1.0 / m.alpha);
                break;
            }
        }
    }

    double operator()(double x) const {
        switch (family_) {
            case Family::BrownianDrift: {
                const double d = x - mean_;
                return std::exp(lognorm_ - d * d * inv2var_);
            }
            case Family::GammaSubordinator:
                if (!(x > 0.0)) return 0.0;
                return std::exp(lognorm_ + (shape_ - 1.0) * std::log(x) - x * inv_theta_);
            case Family::SymmetricStable: return table_->density_scaled(t_, scale_, x);
        }
        return 0.0;
    }

  private:
    Family family_;
    double t_;
    double mean_ = 0.0, inv2var_ = 0.0, lognorm_ = 0.0;
    double shape_ = 0.0, inv_theta_ = 0.0;
    double scale_ = 1.0;
    std::shared_ptr<const StableTable> table_;
};

// ---------------------------------------------------------------------------
// Bridge kernels.

/// f_{t1}(x1) / f_{t2}(x2) evaluated through logs; the denominator must be positive.
inline double density_ratio(const LevyModel& m, double t1, double x1, double t2, double x2) {
    const double ld = log_marginal_density(m, t2, x2);
    if (!(ld > -INFINITY) || !std::isfinite(ld)) return NAN;
    const double ln = log_marginal_density(m, t1, x1);
    if (ln == -INFINITY) return 0.0;
    return std::exp(ln - ld);
}

/// M_t^{r,z} = f_{r-t}(z - x_t) / f_r(z).
inline double rn_derivative(const LevyModel& m, double t, double r, double z, double x_t) {
    if (!(t > 0.0) || !(t < r)) throw PreconditionViolation("rn_derivative needs 0 < t < r");
    const double v = density_ratio(m, r - t, z - x_t, r, z);
    if (std::isnan(v)) {
        std::ostringstream os;
        os.precision(17);
        os << "f_r(z) is zero or non-finite at r=" << r << ", z=" << z;
        throw DegeneratePin(os.str());
    }
    return v;
}

/// f_{t-s}(y - x_s) f_{r-t}(z - y) / f_{r-s}(z - x_s).
inline double bridge_transition_density(const LevyModel& m, double s, double t, double r, double x_s, double y,
                                        double z) {
    if (!(s >= 0.0) || !(s < t) || !(t < r)) throw PreconditionViolation("bridge transition needs 0 <= s < t < r");
    const double ld = log_marginal_density(m, r - s, z - x_s);
    if (!(ld > -INFINITY) || !std::isfinite(ld)) {
        std::ostringstream os;
        os.precision(17);
        os << "bridge cannot be at x=" << x_s << " at time " << s << " and reach z=" << z << " at r=" << r;
        throw UnreachableState(os.str());
    }
    const double l1 = log_marginal_density(m, t - s, y - x_s);
    if (l1 == -INFINITY) return 0.0;
    const double l2 = log_marginal_density(m, r - t, z - y);
    if (l2 == -INFINITY) return 0.0;
    return std::exp(l1 + l2 - ld);
}

/// Joint density of (X^{r,z}_{t_1}, ..., X^{r,z}_{t_n}) at the given values.
inline double finite_dim_density(const LevyModel& m, double r, double z, std::span<const double> times,
                                 std::span<const double> values) {
    if (times.size() != values.size()) throw PreconditionViolation("times and values differ in length");
    if (times.empty()) throw PreconditionViolation("finite_dim_density needs at least one time");
    double prev_t = 0.0, prev_x = 0.0;
    for (double t : times) {
        if (!(t > prev_t)) throw PreconditionViolation("times must be strictly increasing and positive");
        prev_t = t;
    }
    if (!(times.back() < r)) throw PreconditionViolation("all times must be below r");
    const double lr = log_marginal_density(m, r, z);
    if (!(lr > -INFINITY) || !std::isfinite(lr)) throw DegeneratePin("f_r(z) is zero or non-finite");
    double acc = -lr;
    prev_t = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double l = log_marginal_density(m, times[i] - prev_t, values[i] - prev_x);
        if (l == -INFINITY) return 0.0;
        acc += l;
        prev_t = times[i];
        prev_x = values[i];
    }
    const double lend = log_marginal_density(m, r - prev_t, z - prev_x);
    if (lend == -INFINITY) return 0.0;
    return std::exp(acc + lend);
}

}  // namespace levybridge

#endif
