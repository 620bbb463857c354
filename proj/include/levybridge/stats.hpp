#ifndef LEVYBRIDGE_STATS_HPP
#define LEVYBRIDGE_STATS_HPP

// Test statistics used by the diagnostics: Kolmogorov-Smirnov (one and two
// sample), Pearson chi-square, z-tests. Sums run in a fixed pairwise order so
// results do not depend on how samples were produced.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "levybridge/errors.hpp"

namespace levybridge {

inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t h = xs.size() / 2;
    return pairwise_sum(xs.first(h)) + pairwise_sum(xs.subspan(h));
}

struct MeanSe {
    double mean = NAN;
    double se = NAN;
    std::size_t n = 0;
};

inline MeanSe mean_and_se(std::span<const double> xs) {
    MeanSe r;
    r.n = xs.size();
    if (xs.empty()) return r;
    r.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - r.mean) * (xs[i] - r.mean);
    const double var = pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
    r.se = std::sqrt(var / static_cast<double>(xs.size()));
    return r;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Two-sided p-value of a standard normal statistic.
inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

/// Upper quantile of the standard normal: P(N > q) = p.
inline double normal_upper_quantile(double p) {
    return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<double>(), p));
}

inline double kolmogorov_sf(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    if (lambda < 1.0) {
        // Theta-function form, fast for small lambda.
        const double c = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
        double s = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double term = std::exp(c * (2 * k - 1) * (2 * k - 1));
            s += term;
            if (term < 1e-18 * s) break;
        }
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1 ? 1.0 : -1.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

struct TestResult {
    double statistic = NAN;
    double p_value = NAN;
    double df = NAN;
};

/// One-sample KS against a continuous CDF; Stephens' finite-n correction.
template <class Cdf>
TestResult ks_one_sample(std::span<const double> sample, Cdf&& cdf) {
    if (sample.empty()) throw PreconditionViolation("KS test needs a nonempty sample");
    std::vector<double> xs(sample.begin(), sample.end());
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d), NAN};
}

inline TestResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw PreconditionViolation("KS test needs nonempty samples");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(i / n - j / m));
    }
    const double ne = std::sqrt(n * m / (n + m));
    return {d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d), NAN};
}

/// Pearson chi-square of observed counts against expected counts. Bins with
/// expected count below `min_expected` are pooled into one.
inline TestResult chi_square(std::span<const double> observed, std::span<const double> expected, int fitted_params = 0,
                             double min_expected = 5.0) {
    if (observed.size() != expected.size()) throw PreconditionViolation("chi-square: size mismatch");
    double stat = 0.0;
    int bins = 0;
    double pool_o = 0.0, pool_e = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] < min_expected) {
            pool_o += observed[i];
            pool_e += expected[i];
            continue;
        }
        const double d = observed[i] - expected[i];
        stat += d * d / expected[i];
        ++bins;
    }
    if (pool_e > 0.0) {
        const double d = pool_o - pool_e;
        stat += d * d / pool_e;
        ++bins;
    } else if (pool_o > 0.0) {
        stat = INFINITY;
    }
    const double df = bins - 1 - fitted_params;
    if (df < 1) throw PreconditionViolation("chi-square needs at least two usable bins");
    const double p = std::isfinite(stat) ? boost::math::gamma_q(0.5 * df, 0.5 * stat) : 0.0;
    return {stat, p, df};
}

}  // namespace levybridge

#endif
