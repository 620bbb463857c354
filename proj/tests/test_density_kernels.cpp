#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "levybridge/density_kernels.hpp"

using namespace levybridge;

namespace {

double cauchy(double t, double x) { return t / (std::numbers::pi * (t * t + x * x)); }

double normal_pdf(double mean, double var, double x) {
    return boost::math::pdf(boost::math::normal_distribution<>(mean, std::sqrt(var)), x);
}

// Boost's double-exponential rules, independent of the library integrator.
template <class F>
double oracle_integral_real_line(F f, double centre) {
    boost::math::quadrature::exp_sinh<double> es;
    const double right = es.integrate([&](double u) { return f(centre + u); }, 1e-11);
    const double left = es.integrate([&](double u) { return f(centre - u); }, 1e-11);
    return left + right;
}

}  // namespace

TEST(MarginalDensity, KnownValues) {
    EXPECT_NEAR(marginal_density(LevyModel::stable(1.0), 1.0, 0.0), 1.0 / std::numbers::pi, 1e-10);
    EXPECT_NEAR(marginal_density(LevyModel::brownian(1.0), 1.0, 0.0), 0.3989422804014327, 1e-15);
    EXPECT_NEAR(marginal_density(LevyModel::gamma(1.0, 1.0), 2.0, 1.0), std::exp(-1.0), 1e-15);
}

TEST(MarginalDensity, GammaSupportEdgeIsZero) {
    const auto g = LevyModel::gamma(1.5, 2.0);
    EXPECT_EQ(marginal_density(g, 1.0, 0.0), 0.0);
    EXPECT_EQ(marginal_density(g, 1.0, -3.0), 0.0);
    EXPECT_EQ(log_marginal_density(g, 1.0, -3.0), -INFINITY);
}

TEST(MarginalDensity, NonPositiveTimeRejected) {
    EXPECT_THROW(marginal_density(LevyModel::brownian(1.0), 0.0, 0.0), PreconditionViolation);
    EXPECT_THROW(marginal_density(LevyModel::stable(1.5), -1.0, 0.0), PreconditionViolation);
}

TEST(MarginalDensity, ModelValidation) {
    EXPECT_THROW(LevyModel::brownian(0.0), ValidationError);
    EXPECT_THROW(LevyModel::gamma(1.0, -1.0), ValidationError);
    EXPECT_THROW(LevyModel::stable(2.5), ValidationError);
    EXPECT_THROW(LevyModel::stable(0.0), ValidationError);
}

TEST(StableFourier, KnownValues) {
    QuadratureConfig cfg;
    EXPECT_NEAR(stable_density_fourier(2.0, 0.5, 0.7, cfg), 0.3122539333667613, 1e-9);
    EXPECT_NEAR(stable_density_fourier(1.0, 2.0, 3.0, cfg), 2.0 / (std::numbers::pi * 13.0), 1e-10);
}

TEST(StableFourier, CauchyOracle) {
    QuadratureConfig cfg;
    for (double t : {0.5, 1.0, 2.0}) {
        double worst = 0.0;
        for (int i = 0; i <= 400; ++i) {
            const double x = -10.0 + 0.05 * i;
            worst = std::max(worst, std::abs(stable_density_fourier(1.0, t, x, cfg) - cauchy(t, x)));
        }
        EXPECT_LT(worst, 1e-6) << "t=" << t;
    }
}

TEST(StableFourier, GaussianOracle) {
    QuadratureConfig cfg;
    for (double t : {0.5, 1.0, 2.0}) {
        double worst = 0.0;
        for (int i = 0; i <= 400; ++i) {
            const double x = -10.0 + 0.05 * i;
            worst = std::max(worst, std::abs(stable_density(2.0, t, x, cfg) - normal_pdf(0.0, 2.0 * t, x)));
        }
        EXPECT_LT(worst, 1e-6) << "t=" << t;
    }
}

TEST(StableFourier, ExactSymmetry) {
    QuadratureConfig cfg;
    for (double a : {0.5, 1.5})
        for (double x : {0.1, 0.77, 3.3, 12.0, 80.0})
            EXPECT_EQ(stable_density(a, 0.7, x, cfg), stable_density(a, 0.7, -x, cfg));
}

TEST(StableFourier, Normalisation) {
    for (double a : {0.5, 1.5}) {
        const auto m = LevyModel::stable(a);
        for (double t : {0.5, 1.0, 2.0}) {
            // Symmetric, so integrate the half line and double.
            boost::math::quadrature::exp_sinh<double> es;
            const double half = es.integrate([&](double x) { return marginal_density(m, t, x); }, 1e-11);
            EXPECT_NEAR(2.0 * half, 1.0, 1e-6) << "alpha=" << a << " t=" << t;
        }
    }
}

TEST(StableFourier, ScalingLaw) {
    QuadratureConfig cfg;
    for (double a : {0.5, 1.5})
        for (double t : {0.5, 2.0})
            for (double x : {0.0, 0.3, 1.0, 2.5, 7.0, 20.0, 150.0}) {
                const double c = std::pow(t, -1.0 / a);
                const double lhs = stable_density(a, t, x, cfg);
                const double rhs = c * stable_density(a, 1.0, c * x, cfg);
                EXPECT_NEAR(lhs / rhs, 1.0, 1e-8) << "alpha=" << a << " t=" << t << " x=" << x;
            }
}

TEST(StableFourier, BoundedByCap) {
    QuadratureConfig cfg;
    for (double a : {0.5, 1.0, 1.5, 2.0})
        for (double t : {0.1, 1.0, 3.0}) {
            const double cap = stable_density_bound(a, t);
            for (double x : {0.0, 0.01, 0.5, 4.0}) EXPECT_LE(stable_density(a, t, x, cfg), cap * (1.0 + 1e-9));
            EXPECT_NEAR(stable_density(a, t, 0.0, cfg), cap, 1e-8 * cap);
        }
}

TEST(StableFourier, SeriesMatchesFourierAcrossSwitch) {
    QuadratureConfig cfg;
    for (double a : {0.5, 1.5}) {
        const double sw = detail::stable_series_switch(a, cfg.truncation);
        for (double s : {0.9 * sw, 0.99 * sw}) {
            const double fourier = stable_density_fourier(a, 1.0, s, cfg);
            const double series = std::exp(detail::stable_series(a)->log_density(1.0, s));
            EXPECT_NEAR(series / fourier, 1.0, 1e-7) << "alpha=" << a << " s=" << s;
        }
    }
}

TEST(StableTable, InterpolationAgreesWithDirect) {
    QuadratureConfig cfg;
    const auto tab = stable_table(1.5, cfg);
    for (double t : {0.1, 1.0, 4.0})
        for (double x : {0.0, 0.013, 0.4, 1.7, 6.0, 30.0, 200.0}) {
            const double d = stable_density(1.5, t, x, cfg);
            EXPECT_NEAR(tab->density(t, x), d, 1e-8 * d + 1e-13) << "t=" << t << " x=" << x;
        }
}

TEST(MarginalKernel, MatchesMarginalDensity) {
    for (const auto& m : {LevyModel::brownian(1.3, 0.4), LevyModel::gamma(2.0, 0.5)}) {
        const MarginalKernel k(m, 0.8);
        for (double x : {-1.0, 0.0, 0.2, 0.9, 2.5}) EXPECT_NEAR(k(x), marginal_density(m, 0.8, x), 1e-14);
    }
}

TEST(RnDerivative, KnownValues) {
    const auto bm = LevyModel::brownian(1.0);
    EXPECT_NEAR(rn_derivative(bm, 1e-12, 2.0, 0.4, 0.0), 1.0, 1e-9);
    EXPECT_NEAR(rn_derivative(bm, 1.0, 2.0, 0.0, 0.0), std::sqrt(2.0), 1e-13);
    EXPECT_EQ(rn_derivative(LevyModel::gamma(1.0, 1.0), 1.0, 2.0, 1.0, 1.5), 0.0);
}

TEST(RnDerivative, DegeneratePinThrows) {
    EXPECT_THROW(rn_derivative(LevyModel::gamma(1.0, 1.0), 0.5, 1.0, -1.0, -2.0), DegeneratePin);
    EXPECT_THROW(rn_derivative(LevyModel::brownian(1.0), 1.0, 1.0, 0.0, 0.0), PreconditionViolation);
}

TEST(BridgeTransition, BrownianMidpointIsGaussian) {
    const auto bm = LevyModel::brownian(1.0);
    for (double y : {-1.2, -0.3, 0.0, 0.5, 2.0})
        EXPECT_NEAR(bridge_transition_density(bm, 0.0, 1.0, 2.0, 0.0, y, 0.0), normal_pdf(0.0, 0.5, y), 1e-13);
}

TEST(BridgeTransition, GammaBridgeIsScaledBeta) {
    EXPECT_NEAR(bridge_transition_density(LevyModel::gamma(1.0, 1.0), 0.0, 1.0, 2.0, 0.0, 0.25, 1.0), 1.0, 1e-12);
    // General case: y/z ~ Beta(m(t-s), m(r-t)), density scaled by 1/z.
    const auto g = LevyModel::gamma(1.7, 0.6);
    const boost::math::beta_distribution<> beta(1.7 * 0.9, 1.7 * 1.4);
    for (double y : {0.1, 0.8, 1.9})
        EXPECT_NEAR(bridge_transition_density(g, 0.0, 0.9, 2.3, 0.0, y, 2.0), boost::math::pdf(beta, y / 2.0) / 2.0,
                    1e-12);
}

TEST(BridgeTransition, DriftCancels) {
    const auto b0 = LevyModel::brownian(0.8, 0.0);
    const auto b5 = LevyModel::brownian(0.8, 5.0);
    for (double y : {-1.0, 0.2, 1.4})
        EXPECT_NEAR(bridge_transition_density(b0, 0.3, 1.1, 2.0, 0.1, y, 0.6),
                    bridge_transition_density(b5, 0.3, 1.1, 2.0, 0.1, y, 0.6), 1e-12);
}

TEST(BridgeTransition, IntegratesToOne) {
    struct Triple {
        double s, t, r;
    };
    const Triple triples[] = {{0.0, 0.5, 1.0}, {0.2, 1.0, 2.5}, {1.0, 1.1, 3.0}};
    const std::vector<LevyModel> models{LevyModel::brownian(1.2, 0.3), LevyModel::gamma(1.5, 0.8),
                                        LevyModel::stable(1.5)};
    boost::math::quadrature::tanh_sinh<double> ts;
    for (const auto& m : models)
        for (const auto& tr : triples) {
            const double xs = m.is_subordinator() ? 0.0 : 0.3;  // exact y - x_s near the singular edge
            const double z = m.is_subordinator() ? 2.0 : -0.5;
            auto f = [&](double y) { return bridge_transition_density(m, tr.s, tr.t, tr.r, xs, y, z); };
            const double total = m.is_subordinator() ? ts.integrate(f, xs, z, 1e-11)
                                                     : oracle_integral_real_line(f, xs + (z - xs) * (tr.t - tr.s) /
                                                                                             (tr.r - tr.s));
            EXPECT_NEAR(total, 1.0, 1e-6) << m.describe() << " s=" << tr.s << " t=" << tr.t << " r=" << tr.r;
        }
}

TEST(BridgeTransition, UnreachableStateThrows) {
    EXPECT_THROW(bridge_transition_density(LevyModel::gamma(1.0, 1.0), 0.5, 1.0, 2.0, 1.5, 1.6, 1.0),
                 UnreachableState);
}

TEST(FiniteDim, KnownValues) {
    const auto bm = LevyModel::brownian(1.0);
    const double t1[] = {0.7}, x1[] = {0.4};
    EXPECT_NEAR(finite_dim_density(bm, 2.0, 0.3, t1, x1),
                rn_derivative(bm, 0.7, 2.0, 0.3, 0.4) * marginal_density(bm, 0.7, 0.4), 1e-14);
    const double t2[] = {1.0, 2.0}, x2[] = {0.0, 0.0};
    const double f1 = normal_pdf(0.0, 1.0, 0.0);
    EXPECT_NEAR(finite_dim_density(bm, 3.0, 0.0, t2, x2), f1 * f1 * f1 / normal_pdf(0.0, 3.0, 0.0), 1e-14);
}

TEST(FiniteDim, EqualsTelescopedTransitions) {
    const std::vector<LevyModel> models{LevyModel::brownian(0.9, -0.2), LevyModel::gamma(2.0, 0.5),
                                        LevyModel::stable(1.5)};
    const std::vector<double> times{0.3, 0.8, 1.6};
    for (const auto& m : models) {
        const std::vector<double> vals = m.is_subordinator() ? std::vector<double>{0.2, 0.5, 1.1}
                                                             : std::vector<double>{0.2, -0.4, 0.9};
        const double r = 2.2, z = m.is_subordinator() ? 1.6 : 0.5;
        double prod = 1.0, ps = 0.0, px = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) {
            prod *= bridge_transition_density(m, ps, times[i], r, px, vals[i], z);
            ps = times[i];
            px = vals[i];
        }
        EXPECT_NEAR(finite_dim_density(m, r, z, times, vals) / prod, 1.0, 1e-10) << m.describe();
    }
}

TEST(FiniteDim, Preconditions) {
    const auto bm = LevyModel::brownian(1.0);
    const double t[] = {1.0, 0.5}, x[] = {0.0, 0.0};
    EXPECT_THROW(finite_dim_density(bm, 2.0, 0.0, t, x), PreconditionViolation);
    const double t2[] = {1.0, 2.5};
    EXPECT_THROW(finite_dim_density(bm, 2.0, 0.0, t2, x), PreconditionViolation);
}
