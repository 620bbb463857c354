#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "levybridge/bridge_sim.hpp"
#include "levybridge/conditional.hpp"

using namespace levybridge;

namespace {

double npdf(double x, double var) { return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var); }

// N(0,v1) density at x1 over N(0,v2) density at x2, through logs.
double ratio(double x1, double v1, double x2, double v2) {
    return std::sqrt(v2 / v1) * std::exp(-0.5 * x1 * x1 / v1 + 0.5 * x2 * x2 / v2);
}

double gk(auto f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-13);
}

const auto bm = LevyModel::brownian(1.0);
const auto two_tau = LengthMeasure::atoms_only({{1.0, 0.5}, {2.0, 0.5}});
const auto std_normal_pin = PinningMeasure::density_only(AcDensity::normal(0.0, 1.0));
const auto pm_pm1 = PinningMeasure::atoms_only({{-1.0, 0.5}, {1.0, 0.5}});

// Phi(r) for Brownian, Z ~ N(0,1), observation (t, x); oracle by Boost GK.
double phi_normal_pin(double r, double t, double x) {
    return gk([&](double z) { return ratio(z - x, r - t, z, r) * npdf(z, 1.0); }, -INFINITY, INFINITY);
}

}  // namespace

TEST(QDensity, PastBranchAtAtomIsOne) {
    const auto pm = PinningMeasure::atoms_only({{0.0, 1.0}});
    EXPECT_EQ(q_density(bm, pm, MembershipOracle(pm), 0.5, 0.0, 1.0), 1.0);
}

TEST(QDensity, PastBranchUniformDensity) {
    const auto pm = PinningMeasure::density_only(AcDensity::uniform(0.0, 1.0));
    EXPECT_DOUBLE_EQ(q_density(bm, pm, MembershipOracle(pm), 0.5, 0.3, 1.0), 1.0);
}

TEST(QDensity, FutureBranchSingleAtom) {
    const auto pm = PinningMeasure::atoms_only({{0.0, 1.0}});
    const double x = 0.4;
    const double want = npdf(-x, 1.0) * npdf(x, 1.0) / npdf(0.0, 2.0);
    EXPECT_NEAR(q_density(bm, pm, MembershipOracle(pm), 2.0, x, 1.0), want, 1e-14);
}

TEST(TauPosterior, PinSetBranchIsPast) {
    const Observation obs{1.5, 1.0, true};
    const auto law = tau_posterior(obs, bm, two_tau, pm_pm1);
    EXPECT_EQ(law.past_mass, 1.0);
    ASSERT_EQ(law.atoms.size(), 1u);
    EXPECT_EQ(law.atoms[0].location, 1.0);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-12);
    EXPECT_EQ(survival_given_state(obs, bm, two_tau, pm_pm1), 1.0);
}

TEST(TauPosterior, ComplementWithoutDensityIsFuture) {
    const Observation obs{1.5, 0.3, false};
    const auto law = tau_posterior(obs, bm, two_tau, pm_pm1);
    EXPECT_EQ(law.past_mass, 0.0);
    ASSERT_EQ(law.atoms.size(), 1u);
    EXPECT_EQ(law.atoms[0].location, 2.0);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-12);
}

TEST(TauPosterior, MixedPosteriorMatchesClosedForm) {
    const double t = 1.5, x = 0.7;
    const Observation obs{t, x, false};
    const double A = npdf(x, 1.0) * 0.5;
    const double B = npdf(x, t) * 0.5 * phi_normal_pin(2.0, t, x);
    const auto law = tau_posterior(obs, bm, two_tau, std_normal_pin);
    EXPECT_GT(law.past_mass, 0.0);
    EXPECT_LT(law.past_mass, 1.0);
    EXPECT_NEAR(law.past_mass, A / (A + B), 1e-9);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-12);
    EXPECT_EQ(law.past_mass, survival_given_state(obs, bm, two_tau, std_normal_pin));
}

TEST(TauPosterior, LengthDensityMassIsOne) {
    LengthDensity d;
    d.kind = LengthDensity::Kind::Exponential;
    d.p1 = 1.0;
    const auto lm = LengthMeasure::density_only(d);
    const Observation obs{0.8, 0.4, false};
    const auto law = tau_posterior(obs, bm, lm, std_normal_pin);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-12);
    EXPECT_NEAR(law.expectation([](double) { return 1.0; }, bm.quad.relative_only()), 1.0, 1e-6);
    const double past = law.expectation([&](double r) { return r <= obs.t ? 1.0 : 0.0; }, bm.quad.relative_only());
    EXPECT_NEAR(past, law.past_mass, 1e-6);
}

TEST(TauPosterior, ZeroEvidenceThrows) {
    const auto g = LevyModel::gamma(1.0, 1.0);
    const auto pm = PinningMeasure::atoms_only({{1.0, 1.0}});
    // A gamma path at 2.0 by time 1.5 cannot come back to a pin at 1.
    EXPECT_THROW(tau_posterior({1.5, 2.0, false}, g, two_tau, pm), ZeroEvidence);
}

TEST(Survival, GammaUniformPinMatchesOracle) {
    const auto g = LevyModel::gamma(1.0, 1.0);
    const auto pm = PinningMeasure::density_only(AcDensity::uniform(0.0, 1.0));
    const double t = 1.5, x = 0.35;
    // f_{0.5}(z - x) / f_2(z) for a unit gamma: shape 1/2 and shape 2 densities.
    auto K = [&](double z) {
        const double d = z - x;
        return std::pow(d, -0.5) * std::exp(-d) / std::tgamma(0.5) / (z * std::exp(-z));
    };
    boost::math::quadrature::tanh_sinh<double> ts;
    const double phi = ts.integrate(K, x, 1.0);
    const double A = 1.0 * 0.5;
    const double ft = std::pow(x, 0.5) * std::exp(-x) / std::tgamma(1.5);
    const double want = A / (A + ft * 0.5 * phi);
    EXPECT_NEAR(survival_given_state({t, x, false}, g, two_tau, pm), want, 1e-8);
}

TEST(ZPosterior, ConstantHasUnitExpectation) {
    const Observation obs{1.5, 0.7, false};
    EXPECT_NEAR(z_posterior_expectation([](double) { return 1.0; }, obs, bm, two_tau, std_normal_pin), 1.0, 1e-12);
}

TEST(ZPosterior, StoppedBranchReturnsG) {
    const Observation obs{1.5, 1.0, true};
    EXPECT_EQ(z_posterior_expectation([](double z) { return 3.0 * z; }, obs, bm, two_tau, pm_pm1), 3.0);
}

TEST(ZPosterior, SymmetricAtomsGiveZero) {
    const auto lm = LengthMeasure::atoms_only({{1.0, 1.0}});
    const Observation obs{0.5, 0.0, false};
    EXPECT_NEAR(z_posterior_expectation([](double z) { return z; }, obs, bm, lm, pm_pm1), 0.0, 1e-15);
}

TEST(ZPosterior, MixedMatchesClosedForm) {
    const double t = 1.5, x = 0.7;
    const double A = npdf(x, 1.0) * 0.5;
    const double ft = npdf(x, t);
    const double num_f =
        gk([&](double z) { return z * ratio(z - x, 0.5, z, 2.0) * npdf(z, 1.0); }, -INFINITY, INFINITY);
    const double want = (A * x + ft * 0.5 * num_f) / (A + ft * 0.5 * phi_normal_pin(2.0, t, x));
    EXPECT_NEAR(z_posterior_expectation([](double z) { return z; }, {t, x, false}, bm, two_tau, std_normal_pin), want,
                1e-9);
}

TEST(FixedLengthZ, PastReturnsG) {
    EXPECT_EQ(fixed_length_z_expectation([](double z) { return z + 1.0; }, 1.0, 1.5, 0.25, bm, pm_pm1), 1.25);
}

TEST(FixedLengthZ, NormalPinSymmetric) {
    EXPECT_NEAR(fixed_length_z_expectation([](double z) { return z; }, 2.0, 1.0, 0.0, bm, std_normal_pin), 0.0, 1e-12);
}

TEST(FixedLengthZ, TwoAtomTanh) {
    const double v = fixed_length_z_expectation([](double z) { return z; }, 2.0, 1.0, 0.5, bm, pm_pm1);
    EXPECT_NEAR(v, std::tanh(0.5), 1e-14);
    EXPECT_NEAR(v, 0.4621172, 1e-7);
}

TEST(Predictive, SingleTauAtomAllPinned) {
    const auto lm = LengthMeasure::atoms_only({{1.0, 1.0}});
    const auto pm = PinningMeasure::atoms_only({{0.0, 1.0}});
    const auto law = predictive_law({0.5, 0.2, false}, 1.5, bm, lm, pm);
    EXPECT_EQ(law.continuous_weight, 0.0);
    ASSERT_EQ(law.atoms.size(), 1u);
    EXPECT_EQ(law.atoms[0].location, 0.0);
    EXPECT_NEAR(law.atoms[0].prob, 1.0, 1e-14);
}

TEST(Predictive, TwoTauAtomsSplitMass) {
    const auto pm = PinningMeasure::atoms_only({{0.0, 1.0}});
    const double t = 0.5, u = 1.5, x = 0.2;
    const auto law = predictive_law({t, x, false}, u, bm, two_tau, pm);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-6);
    const double k1 = npdf(-x, 0.5) / npdf(0.0, 1.0);
    const double k2 = npdf(-x, 1.5) / npdf(0.0, 2.0);
    ASSERT_EQ(law.atoms.size(), 1u);
    EXPECT_NEAR(law.atoms[0].prob, k1 / (k1 + k2), 1e-12);
    // Travelling part: Brownian bridge from (0.5, 0.2) to (2, 0) at time 1.5.
    const double mean = x + (u - t) / (2.0 - t) * (0.0 - x);
    const double m1 = law.expectation([](double y) { return y; }, bm.quad.relative_only());
    EXPECT_NEAR(m1, law.continuous_weight * mean, 1e-8);
}

TEST(Predictive, MixedPinMassIsOne) {
    const auto law = predictive_law({1.5, 0.7, false}, 1.8, bm, two_tau, std_normal_pin);
    EXPECT_GT(law.past_mass, 0.0);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-6);
    const auto law2 = predictive_law({0.5, 0.7, false}, 1.5, bm, two_tau, std_normal_pin);
    EXPECT_NEAR(law2.total_mass(), 1.0, 1e-6);
    EXPECT_GT(law2.continuous_weight, 0.0);
}

TEST(Predictive, PinSetObservationIsDegenerate) {
    const auto law = predictive_law({1.5, 1.0, true}, 2.5, bm, two_tau, pm_pm1);
    ASSERT_EQ(law.atoms.size(), 1u);
    EXPECT_EQ(law.atoms[0].location, 1.0);
    EXPECT_EQ(law.atoms[0].prob, 1.0);
}

TEST(TwoTime, PreconditionEnforced) {
    EXPECT_THROW(two_time_tau_posterior(1.2, 1.5, 0.0, 1.0, false, bm, two_tau, std_normal_pin), PreconditionViolation);
    EXPECT_THROW(u_ratio(1.0, 1.5, 0.0, 1.0, bm, two_tau), PreconditionViolation);
}

TEST(TwoTime, TauPosteriorMassAndPinBranch) {
    const auto law = two_time_tau_posterior(0.5, 1.5, 0.0, 1.0, false, bm, two_tau, std_normal_pin);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-12);
    EXPECT_GT(law.past_mass, 0.0);
    EXPECT_LT(law.past_mass, 1.0);
    const auto pin = two_time_tau_posterior(0.5, 1.5, 0.0, 1.0, true, bm, two_tau, pm_pm1);
    ASSERT_EQ(pin.atoms.size(), 1u);
    EXPECT_EQ(pin.atoms[0].location, 1.0);
    EXPECT_NEAR(pin.atoms[0].prob, 1.0, 1e-15);
}

TEST(TwoTime, ZExpectationMatchesOneTimeWhenSingular) {
    const auto id = [](double z) { return z; };
    const double one = z_posterior_expectation(id, {1.5, 0.4, false}, bm, two_tau, pm_pm1);
    for (double x1 : {-1.0, 0.0, 0.3, 2.0})
        EXPECT_NEAR(two_time_z_expectation(id, 0.5, 1.5, x1, 0.4, false, bm, two_tau, pm_pm1), one, 1e-12);
}

TEST(TwoTime, ZExpectationDiffersWhenAbsolutelyContinuous) {
    const auto id = [](double z) { return z; };
    const double one = z_posterior_expectation(id, {1.5, 1.0, false}, bm, two_tau, std_normal_pin);
    const double two = two_time_z_expectation(id, 0.5, 1.5, 0.0, 1.0, false, bm, two_tau, std_normal_pin);
    EXPECT_GT(std::abs(one - two), 1e-3);
}

TEST(URatio, WitnessGap) {
    const double U = u_ratio(0.5, 1.5, 0.0, 1.0, bm, two_tau);
    const double want = npdf(1.0, 1.0) / (0.5 * npdf(1.0, 0.5) / npdf(1.0, 1.0));
    EXPECT_NEAR(U, want, 1e-14);
    EXPECT_NEAR(U, 0.5642, 1e-4);
    const double markov = npdf(1.0, 1.5) / 0.5;
    EXPECT_NEAR(markov, 0.4668, 1e-4);
    EXPECT_GT(std::abs(U - markov), 1e-3);
}

TEST(URatio, SingleAtomReduction) {
    const auto lm = LengthMeasure::atoms_only({{1.2, 1.0}});
    const double t1 = 0.5, t2 = 1.5, x1 = 0.1, x2 = -0.4;
    const double want = npdf(x2 - x1, t2 - t1) * npdf(x2, 1.2) / npdf(x2 - x1, 1.2 - t1);
    EXPECT_NEAR(u_ratio(t1, t2, x1, x2, bm, lm), want, 1e-13 * want);
    const double same = u_ratio(t1, t2, 0.3, 0.3, bm, lm);
    EXPECT_TRUE(std::isfinite(same));
    EXPECT_GT(same, 0.0);
}

TEST(YTransition, NormalizesAndStops) {
    const auto one = [](double, double) { return 1.0; };
    for (double z : {-0.5, 0.0, 1.0})
        for (double x : {-0.3, 0.3})
            EXPECT_NEAR(y_transition(one, 0.5, 1.5, z, x, bm, two_tau), 1.0, 1e-6);
    EXPECT_DOUBLE_EQ(y_transition([](double z, double y) { return z + 2 * y; }, 0.5, 1.5, 0.7, 0.7, bm, two_tau), 2.1);
}

TEST(YTransition, SingleAtomBridgeMean) {
    const auto lm = LengthMeasure::atoms_only({{2.0, 1.0}});
    const double t = 1.0, u = 1.5, z = 0.0, x = 0.3;
    const double v = y_transition([](double, double y) { return y; }, t, u, z, x, bm, lm);
    const double oracle =
        gk([&](double y) { return y * bridge_transition_density(bm, t, u, 2.0, x, y, z); }, -INFINITY, INFINITY);
    EXPECT_NEAR(v, oracle, 1e-6);
    EXPECT_NEAR(v, 0.15, 1e-6);
}

TEST(YTransition, GammaNormalizes) {
    const auto g = LevyModel::gamma(1.0, 1.0);
    const auto one = [](double, double) { return 1.0; };
    EXPECT_NEAR(y_transition(one, 0.5, 1.5, 1.0, 0.2, g, two_tau), 1.0, 1e-6);
}

TEST(Survival, SingularPinsGiveIndicatorValues) {
    // Forward direction of the measurability dichotomy, over simulated states.
    const auto pm = PinningMeasure::atoms_only({{-1.0, 0.5}, {1.0, 0.5}});
    const MembershipOracle oracle(pm);
    const std::vector<double> grid{1.5};
    const auto paths = sample_random_bridges(bm, two_tau, pm, grid, 2000, 7, 1);
    int past = 0;
    for (const auto& p : paths) {
        const double s = survival_given_state(Observation::at(1.5, p.values[0], oracle), bm, two_tau, pm);
        EXPECT_TRUE(s == 0.0 || s == 1.0);
        EXPECT_EQ(s == 1.0, p.r <= 1.5);
        past += s == 1.0;
    }
    EXPECT_GT(past, 0);
}
