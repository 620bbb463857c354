#include <cmath>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "levybridge/bridge_sim.hpp"
#include "levybridge/stats.hpp"

using namespace levybridge;

namespace {

std::vector<double> column(const std::vector<BridgePath>& ps, std::size_t k) {
    std::vector<double> v;
    v.reserve(ps.size());
    for (const auto& p : ps) v.push_back(p.values[k]);
    return v;
}

template <class Sampler>
std::vector<BridgePath> draw(std::size_t n, std::uint64_t seed, Sampler&& s) {
    std::vector<BridgePath> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(seed, i);
        out[i] = s(rng);
    }
    return out;
}

MeanSe variance_estimate(const std::vector<double>& xs, double known_mean) {
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - known_mean) * (xs[i] - known_mean);
    return mean_and_se(sq);
}

// CDF of the one-step bridge law by Boost adaptive Gauss-Kronrod.
double bridge_cdf(const LevyModel& m, double t, double r, double z, double y, double lo) {
    auto f = [&](double v) { return bridge_transition_density(m, 0.0, t, r, 0.0, v, z); };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, y, 15, 1e-10);
}

}  // namespace

TEST(GenericSampler, BrownianVarianceAtMidpoint) {
    const auto bm = LevyModel::brownian(1.0);
    const std::vector<double> grid{1.0};
    const auto paths = draw(100000, 1, [&](RngStream& rng) { return sample_fixed_bridge_generic(bm, 2.0, 0.0, grid, rng); });
    const auto v = variance_estimate(column(paths, 0), 0.0);
    EXPECT_LT(std::abs(v.mean - 0.5), 4.0 * v.se);
}

TEST(GenericSampler, GammaBridgeIsUniform) {
    const auto g = LevyModel::gamma(1.0, 1.0);
    const std::vector<double> grid{1.0};
    const auto paths = draw(100000, 2, [&](RngStream& rng) { return sample_fixed_bridge_generic(g, 2.0, 1.0, grid, rng); });
    EXPECT_GT(ks_one_sample(column(paths, 0), [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value, 1e-3);
}

TEST(GenericSampler, ConstantAfterLength) {
    RngStream rng(3, 0);
    for (const auto& m : {LevyModel::brownian(1.0), LevyModel::gamma(1.0, 1.0), LevyModel::stable(1.5)}) {
        const double z = m.is_subordinator() ? 0.7 : -0.3;
        const auto p = sample_fixed_bridge_generic(m, 1.0, z, {0.5, 1.0, 1.5}, rng);
        EXPECT_EQ(p.values[1], z);
        EXPECT_EQ(p.values[2], z);
        EXPECT_NE(p.values[0], z);
    }
}

TEST(GenericSampler, StableMatchesKernelBins) {
    const auto st = LevyModel::stable(1.5);
    const double r = 1.0, z = 0.4;
    const std::vector<double> grid{0.5};
    const std::size_t n = 20000;
    const auto ys = column(draw(n, 4, [&](RngStream& rng) { return sample_fixed_bridge_generic(st, r, z, grid, rng); }), 0);
    // 24 bins on [-3,3.4] plus two tail bins; probabilities from the direct-density kernel.
    std::vector<double> edges{-INFINITY};
    for (int i = 0; i <= 24; ++i) edges.push_back(-3.0 + i * (6.4 / 24.0));
    edges.push_back(INFINITY);
    using GL = boost::math::quadrature::gauss<double, 30>;
    auto f = [&](double y) { return bridge_transition_density(st, 0.0, 0.5, r, 0.0, y, z); };
    std::vector<double> expct, obs(edges.size() - 1, 0.0);
    double inner = 0.0;
    for (std::size_t b = 1; b + 2 < edges.size(); ++b) {
        expct.push_back(GL::integrate(f, edges[b], edges[b + 1]));
        inner += expct.back();
    }
    // Tails split by symmetry of the kernel about z/2.
    const double tail = 0.5 * (1.0 - inner);
    expct.insert(expct.begin(), tail);
    expct.push_back(tail);
    for (double& e : expct) e *= n;
    for (double y : ys) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), y);
        obs[static_cast<std::size_t>(it - edges.begin()) - 1] += 1.0;
    }
    EXPECT_GT(chi_square(obs, expct).p_value, 1e-3);
}

TEST(GenericSampler, StableFarPinIsBimodalAndSampled) {
    // With a pin far out the step either stays near 0 or jumps near z.
    const auto st = LevyModel::stable(1.5);
    const double z = 15.0;
    const std::vector<double> grid{0.5};
    const auto ys = column(draw(8000, 5, [&](RngStream& rng) { return sample_fixed_bridge_generic(st, 1.0, z, grid, rng); }), 0);
    int near_start = 0, near_pin = 0;
    for (double y : ys) {
        near_start += std::abs(y) < 3.0;
        near_pin += std::abs(y - z) < 3.0;
    }
    // The kernel is symmetric about z/2, so both modes carry equal mass.
    EXPECT_GT(near_start, 2000);
    EXPECT_LT(std::abs(near_start - near_pin), 4.0 * std::sqrt(static_cast<double>(near_start + near_pin)));
    const auto ms = mean_and_se(ys);
    EXPECT_LT(std::abs(ms.mean - z / 2.0), 4.0 * ms.se);
}

TEST(GenericSampler, DegeneratePinRejected) {
    RngStream rng(6, 0);
    EXPECT_THROW(sample_fixed_bridge_generic(LevyModel::gamma(1.0, 1.0), 1.0, -1.0, {0.5}, rng), DegeneratePin);
}

TEST(ExplicitBrownian, EndpointAndMean) {
    const std::vector<double> grid{0.5, 1.0, 2.0};
    const auto paths = draw(100000, 7, [&](RngStream& rng) { return sample_brownian_bridge_explicit(1.0, 0.0, 1.0, 0.8, grid, rng); });
    for (const auto& p : paths) {
        EXPECT_EQ(p.values[1], 0.8);
        EXPECT_EQ(p.values[2], 0.8);
    }
    const auto ms = mean_and_se(column(paths, 0));
    EXPECT_LT(std::abs(ms.mean - 0.4), 4.0 * ms.se);
}

TEST(ExplicitBrownian, DriftCancels) {
    const std::vector<double> grid{0.3, 0.9, 1.4};
    const auto a = draw(100000, 8, [&](RngStream& rng) { return sample_brownian_bridge_explicit(1.0, 0.0, 2.0, 0.5, grid, rng); });
    const auto b = draw(100000, 8, [&](RngStream& rng) { return sample_brownian_bridge_explicit(1.0, 5.0, 2.0, 0.5, grid, rng); });
    for (std::size_t k = 0; k < grid.size(); ++k) {
        EXPECT_GT(ks_two_sample(column(a, k), column(b, k)).p_value, 1e-3);
        // matched driving noise: values agree up to rounding
        EXPECT_NEAR(a[17].values[k], b[17].values[k], 1e-12);
    }
}

TEST(ExplicitGamma, BetaMarginalAndMonotone) {
    const double m = 1.5, theta = 2.0, r = 2.0, z = 3.0;
    const std::vector<double> grid{0.25, 0.5, 0.8, 1.3, 2.0, 2.5};
    const auto paths = draw(100000, 9, [&](RngStream& rng) { return sample_gamma_bridge_explicit(m, theta, r, z, grid, rng); });
    for (const auto& p : paths) {
        double prev = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            EXPECT_GE(p.values[k], prev);
            prev = p.values[k];
        }
        EXPECT_EQ(p.values[4], z);
        EXPECT_EQ(p.values[5], z);
    }
    for (std::size_t k : {1u, 3u}) {
        const double t = grid[k];
        const boost::math::beta_distribution<> beta(m * t, m * (r - t));
        std::vector<double> ratio = column(paths, k);
        for (double& x : ratio) x /= z;
        EXPECT_GT(ks_one_sample(ratio, [&](double x) { return boost::math::cdf(beta, std::clamp(x, 0.0, 1.0)); }).p_value,
                  1e-3);
    }
    EXPECT_THROW(
        {
            RngStream rng(1, 1);
            sample_gamma_bridge_explicit(m, theta, r, -1.0, grid, rng);
        },
        PreconditionViolation);
}

TEST(ExplicitGamma, PreLengthValuesNeverEqualPin) {
    // Fine grid close to r: z * g_t / g_r rounds to z often; the nudge keeps it off.
    std::vector<double> grid;
    for (int k = 1; k <= 200; ++k) grid.push_back(0.9 + 0.0005 * k);
    int nudges = 0;
    for (std::size_t i = 0; i < 2000; ++i) {
        RngStream rng(10, i);
        const auto p = sample_gamma_bridge_explicit(0.2, 1.0, 1.0, 1.0, grid, rng);
        nudges += p.nudges;
        for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_EQ(p.values[k] == 1.0, grid[k] >= 1.0);
    }
    EXPECT_GT(nudges, 0);
}

TEST(RandomBridge, StandardBridgeVariance) {
    const auto bm = LevyModel::brownian(1.0);
    const auto lm = LengthMeasure::atoms_only({{1.0, 1.0}});
    const auto pm = PinningMeasure::atoms_only({{0.0, 1.0}});
    const auto paths = sample_random_bridges(bm, lm, pm, {0.5, 1.2}, 100000, 11);
    const auto v = variance_estimate(column(paths, 0), 0.0);
    EXPECT_LT(std::abs(v.mean - 0.25), 4.0 * v.se);
    for (const auto& p : paths) EXPECT_EQ(p.values[1], p.z);
}

TEST(RandomBridge, StoppedFractionMatchesLengthCdf) {
    const auto bm = LevyModel::brownian(1.0);
    const auto lm = LengthMeasure::atoms_only({{1.0, 0.5}, {2.0, 0.5}});
    PinningMeasure pm = PinningMeasure::density_only(AcDensity::normal(0.0, 1.0));
    const auto paths = sample_random_bridges(bm, lm, pm, {1.5}, 100000, 12);
    std::vector<double> hit(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        hit[i] = paths[i].values[0] == paths[i].z;
        EXPECT_EQ(hit[i] == 1.0, paths[i].r <= 1.5);
    }
    const auto ms = mean_and_se(hit);
    EXPECT_LT(std::abs(ms.mean - 0.5), 4.0 * std::sqrt(0.25 / paths.size()));
}

TEST(RandomBridge, ReproducibleAcrossThreadCounts) {
    const auto st = LevyModel::stable(1.5);
    const auto lm = LengthMeasure::density_only({LengthDensity::Kind::Exponential, 1.0, 1.0});
    const auto pm = PinningMeasure::atoms_only({{-0.5, 0.5}, {1.0, 0.5}});
    const auto a = sample_random_bridges(st, lm, pm, {0.5, 1.0}, 300, 13, 1);
    const auto b = sample_random_bridges(st, lm, pm, {0.5, 1.0}, 300, 13, 3);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values, b[i].values);
}

TEST(GenericVsExplicit, SingleTimeMarginalsAgree) {
    const std::vector<double> grid{0.4, 1.0, 1.6};
    for (const auto& m : {LevyModel::brownian(1.3, 0.7), LevyModel::gamma(2.0, 0.5)}) {
        const double r = 2.0, z = m.is_subordinator() ? 1.5 : 0.6;
        const auto gen = draw(20000, 14, [&](RngStream& rng) { return sample_fixed_bridge(m, r, z, grid, rng, SamplerKind::Generic); });
        const auto exp = draw(20000, 15, [&](RngStream& rng) { return sample_fixed_bridge(m, r, z, grid, rng, SamplerKind::Explicit); });
        for (std::size_t k = 0; k < grid.size(); ++k)
            EXPECT_GT(ks_two_sample(column(gen, k), column(exp, k)).p_value, 1e-3) << m.describe() << " k=" << k;
    }
}

TEST(FiniteDimLaw, BrownianChiSquareOnGrid) {
    const auto bm = LevyModel::brownian(1.0);
    const double r = 2.0, z = 0.0;
    const std::vector<double> grid{0.5, 1.0};
    const std::size_t n = 100000;
    const auto paths = draw(n, 16, [&](RngStream& rng) { return sample_fixed_bridge_generic(bm, r, z, grid, rng); });
    // 10 x 10 bins over [-2,2]^2 with the outside folded into the edge bins.
    const int B = 10;
    const double lo = -2.0, hi = 2.0, h = (hi - lo) / B;
    auto bin = [&](double v) { return std::clamp(static_cast<int>(std::floor((v - lo) / h)), 0, B - 1); };
    std::vector<double> obs(B * B, 0.0), expct(B * B, 0.0);
    for (const auto& p : paths) obs[bin(p.values[0]) * B + bin(p.values[1])] += 1.0;
    auto edge = [&](int i, bool upper) {
        if (!upper) return i == 0 ? -12.0 : lo + i * h;
        return i == B - 1 ? 12.0 : lo + (i + 1) * h;
    };
    using GL = boost::math::quadrature::gauss<double, 30>;
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < B; ++j) {
            const double v = GL::integrate(
                [&](double x1) {
                    return GL::integrate(
                        [&](double x2) {
                            const double xs[] = {x1, x2};
                            return finite_dim_density(bm, r, z, grid, xs);
                        },
                        edge(j, false), edge(j, true));
                },
                edge(i, false), edge(i, true));
            expct[i * B + j] = v * n;
        }
    EXPECT_GT(chi_square(obs, expct).p_value, 1e-3);
}
