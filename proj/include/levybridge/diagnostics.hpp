#ifndef LEVYBRIDGE_DIAGNOSTICS_HPP
#define LEVYBRIDGE_DIAGNOSTICS_HPP

// Monte Carlo experiments that check the stopping, measurability and Markov
// properties of random bridges, and cross-check the conditional formulas.
// Every experiment is a pure function of its inputs and master seed; path i
// always uses stream (seed, i) and all reductions run in path order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "levybridge/bridge_sim.hpp"
#include "levybridge/conditional.hpp"
#include "levybridge/measures.hpp"
#include "levybridge/parallel.hpp"
#include "levybridge/stats.hpp"

namespace levybridge {

enum class Verdict { Pass, Fail, Inconclusive };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

struct Estimate {
    std::string name;
    double value;
    double se;
};

struct Count {
    std::string name;
    std::uint64_t value;
};

struct TestRecord {
    std::string name;
    std::string null_hypothesis;
    std::string statistic_kind;  // "z", "ks", "chi2", "count", "tv"
    double statistic;
    double p_value;  // NaN for deterministic checks
    double threshold;
    std::string correction;
    bool rejected;
};

struct ExperimentReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::uint64_t sample_size = 0;
    std::vector<Estimate> estimates;
    std::vector<Count> counts;
    std::vector<TestRecord> tests;
    std::vector<std::string> criteria;
    std::vector<std::string> notes;
    Verdict verdict = Verdict::Inconclusive;

    bool passed() const { return verdict == Verdict::Pass; }
    void estimate(std::string name, double value, double se) { estimates.push_back({std::move(name), value, se}); }
    void count(std::string name, std::uint64_t value) { counts.push_back({std::move(name), value}); }
    void note(std::string s) { notes.push_back(std::move(s)); }

    const Estimate* find_estimate(const std::string& name) const {
        for (const auto& e : estimates)
            if (e.name == name) return &e;
        return nullptr;
    }
    std::uint64_t find_count(const std::string& name) const {
        for (const auto& c : counts)
            if (c.name == name) return c.value;
        return 0;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "experiment: " << experiment << "\nseed: " << seed << "\nsample_size: " << sample_size
           << "\nverdict: " << to_string(verdict) << "\n";
        for (const auto& c : criteria) os << "criterion: " << c << "\n";
        for (const auto& c : counts) os << "count " << c.name << " = " << c.value << "\n";
        for (const auto& e : estimates) os << "estimate " << e.name << " = " << e.value << " (se " << e.se << ")\n";
        for (const auto& t : tests)
            os << "test " << t.name << ": " << t.statistic_kind << " = " << t.statistic << ", p = " << t.p_value
               << ", threshold " << t.threshold << " [" << t.correction << "] " << (t.rejected ? "REJECTED" : "ok")
               << " ; H0: " << t.null_hypothesis << "\n";
        for (const auto& n : notes) os << "note: " << n << "\n";
        return os.str();
    }
};

namespace detail {

inline constexpr std::size_t kSimChunk = std::size_t{1} << 15;

/// Simulates paths [0, n) in chunks and hands them to visit(i, path) in index order.
template <class Visit>
void simulate_in_order(const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm,
                       const std::vector<double>& grid, std::size_t n, std::uint64_t seed, int threads,
                       Visit&& visit, SamplerKind kind = SamplerKind::Auto) {
    prepare_sampler(m);
    std::vector<BridgePath> buf;
    for (std::size_t first = 0; first < n; first += kSimChunk) {
        const std::size_t len = std::min(kSimChunk, n - first);
        buf.assign(len, BridgePath{});
        parallel_for(len, threads, [&](std::size_t i) {
            RngStream rng(seed, first + i);
            buf[i] = sample_random_bridge(m, lm, pm, grid, rng, kind);
        });
        for (std::size_t i = 0; i < len; ++i) visit(first + i, buf[i]);
    }
}

inline std::uint64_t pilot_seed(std::uint64_t seed) {
    std::uint64_t s = seed ^ 0x7f4a7c15d1b54a32ULL;
    return splitmix64(s);
}

inline double fraction_se(double p, std::size_t n) { return std::sqrt(std::max(p * (1.0 - p), 0.0) / double(n)); }

/// Index of the bin of v among sorted interior edges.
inline int bin_of(const std::vector<double>& edges, double v) {
    return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

inline std::vector<double> quantile_edges(std::vector<double> v, int bins) {
    std::vector<double> edges;
    if (v.empty() || bins < 2) return edges;
    std::sort(v.begin(), v.end());
    for (int k = 1; k < bins; ++k) {
        const std::size_t idx = std::min(v.size() - 1, v.size() * static_cast<std::size_t>(k) / bins);
        edges.push_back(v[idx]);
    }
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

/// f on [lo, hi] at n uniform nodes, four-point Lagrange between them.
class UniformTable {
  public:
    UniformTable() = default;
    template <class F>
    UniformTable(F&& f, double lo, double hi, int n, int threads) : lo_(lo), hi_(hi), ys_(std::size_t(n)) {
        h_ = (hi - lo) / (n - 1);
        parallel_for(ys_.size(), threads, [&](std::size_t i) { ys_[i] = f(lo + h_ * double(i)); });
    }
    bool covers(double x) const { return !ys_.empty() && x >= lo_ && x <= hi_; }
    double operator()(double x) const {
        const int n = static_cast<int>(ys_.size());
        const double s = (x - lo_) / h_;
        const int k = std::clamp(static_cast<int>(std::floor(s)) - 1, 0, n - 4);
        double v = 0.0;
        for (int i = 0; i < 4; ++i) {
            double w = 1.0;
            for (int j = 0; j < 4; ++j)
                if (j != i) w *= (s - (k + j)) / double(i - j);
            v += w * ys_[std::size_t(k + i)];
        }
        return v;
    }

  private:
    double lo_ = 0.0, hi_ = 0.0, h_ = 1.0;
    std::vector<double> ys_;
};

inline double identity(double v) { return v; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Stopping property: zeta_t = Z exactly when tau <= t.

inline ExperimentReport stopping_time_test(const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm,
                                           const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed,
                                           int threads = 0) {
    ExperimentReport rep;
    rep.experiment = "stopping_time_test";
    rep.seed = seed;
    rep.sample_size = n_paths;
    rep.criteria.push_back("zero grid points with zeta_t == Z and t < tau");
    rep.criteria.push_back("zero grid points with zeta_t != Z and tau <= t");
    std::uint64_t early = 0, late = 0, stopped = 0, points = 0, nudges = 0;
    detail::simulate_in_order(m, lm, pm, grid, n_paths, seed, threads, [&](std::size_t, const BridgePath& p) {
        for (std::size_t k = 0; k < p.values.size(); ++k) {
            const bool at_pin = p.values[k] == p.z;
            const bool past = p.r <= p.grid[k];
            early += at_pin && !past;
            late += !at_pin && past;
            stopped += past;
            ++points;
        }
        nudges += static_cast<std::uint64_t>(p.nudges);
    });
    rep.count("grid_points", points);
    rep.count("stopped_points", stopped);
    rep.count("pin_hit_before_tau", early);
    rep.count("off_pin_after_tau", late);
    rep.count("off_pin_nudges", nudges);
    rep.tests.push_back({"pin_hit_before_tau", "no pre-tau grid value equals Z", "count", double(early), NAN, 0.0,
                         "none", early > 0});
    rep.tests.push_back({"off_pin_after_tau", "every post-tau grid value equals Z", "count", double(late), NAN, 0.0,
                         "none", late > 0});
    rep.estimate("stopped_fraction", double(stopped) / double(std::max<std::uint64_t>(points, 1)),
                 detail::fraction_se(double(stopped) / double(std::max<std::uint64_t>(points, 1)), points));
    rep.verdict = early == 0 && late == 0 ? Verdict::Pass : Verdict::Fail;
    return rep;
}

// ---------------------------------------------------------------------------
// Measurability dichotomy: P(tau <= t | zeta_t) is an indicator iff a_ac = 0.

inline constexpr double kInteriorMargin = 1e-6;
inline constexpr double kIndicatorTolerance = 1e-9;

inline ExperimentReport measurability_test(const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm,
                                           double t, std::size_t n_paths, std::uint64_t seed, int threads = 0) {
    const double Ft = lm.cdf(t);
    if (!(Ft > 0.0 && Ft < 1.0)) throw PreconditionViolation("measurability_test needs 0 < F_tau(t) < 1");
    ExperimentReport rep;
    rep.experiment = "measurability_test";
    rep.seed = seed;
    rep.sample_size = n_paths;

    const MembershipOracle oracle(pm);
    std::vector<double> surv(n_paths);
    std::vector<unsigned char> past(n_paths);
    std::vector<double> xs(n_paths);
    detail::simulate_in_order(m, lm, pm, {t}, n_paths, seed, threads, [&](std::size_t i, const BridgePath& p) {
        xs[i] = p.values[0];
        past[i] = p.r <= t;
    });
    parallel_for(n_paths, threads, [&](std::size_t i) {
        surv[i] = survival_given_state(Observation::at(t, xs[i], oracle), m, lm, pm);
    });

    std::uint64_t non_indicator = 0, interior = 0, interior_past = 0, mismatched = 0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        const double s = surv[i];
        const bool is0 = std::abs(s) <= kIndicatorTolerance, is1 = std::abs(s - 1.0) <= kIndicatorTolerance;
        non_indicator += !(is0 || is1);
        const bool in = s > kInteriorMargin && s < 1.0 - kInteriorMargin;
        interior += in;
        interior_past += in && past[i];
        mismatched += (is0 && past[i]) || (is1 && !past[i]);
    }
    rep.count("non_indicator_values", non_indicator);
    rep.count("interior_values", interior);
    rep.count("interior_and_stopped", interior_past);
    rep.count("indicator_mismatch", mismatched);
    rep.estimate("F_tau(t)", Ft, 0.0);

    const double target = pm.a_ac * Ft;
    const double frac = double(interior_past) / double(n_paths);
    const double se = detail::fraction_se(target, n_paths);
    rep.estimate("stopped_interior_fraction", frac, detail::fraction_se(frac, n_paths));
    rep.estimate("a_ac*F_tau(t)", target, 0.0);
    if (pm.a_ac == 0.0) {
        rep.criteria.push_back("a_ac = 0: every posterior value within 1e-9 of 0 or 1");
        rep.tests.push_back({"indicator_values", "P(tau<=t|zeta_t) is an indicator", "count", double(non_indicator),
                             NAN, 0.0, "none", non_indicator > 0});
        rep.verdict = non_indicator == 0 ? Verdict::Pass : Verdict::Fail;
    } else {
        rep.criteria.push_back("a_ac > 0: |fraction of {tau<=t, value in (1e-6, 1-1e-6)} - a_ac F_tau(t)| <= 4 SE");
        const double z = se > 0.0 ? (frac - target) / se : 0.0;
        const bool rej = std::abs(z) > 4.0;
        rep.tests.push_back({"interior_fraction", "P(N_t) = a_ac F_tau(t)", "z", z, two_sided_normal_p(z), 4.0,
                             "none", rej});
        rep.verdict = rej ? Verdict::Fail : Verdict::Pass;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Markov property by stratified residuals.
//
// Residual e = g(zeta_u) - E[g(zeta_u) | zeta_{t2}], with the conditional mean
// from the predictive law. Under the Markov property E[e | zeta_{t1}, zeta_{t2}]
// vanishes, so every (t1-bin, t2-stratum) cell has mean residual zero. Paths
// with zeta_{t2} in the pin set carry e = 0 and are excluded.
//
// A cell's standard error comes from the null model, sqrt(sum Var(g(zeta_u) |
// zeta_{t2} = x_i)) / n, rather than from the sample: a cell where g(zeta_u)
// has a rare large jump would otherwise show an SE near zero whenever the jump
// is missing from the sample.

struct MarkovTestOptions {
    int t1_bins = 5;
    int t2_bins = 5;
    std::size_t pilot_paths = 20000;
    std::size_t min_cell = 30;
    double alpha = 0.01;
    double power_target = 0.9;
    int table_nodes = 513;
    /// Absolute accuracy of the tabulated conditional mean; added to each cell SE.
    double formula_tolerance = 1e-8;
    std::function<double(double)> g = detail::identity;
    /// Expected outcome; defaults to Markov exactly when a_ac = 0.
    std::optional<bool> expect_markov;
};

namespace detail {

struct CellSum {
    std::size_t n = 0;
    double resid = 0.0;
    double var = 0.0;
    double effect = 0.0;

    double mean() const { return resid / double(n); }
    double se(double tol) const { return std::sqrt(var / (double(n) * double(n)) + tol * tol); }
};

}  // namespace detail

inline ExperimentReport markov_mc_test(const LevyModel& m, const LengthMeasure& lm, const PinningMeasure& pm,
                                       double t1, double t2, double u, const MarkovTestOptions& opt,
                                       std::size_t n_paths, std::uint64_t seed, int threads = 0) {
    if (!(t1 > 0.0 && t1 < t2 && t2 < u)) throw PreconditionViolation("markov_mc_test needs 0 < t1 < t2 < u");
    const bool expect_markov = opt.expect_markov.value_or(pm.a_ac == 0.0);
    const auto& g = opt.g;
    ExperimentReport rep;
    rep.experiment = "markov_mc_test";
    rep.seed = seed;
    rep.sample_size = n_paths;
    const MembershipOracle oracle(pm);
    const std::vector<double> grid{t1, t2, u};
    const QuadratureConfig qcfg = m.quad.relative_l1();

    // Pilot: bin edges, conditional-moment table range, projected power.
    struct Obs {
        double x1, x2, gu;
    };
    std::vector<Obs> pilot;
    detail::simulate_in_order(m, lm, pm, grid, opt.pilot_paths, detail::pilot_seed(seed), threads,
                              [&](std::size_t, const BridgePath& p) {
                                  if (!oracle.contains(p.values[1]))
                                      pilot.push_back({p.values[0], p.values[1], g(p.values[2])});
                              });
    if (pilot.size() < 2 * opt.min_cell) {
        rep.note("pilot run left too few paths off the pin set");
        rep.verdict = Verdict::Inconclusive;
        return rep;
    }
    std::vector<double> v1, v2;
    for (const auto& o : pilot) {
        v1.push_back(o.x1);
        v2.push_back(o.x2);
    }
    const auto e1 = detail::quantile_edges(v1, opt.t1_bins);
    const auto e2 = detail::quantile_edges(v2, opt.t2_bins);
    const int n1 = static_cast<int>(e1.size()) + 1, n2 = static_cast<int>(e2.size()) + 1;
    const auto [mn, mx] = std::minmax_element(v2.begin(), v2.end());
    const double pad = 0.1 * (*mx - *mn) + 1e-12;
    const double lo = *mn - pad, hi = *mx + pad;

    auto moment = [&](double x2, int k) {
        const auto law = predictive_law({t2, x2, false}, u, m, lm, pm);
        if (k == 1) return law.expectation(g, qcfg);
        return law.expectation([&](double y) { return g(y) * g(y); }, qcfg);
    };
    const detail::UniformTable mean_table([&](double x2) { return moment(x2, 1); }, lo, hi, opt.table_nodes, threads);
    const detail::UniformTable sq_table([&](double x2) { return moment(x2, 2); }, lo, hi, opt.table_nodes, threads);
    auto mean_at = [&](double x2) { return mean_table.covers(x2) ? mean_table(x2) : moment(x2, 1); };
    auto var_at = [&](double x2) {
        const double mu = mean_at(x2);
        const double sq = sq_table.covers(x2) ? sq_table(x2) : moment(x2, 2);
        return std::max(sq - mu * mu, 0.0);
    };

    const int cells = n1 * n2;
    auto cell_of = [&](double x1, double x2) { return detail::bin_of(e2, x2) * n1 + detail::bin_of(e1, x1); };

    // Projected power from the analytic two-time conditional mean.
    if (!expect_markov) {
        const bool projectable = lm.cdf(t1) == 0.0 && lm.cdf(u) == 1.0;
        if (!projectable) {
            rep.note("power projection needs F_tau(t1) = 0 and F_tau(u) = 1");
            rep.verdict = Verdict::Inconclusive;
            return rep;
        }
        std::vector<double> effect(pilot.size()), var(pilot.size());
        parallel_for(pilot.size(), threads, [&](std::size_t i) {
            const auto& o = pilot[i];
            effect[i] = two_time_z_expectation(g, t1, t2, o.x1, o.x2, false, m, lm, pm) - mean_at(o.x2);
            var[i] = var_at(o.x2);
        });
        std::vector<detail::CellSum> cs(static_cast<std::size_t>(cells));
        for (std::size_t i = 0; i < pilot.size(); ++i) {
            auto& c = cs[std::size_t(cell_of(pilot[i].x1, pilot[i].x2))];
            ++c.n;
            c.effect += effect[i];
            c.var += var[i];
        }
        const double zcrit = normal_upper_quantile(opt.alpha / (2.0 * cells));
        const double scale = double(n_paths) / double(opt.pilot_paths);
        double best = 0.0, best_effect = 0.0;
        for (const auto& c : cs) {
            if (double(c.n) * scale < double(opt.min_cell) || c.n == 0) continue;
            const double d = c.effect / double(c.n);
            const double nc = double(c.n) * scale;
            const double se = std::sqrt(c.var / double(c.n) / nc + opt.formula_tolerance * opt.formula_tolerance);
            const double lambda = std::abs(d) / se;
            const double power = normal_cdf(lambda - zcrit) + normal_cdf(-lambda - zcrit);
            if (power > best) {
                best = power;
                best_effect = d;
            }
        }
        rep.estimate("projected_power", best, 0.0);
        rep.estimate("projected_cell_effect", best_effect, 0.0);
        if (best < opt.power_target) {
            std::ostringstream os;
            os << "projected power " << best << " below " << opt.power_target << "; test not run";
            rep.note(os.str());
            rep.verdict = Verdict::Inconclusive;
            return rep;
        }
    }

    // Main run.
    std::vector<int> cell(n_paths, -1);
    std::vector<double> x2s(n_paths), gus(n_paths), resid(n_paths), var(n_paths);
    std::uint64_t excluded = 0;
    detail::simulate_in_order(m, lm, pm, grid, n_paths, seed, threads, [&](std::size_t i, const BridgePath& p) {
        if (oracle.contains(p.values[1])) {
            ++excluded;
            return;
        }
        cell[i] = cell_of(p.values[0], p.values[1]);
        x2s[i] = p.values[1];
        gus[i] = g(p.values[2]);
    });
    parallel_for(n_paths, threads, [&](std::size_t i) {
        if (cell[i] < 0) return;
        resid[i] = gus[i] - mean_at(x2s[i]);
        var[i] = var_at(x2s[i]);
    });
    std::vector<detail::CellSum> by_cell(static_cast<std::size_t>(cells));
    for (std::size_t i = 0; i < n_paths; ++i) {
        if (cell[i] < 0) continue;
        auto& c = by_cell[std::size_t(cell[i])];
        ++c.n;
        c.resid += resid[i];
        c.var += var[i];
    }

    int tested = 0;
    for (const auto& c : by_cell) tested += c.n >= opt.min_cell;
    rep.count("paths_in_pin_set_at_t2", excluded);
    rep.count("cells", std::uint64_t(cells));
    rep.count("cells_tested", std::uint64_t(tested));
    const double level = opt.alpha / std::max(tested, 1);
    std::ostringstream crit;
    crit << "per-cell two-sided z-test of zero mean residual (null-model SE) at " << opt.alpha
         << " family-wise (Bonferroni over " << tested << " cells); expected "
         << (expect_markov ? "no rejection" : "at least one rejection");
    rep.criteria.push_back(crit.str());

    int rejected = 0;
    for (int j = 0; j < n2; ++j) {
        int kept = 0;
        for (int i = 0; i < n1; ++i) {
            const auto& c = by_cell[std::size_t(j * n1 + i)];
            std::ostringstream name;
            name << "cell[t1=" << i << ",t2=" << j << "]";
            if (c.n < opt.min_cell) {
                rep.note(name.str() + " dropped (" + std::to_string(c.n) + " paths)");
                continue;
            }
            ++kept;
            const double se = c.se(opt.formula_tolerance);
            const double z = c.mean() / se;
            const double p = two_sided_normal_p(z);
            const bool rej = p < level;
            rejected += rej;
            rep.estimate(name.str() + ".mean_residual", c.mean(), se);
            rep.tests.push_back({name.str(), "E[g(zeta_u) - E[g(zeta_u)|zeta_t2] | cell] = 0", "z", z, p, level,
                                 "bonferroni", rej});
        }
        if (kept == 0) rep.note("stratum " + std::to_string(j) + " dropped: no populated cells");
    }
    rep.count("cells_rejected", std::uint64_t(rejected));
    rep.count("non_markov_detected", rejected > 0 ? 1 : 0);
    rep.note(std::string("non-Markov detected: ") + (rejected > 0 ? "true" : "false"));
    if (tested == 0)
        rep.verdict = Verdict::Inconclusive;
    else
        rep.verdict = (rejected > 0) == !expect_markov ? Verdict::Pass : Verdict::Fail;
    return rep;
}

// ---------------------------------------------------------------------------
// Formula against rejection-window Monte Carlo.
//
// For each accepted path the statistic is paired with the formula evaluated at
// that path's own observed state, so the window width only affects the sample
// size. The unpaired window mean is reported beside the formula value at x.

enum class FormulaTarget { TauPosterior, ZPosteriorExpectation, PredictiveLaw, TwoTimeTauPosterior, YTransition };

inline std::string to_string(FormulaTarget t) {
    switch (t) {
        case FormulaTarget::TauPosterior: return "tau_posterior";
        case FormulaTarget::ZPosteriorExpectation: return "z_posterior_expectation";
        case FormulaTarget::PredictiveLaw: return "predictive_law";
        case FormulaTarget::TwoTimeTauPosterior: return "two_time_tau_posterior";
        case FormulaTarget::YTransition: return "y_transition";
    }
    return "?";
}

inline std::optional<FormulaTarget> formula_target_from_string(const std::string& s) {
    for (auto t : {FormulaTarget::TauPosterior, FormulaTarget::ZPosteriorExpectation, FormulaTarget::PredictiveLaw,
                   FormulaTarget::TwoTimeTauPosterior, FormulaTarget::YTransition})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

struct FormulaCheckSpec {
    FormulaTarget target = FormulaTarget::TauPosterior;
    double t = NAN;   // observation time (second time for two-time targets)
    double x = NAN;   // observed state
    double t1 = NAN;  // first observation for two-time targets
    double x1 = NAN;
    double u = NAN;  // future time for predictive_law and y_transition
    double z = NAN;  // pin for y_transition; must be an atom of P_Z
    std::vector<double> half_widths{0.1, 0.05};
    std::size_t min_accepted = 500;
    double se_multiple = 3.0;
    int table_nodes = 33;
};

namespace detail {

struct FormulaStat {
    std::string name;
    std::function<double(const BridgePath&)> sample;                  // MC statistic of one path
    std::function<double(double, bool)> formula;                      // at observed state
};

}  // namespace detail

inline ExperimentReport formula_vs_mc_check(const FormulaCheckSpec& spec, const LevyModel& m, const LengthMeasure& lm,
                                            const PinningMeasure& pm, std::size_t n_paths, std::uint64_t seed,
                                            int threads = 0) {
    ExperimentReport rep;
    rep.experiment = "formula_vs_mc_check:" + to_string(spec.target);
    rep.seed = seed;
    rep.sample_size = n_paths;
    if (spec.half_widths.empty()) throw PreconditionViolation("formula_vs_mc_check needs at least one window");
    const MembershipOracle oracle(pm);
    const QuadratureConfig qcfg = m.quad.relative_l1();
    const double t = spec.t, x = spec.x;
    const bool two_time = spec.target == FormulaTarget::TwoTimeTauPosterior;
    const bool needs_u = spec.target == FormulaTarget::PredictiveLaw || spec.target == FormulaTarget::YTransition;
    if (!(t > 0.0) || !std::isfinite(x)) throw PreconditionViolation("formula_vs_mc_check needs an observation");
    if (needs_u && !(spec.u > t)) throw PreconditionViolation("formula_vs_mc_check needs u > t");
    if (two_time && !(spec.t1 > 0.0 && spec.t1 < t)) throw PreconditionViolation("two-time check needs 0 < t1 < t");
    if (spec.target == FormulaTarget::YTransition && !oracle.is_atom(spec.z))
        throw PreconditionViolation("y_transition check conditions on Z = z and needs z to be a pin atom");

    std::vector<double> grid;
    if (two_time) grid = {spec.t1, t};
    else if (needs_u) grid = {t, spec.u};
    else grid = {t};
    const std::size_t k_obs = two_time ? 1 : 0;

    std::vector<detail::FormulaStat> stats;
    switch (spec.target) {
        case FormulaTarget::TauPosterior:
            stats.push_back({"P(tau<=t)", [t](const BridgePath& p) { return p.r <= t ? 1.0 : 0.0; },
                             [&](double xo, bool in) { return survival_given_state({t, xo, in}, m, lm, pm); }});
            stats.push_back({"E[tau]", [](const BridgePath& p) { return p.r; }, [&](double xo, bool in) {
                                 return tau_posterior({t, xo, in}, m, lm, pm).expectation(detail::identity, qcfg);
                             }});
            break;
        case FormulaTarget::ZPosteriorExpectation:
            stats.push_back({"E[Z]", [](const BridgePath& p) { return p.z; }, [&](double xo, bool in) {
                                 return z_posterior_expectation(detail::identity, {t, xo, in}, m, lm, pm);
                             }});
            break;
        case FormulaTarget::PredictiveLaw: {
            const double u = spec.u;
            stats.push_back({"E[zeta_u]", [](const BridgePath& p) { return p.values[1]; }, [&, u](double xo, bool in) {
                                 return predictive_law({t, xo, in}, u, m, lm, pm).expectation(detail::identity, qcfg);
                             }});
            stats.push_back({"P(zeta_u=zeta_t)",
                             [](const BridgePath& p) { return p.values[1] == p.values[0] ? 1.0 : 0.0; },
                             [&](double xo, bool in) { return survival_given_state({t, xo, in}, m, lm, pm); }});
            break;
        }
        case FormulaTarget::TwoTimeTauPosterior: {
            const double t1 = spec.t1;
            stats.push_back({"P(tau<=t2)", [t](const BridgePath& p) { return p.r <= t ? 1.0 : 0.0; }, nullptr});
            (void)t1;
            break;
        }
        case FormulaTarget::YTransition: {
            const double u = spec.u, z = spec.z;
            stats.push_back({"E[zeta_u|Z=z]", [](const BridgePath& p) { return p.values[1]; },
                             [&, u, z](double xo, bool) {
                                 return y_transition([](double, double y) { return y; }, t, u, z, xo, m, lm);
                             }});
            break;
        }
    }

    // Simulate once; windows nest, so the widest one selects candidates.
    const double hmax = *std::max_element(spec.half_widths.begin(), spec.half_widths.end());
    std::vector<BridgePath> kept;
    detail::simulate_in_order(m, lm, pm, grid, n_paths, seed, threads, [&](std::size_t, const BridgePath& p) {
        if (std::abs(p.values[k_obs] - x) >= hmax) return;
        if (two_time && std::abs(p.values[0] - spec.x1) >= hmax) return;
        if (spec.target == FormulaTarget::YTransition && p.z != spec.z) return;
        kept.push_back(p);
    });
    rep.count("candidates", kept.size());

    // Formula at each kept path's observed state.
    std::vector<std::vector<double>> fvals(stats.size(), std::vector<double>(kept.size()));
    if (two_time) {
        parallel_for(kept.size(), threads, [&](std::size_t i) {
            const auto& p = kept[i];
            fvals[0][i] = two_time_tau_posterior(spec.t1, t, p.values[0], p.values[1], oracle.contains(p.values[1]), m,
                                                 lm, pm)
                              .past_mass;
        });
    } else {
        for (std::size_t s = 0; s < stats.size(); ++s) {
            const auto& f = stats[s].formula;
            const detail::UniformTable table([&](double xo) { return f(xo, false); }, x - hmax, x + hmax,
                                             spec.table_nodes, threads);
            parallel_for(kept.size(), threads, [&](std::size_t i) {
                const double xo = kept[i].values[k_obs];
                const bool in = oracle.contains(xo);
                fvals[s][i] = in ? f(xo, true) : table(xo);
            });
        }
    }

    bool any_fail = false, any_inconclusive = false;
    for (double h : spec.half_widths) {
        std::ostringstream hs;
        hs << "h=" << h;
        std::vector<std::size_t> acc;
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto& p = kept[i];
            if (std::abs(p.values[k_obs] - x) >= h) continue;
            if (two_time && std::abs(p.values[0] - spec.x1) >= h) continue;
            acc.push_back(i);
        }
        rep.count("accepted[" + hs.str() + "]", acc.size());
        if (acc.size() < spec.min_accepted) {
            rep.note("window " + hs.str() + ": " + std::to_string(acc.size()) + " accepted paths, below " +
                     std::to_string(spec.min_accepted));
            any_inconclusive = true;
            continue;
        }
        for (std::size_t s = 0; s < stats.size(); ++s) {
            std::vector<double> d(acc.size()), raw(acc.size());
            for (std::size_t k = 0; k < acc.size(); ++k) {
                raw[k] = stats[s].sample(kept[acc[k]]);
                d[k] = raw[k] - fvals[s][acc[k]];
            }
            const auto md = mean_and_se(d);
            const auto mr = mean_and_se(raw);
            const std::string base = stats[s].name + "[" + hs.str() + "]";
            rep.estimate(base + ".mc_window_mean", mr.mean, mr.se);
            rep.estimate(base + ".paired_difference", md.mean, md.se);
            const double z = md.se > 0.0 ? md.mean / md.se : (md.mean == 0.0 ? 0.0 : INFINITY);
            const bool rej = std::abs(z) > spec.se_multiple;
            any_fail |= rej;
            rep.tests.push_back({base, "E[statistic - formula(observed state)] = 0", "z", z, two_sided_normal_p(z),
                                 spec.se_multiple, "none", rej});
        }
    }
    // Formula at the nominal observation, for reading against the window means.
    if (!two_time) {
        for (const auto& st : stats) rep.estimate(st.name + ".formula_at_x", st.formula(x, oracle.contains(x)), 0.0);
    } else {
        rep.estimate("P(tau<=t2).formula_at_x",
                     two_time_tau_posterior(spec.t1, t, spec.x1, x, oracle.contains(x), m, lm, pm).past_mass, 0.0);
    }
    std::ostringstream crit;
    crit << "paired |mean(statistic - formula)| <= " << spec.se_multiple << " SE at every window with >= "
         << spec.min_accepted << " accepted paths";
    rep.criteria.push_back(crit.str());
    rep.verdict = any_fail ? Verdict::Fail : any_inconclusive ? Verdict::Inconclusive : Verdict::Pass;
    return rep;
}

// ---------------------------------------------------------------------------
// Chapman-Kolmogorov composition of predictive laws.

struct StateGrid {
    double lo;
    double hi;
    int panels = 200;  // Gauss-Legendre panels of 10 nodes
};

namespace detail {

struct Discretized {
    std::vector<Atom> atoms;
    std::vector<double> nodes, weights;  // quadrature nodes and weights on the grid
    std::vector<double> dens;            // continuous weight times normalized density at nodes
    double captured = 0.0;               // continuous mass inside the grid
    double continuous_weight = 0.0;
};

inline void gl_nodes(const StateGrid& g, std::vector<double>& xs, std::vector<double>& ws) {
    static constexpr double kX[5] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                     0.8650633666889845, 0.9739065285171717};
    static constexpr double kW[5] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                     0.1494513491505806, 0.0666713443086881};
    xs.clear();
    ws.clear();
    const double h = (g.hi - g.lo) / g.panels;
    for (int p = 0; p < g.panels; ++p) {
        const double c = g.lo + h * (p + 0.5);
        for (int k = 4; k >= 0; --k) {
            xs.push_back(c - 0.5 * h * kX[k]);
            ws.push_back(0.5 * h * kW[k]);
        }
        for (int k = 0; k < 5; ++k) {
            xs.push_back(c + 0.5 * h * kX[k]);
            ws.push_back(0.5 * h * kW[k]);
        }
    }
}

inline Discretized discretize(const PosteriorLaw& law, const std::vector<double>& xs, const std::vector<double>& ws) {
    Discretized d;
    d.atoms = law.atoms;
    d.nodes = xs;
    d.weights = ws;
    d.continuous_weight = law.continuous_weight;
    d.dens.assign(xs.size(), 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        d.dens[i] = law.continuous_weight * law.density(xs[i]);
        d.captured += ws[i] * d.dens[i];
    }
    return d;
}

inline double atom_mass_at(const std::vector<Atom>& atoms, double v) {
    double s = 0.0;
    for (const Atom& a : atoms)
        if (a.location == v) s += a.prob;
    return s;
}

}  // namespace detail

inline ExperimentReport chapman_kolmogorov_check(const LevyModel& m, const LengthMeasure& lm,
                                                 const PinningMeasure& pm, double t, double u, double v, double x,
                                                 const StateGrid& grid, double tolerance = 1e-4, int threads = 0) {
    if (pm.a_ac != 0.0) throw PreconditionViolation("chapman_kolmogorov_check needs a_ac = 0");
    if (!(t > 0.0 && t <= u && u < v)) throw PreconditionViolation("chapman_kolmogorov_check needs 0 < t <= u < v");
    if (!(grid.hi > grid.lo) || grid.panels < 1) throw PreconditionViolation("state grid must be a nonempty interval");
    ExperimentReport rep;
    rep.experiment = "chapman_kolmogorov_check";
    const MembershipOracle oracle(pm);
    const Observation obs = Observation::at(t, x, oracle);

    if (u == t) {
        rep.estimate("total_variation", 0.0, 0.0);
        rep.note("u = t: the composition is the identity");
        rep.tests.push_back({"tv", "composed law equals direct law", "tv", 0.0, NAN, tolerance, "none", false});
        rep.verdict = Verdict::Pass;
        return rep;
    }

    auto run = [&](int panels, double& tail) {
        StateGrid g = grid;
        g.panels = panels;
        std::vector<double> xs, ws;
        detail::gl_nodes(g, xs, ws);
        const auto direct = detail::discretize(predictive_law(obs, v, m, lm, pm), xs, ws);
        const auto first = detail::discretize(predictive_law(obs, u, m, lm, pm), xs, ws);

        // Second step from each atom of the first law and from each node.
        std::vector<detail::Discretized> from_node(xs.size());
        parallel_for(xs.size(), threads, [&](std::size_t i) {
            if (first.dens[i] * ws[i] <= 1e-300) return;
            from_node[i] = detail::discretize(predictive_law(Observation::at(u, xs[i], oracle), v, m, lm, pm), xs, ws);
        });
        std::vector<detail::Discretized> from_atom;
        for (const Atom& a : first.atoms)
            from_atom.push_back(
                detail::discretize(predictive_law(Observation::at(u, a.location, oracle), v, m, lm, pm), xs, ws));

        // Composed atoms and densities.
        std::vector<Atom> atoms;
        std::vector<double> dens(xs.size(), 0.0);
        auto add_atoms = [&](const std::vector<Atom>& src, double w) {
            for (const Atom& a : src) {
                auto it = std::find_if(atoms.begin(), atoms.end(), [&](const Atom& b) { return b.location == a.location; });
                if (it == atoms.end()) atoms.push_back({a.location, w * a.prob});
                else it->prob += w * a.prob;
            }
        };
        for (std::size_t k = 0; k < first.atoms.size(); ++k) {
            add_atoms(from_atom[k].atoms, first.atoms[k].prob);
            for (std::size_t j = 0; j < xs.size(); ++j) dens[j] += first.atoms[k].prob * from_atom[k].dens[j];
        }
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double w = first.dens[i] * ws[i];
            if (w <= 1e-300) continue;
            add_atoms(from_node[i].atoms, w);
            for (std::size_t j = 0; j < xs.size(); ++j) dens[j] += w * from_node[i].dens[j];
        }

        // TV between composed and direct.
        double tv_atoms = 0.0;
        std::vector<double> locs;
        for (const Atom& a : atoms) locs.push_back(a.location);
        for (const Atom& a : direct.atoms) locs.push_back(a.location);
        std::sort(locs.begin(), locs.end());
        locs.erase(std::unique(locs.begin(), locs.end()), locs.end());
        for (double l : locs) tv_atoms += std::abs(detail::atom_mass_at(atoms, l) - detail::atom_mass_at(direct.atoms, l));
        double tv_dens = 0.0;
        for (std::size_t j = 0; j < xs.size(); ++j) tv_dens += ws[j] * std::abs(dens[j] - direct.dens[j]);
        tail = (first.continuous_weight - first.captured) + (direct.continuous_weight - direct.captured);
        return 0.5 * (tv_atoms + tv_dens);
    };

    double tail = 0.0, tail_half = 0.0;
    const double tv = run(grid.panels, tail);
    const double tv_half = run(std::max(1, grid.panels / 2), tail_half);
    const double disc = std::abs(tv - tv_half) + std::abs(tail);
    rep.estimate("total_variation", tv, 0.0);
    rep.estimate("total_variation_half_grid", tv_half, 0.0);
    rep.estimate("discretization_bound", disc, 0.0);
    rep.estimate("mass_outside_grid", tail, 0.0);
    std::ostringstream crit;
    crit << "TV(composed t->u->v, direct t->v) < " << tolerance << " (reported with discretization bound)";
    rep.criteria.push_back(crit.str());
    const bool rej = !(tv < tolerance);
    rep.tests.push_back({"tv", "composed law equals direct law", "tv", tv, NAN, tolerance, "none", rej});
    rep.verdict = rej ? Verdict::Fail : Verdict::Pass;
    return rep;
}

}  // namespace levybridge

#endif
