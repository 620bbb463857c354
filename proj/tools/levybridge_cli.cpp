// levybridge: batch front-end. Reads a JSON experiment config, writes CSV/JSON
// artifacts into the output directory and exits with
//   0 success, 1 validation failure, 2 numerical failure,
//   3 scientific test failure, 4 inconclusive.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "levybridge/config.hpp"
#include "levybridge/io.hpp"
#include "levybridge/levybridge.hpp"

namespace fs = std::filesystem;
using namespace levybridge;

namespace {

enum ExitCode { kOk = 0, kInvalid = 1, kNumerical = 2, kTestFailed = 3, kInconclusive = 4 };

struct Context {
    ExperimentConfig cfg;
    std::string hash;
    fs::path out;

    const json& params() const { return cfg.params; }
    double param(const char* key) const {
        if (!cfg.params.contains(key)) throw ValidationError(std::string("missing parameter params.") + key);
        return cfg.params.at(key).get<double>();
    }
    template <class T>
    T param_or(const char* key, T fallback) const {
        return cfg.params.contains(key) ? cfg.params.at(key).get<T>() : fallback;
    }
    std::ofstream open(const std::string& name) const {
        std::ofstream os(out / name, std::ios::binary);
        if (!os) throw ValidationError("cannot write " + (out / name).string());
        return os;
    }
    json stamp(json j) const {
        j["config_hash"] = hash;
        j["seed"] = cfg.seed;
        return j;
    }
};

int exit_for(Verdict v) {
    switch (v) {
        case Verdict::Pass: return kOk;
        case Verdict::Fail: return kTestFailed;
        case Verdict::Inconclusive: return kInconclusive;
    }
    return kNumerical;
}

int emit_report(const Context& ctx, const ExperimentReport& rep, const std::string& stem) {
    ctx.open(stem + ".json") << ctx.stamp(report_to_json(rep)).dump(2) << "\n";
    auto txt = ctx.open(stem + ".txt");
    txt << "config_hash: " << ctx.hash << "\n" << rep.to_text();
    std::cout << rep.to_text();
    return exit_for(rep.verdict);
}

std::function<double(double)> named_function(const std::string& name) {
    if (name == "identity") return [](double v) { return v; };
    if (name == "one") return [](double) { return 1.0; };
    if (name == "square") return [](double v) { return v * v; };
    throw ValidationError("unknown function '" + name + "' (identity, one, square)");
}

Observation observation(const Context& ctx, double t, double x) {
    if (ctx.params().contains("in_pin_set")) return {t, x, ctx.params().at("in_pin_set").get<bool>()};
    return Observation::at(t, x, MembershipOracle(ctx.cfg.pinning));
}

std::vector<double> value_grid(const Context& ctx, double lo, double hi, int points) {
    if (!ctx.params().contains("grid")) return linspace(lo, hi, points);
    const auto& g = ctx.params().at("grid");
    return linspace(g.at("lo").get<double>(), g.at("hi").get<double>(), g.value("points", points));
}

// ---------------------------------------------------------------------------

int cmd_validate(const Context& ctx) {
    const auto rep = validate_pair(ctx.cfg.model, ctx.cfg.length, ctx.cfg.pinning);
    ctx.open("validate.json") << ctx.stamp({{"ok", rep.ok}, {"violations", rep.violations}}).dump(2) << "\n";
    if (rep.ok) {
        std::cout << "valid\n";
        return kOk;
    }
    for (const auto& v : rep.violations) std::cout << "violation: " << v << "\n";
    return kInvalid;
}

int cmd_density(const Context& ctx) {
    const auto& m = ctx.cfg.model;
    const auto xs = linspace(ctx.param("x_lo"), ctx.param("x_hi"), ctx.param_or("points", 201));
    const auto ts = ctx.cfg.grid.points();
    const bool bridge = ctx.param_or<std::string>("kind", "marginal") == "bridge";
    auto os = ctx.open("density.csv");
    write_provenance_line(os, ctx.hash, ctx.cfg.seed);
    os << "t,x,density\n";
    for (double t : ts)
        for (double x : xs) {
            const double d = bridge ? bridge_transition_density(m, ctx.param_or("s", 0.0), t, ctx.param("r"),
                                                                 ctx.param_or("x_s", 0.0), x, ctx.param("z"))
                                    : marginal_density(m, t, x);
            write_csv_row(os, {t, x, d});
        }
    std::cout << "wrote " << (ctx.out / "density.csv").string() << "\n";
    return kOk;
}

int cmd_sample(const Context& ctx) {
    const auto grid = ctx.cfg.grid.points();
    auto os = ctx.open("paths.csv");
    write_provenance_line(os, ctx.hash, ctx.cfg.seed);
    const std::size_t n = ctx.cfg.n_paths;
    prepare_sampler(ctx.cfg.model);
    std::vector<BridgePath> buf;
    bool header = true;
    constexpr std::size_t chunk = 1 << 14;
    for (std::size_t first = 0; first < n; first += chunk) {
        const std::size_t len = std::min(chunk, n - first);
        buf.assign(len, BridgePath{});
        parallel_for(len, ctx.cfg.threads, [&](std::size_t i) {
            RngStream rng(ctx.cfg.seed, first + i);
            buf[i] = sample_random_bridge(ctx.cfg.model, ctx.cfg.length, ctx.cfg.pinning, grid, rng);
        });
        std::ostringstream ss;
        write_paths_csv(ss, buf, first);
        std::string s = ss.str();
        if (!header) s.erase(0, s.find('\n') + 1);
        header = false;
        os << s;
    }
    std::cout << "wrote " << n << " paths to " << (ctx.out / "paths.csv").string() << "\n";
    return kOk;
}

int cmd_posterior(const Context& ctx) {
    const auto& c = ctx.cfg;
    const double t = ctx.param("t"), x = ctx.param("x");
    const Observation obs = observation(ctx, t, x);
    const auto variable = ctx.param_or<std::string>("variable", "tau");
    json out = {{"observation", {{"t", t}, {"x", x}, {"in_pin_set", obs.in_pin_set}}}};
    if (variable == "tau") {
        const auto law = tau_posterior(obs, c.model, c.length, c.pinning);
        const double hi = c.length.density_weight > 0.0 && std::isfinite(c.length.density.upper())
                              ? c.length.density.upper()
                              : 2.0 * std::max(t, 1.0);
        out["law"] = posterior_law_to_json(law, value_grid(ctx, 0.0, hi, ctx.param_or("points", 201)));
        out["mean"] = law.expectation([](double r) { return r; }, c.model.quad.relative_l1());
    } else if (variable == "z") {
        out["mean"] = z_posterior_expectation([](double z) { return z; }, obs, c.model, c.length, c.pinning);
        out["second_moment"] =
            z_posterior_expectation([](double z) { return z * z; }, obs, c.model, c.length, c.pinning);
    } else {
        throw ValidationError("params.variable must be tau or z");
    }
    out["survival"] = survival_given_state(obs, c.model, c.length, c.pinning);
    ctx.open("posterior.json") << ctx.stamp(out).dump(2) << "\n";
    std::cout << out.dump(2) << "\n";
    return kOk;
}

int cmd_predict(const Context& ctx) {
    const auto& c = ctx.cfg;
    const double t = ctx.param("t"), x = ctx.param("x"), u = ctx.param("u");
    const auto law = predictive_law(observation(ctx, t, x), u, c.model, c.length, c.pinning);
    const auto grid = value_grid(ctx, x - 5.0, x + 5.0, ctx.param_or("points", 401));
    json out = {{"observation", {{"t", t}, {"x", x}}}, {"u", u}, {"law", posterior_law_to_json(law, grid)}};
    out["mean"] = law.expectation([](double y) { return y; }, c.model.quad.relative_l1());
    ctx.open("predict.json") << ctx.stamp(out).dump(2) << "\n";
    auto os = ctx.open("predict.csv");
    write_provenance_line(os, ctx.hash, c.seed);
    os << "y,density\n";
    for (double y : grid) write_csv_row(os, {y, law.continuous_weight * law.density(y)});
    std::cout << "mean " << out["mean"].get<double>() << ", atom mass " << law.atom_mass() << "\n";
    return kOk;
}

int cmd_stopping(const Context& ctx) {
    const auto& c = ctx.cfg;
    return emit_report(
        ctx, stopping_time_test(c.model, c.length, c.pinning, c.grid.points(), c.n_paths, c.seed, c.threads),
        "stopping_report");
}

int cmd_measurability(const Context& ctx) {
    const auto& c = ctx.cfg;
    return emit_report(ctx, measurability_test(c.model, c.length, c.pinning, ctx.param("t"), c.n_paths, c.seed, c.threads),
                       "measurability_report");
}

int cmd_markov(const Context& ctx) {
    const auto& c = ctx.cfg;
    MarkovTestOptions o;
    o.t1_bins = ctx.param_or("t1_bins", o.t1_bins);
    o.t2_bins = ctx.param_or("t2_bins", o.t2_bins);
    o.pilot_paths = ctx.param_or("pilot_paths", o.pilot_paths);
    o.min_cell = ctx.param_or("min_cell", o.min_cell);
    o.alpha = ctx.param_or("alpha", o.alpha);
    o.power_target = ctx.param_or("power_target", o.power_target);
    o.table_nodes = ctx.param_or("table_nodes", o.table_nodes);
    o.g = named_function(ctx.param_or<std::string>("g", "identity"));
    if (ctx.params().contains("expect_markov")) o.expect_markov = ctx.params().at("expect_markov").get<bool>();
    const auto rep = markov_mc_test(c.model, c.length, c.pinning, ctx.param("t1"), ctx.param("t2"), ctx.param("u"), o,
                                    c.n_paths, c.seed, c.threads);
    auto os = ctx.open("markov_cells.csv");
    write_provenance_line(os, ctx.hash, c.seed);
    os << "cell,mean_residual,se,z,p_value,rejected\n";
    for (std::size_t i = 0; i < rep.tests.size(); ++i) {
        const auto& t = rep.tests[i];
        const auto* e = rep.find_estimate(t.name + ".mean_residual");
        char buf[160];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%d\n", e->value, e->se, t.statistic, t.p_value,
                      t.rejected ? 1 : 0);
        os << '"' << t.name << '"' << buf;
    }
    return emit_report(ctx, rep, "markov_report");
}

int cmd_formula(const Context& ctx) {
    const auto& c = ctx.cfg;
    FormulaCheckSpec s;
    const auto target = formula_target_from_string(ctx.param_or<std::string>("target", ""));
    if (!target) throw ValidationError("params.target must name a conditional formula");
    s.target = *target;
    s.t = ctx.param("t");
    s.x = ctx.param("x");
    s.t1 = ctx.param_or("t1", s.t1);
    s.x1 = ctx.param_or("x1", s.x1);
    s.u = ctx.param_or("u", s.u);
    s.z = ctx.param_or("z", s.z);
    s.half_widths = ctx.param_or("half_widths", s.half_widths);
    s.min_accepted = ctx.param_or("min_accepted", s.min_accepted);
    return emit_report(ctx, formula_vs_mc_check(s, c.model, c.length, c.pinning, c.n_paths, c.seed, c.threads),
                       "formula_report");
}

int cmd_ck(const Context& ctx) {
    const auto& c = ctx.cfg;
    const StateGrid grid{ctx.param("lo"), ctx.param("hi"), ctx.param_or("panels", 200)};
    const double x = ctx.param("x"), tol = ctx.param_or("tolerance", 1e-4);
    const auto triples = ctx.params().at("triples").get<std::vector<std::vector<double>>>();
    ExperimentReport all;
    all.experiment = "chapman_kolmogorov_check";
    all.verdict = Verdict::Pass;
    for (const auto& tr : triples) {
        if (tr.size() != 3) throw ValidationError("each of params.triples needs [t, u, v]");
        const auto rep = chapman_kolmogorov_check(c.model, c.length, c.pinning, tr[0], tr[1], tr[2], x, grid, tol,
                                                  c.threads);
        std::ostringstream tag;
        tag << std::setprecision(17) << "(" << tr[0] << "," << tr[1] << "," << tr[2] << ")";
        for (auto e : rep.estimates) all.estimate(e.name + tag.str(), e.value, e.se);
        for (auto t : rep.tests) {
            t.name += tag.str();
            all.tests.push_back(t);
        }
        for (const auto& n : rep.notes) all.note(tag.str() + " " + n);
        if (all.criteria.empty()) all.criteria = rep.criteria;
        if (rep.verdict == Verdict::Fail) all.verdict = Verdict::Fail;
        else if (rep.verdict == Verdict::Inconclusive && all.verdict == Verdict::Pass) all.verdict = Verdict::Inconclusive;
    }
    return emit_report(ctx, all, "ck_report");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random-length, random-pin Levy bridges: sampling, conditional laws and Markov diagnostics"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides mc.seed)");
    app.add_option("--threads", threads, "worker cap (overrides mc.threads; default LEVYBRIDGE_THREADS or all cores)");
    app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    app.add_option("--set", sets, "override a config key: dotted.key=value (value parsed as JSON)");

    using Handler = int (*)(const Context&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands{
        {"validate", "check the model/length/pinning triple", cmd_validate},
        {"density", "tabulate marginal or bridge densities", cmd_density},
        {"sample", "write random-bridge paths as CSV", cmd_sample},
        {"posterior", "tau or Z posterior at an observation", cmd_posterior},
        {"predict", "predictive law of zeta_u given zeta_t", cmd_predict},
        {"stopping-test", "check zeta_t = Z exactly when tau <= t", cmd_stopping},
        {"measurability-test", "check whether {tau <= t} is determined by zeta_t", cmd_measurability},
        {"markov-test", "stratified Monte Carlo test of the Markov property", cmd_markov},
        {"formula-check", "compare a conditional formula with rejection Monte Carlo", cmd_formula},
        {"ck-check", "Chapman-Kolmogorov composition of predictive laws", cmd_ck},
    };
    for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        json raw = read_json_file(config_path);
        for (const auto& s : sets) apply_override(raw, s);
        if (seed) raw["mc"]["seed"] = *seed;
        if (threads) raw["mc"]["threads"] = *threads;
        if (!out_dir.empty()) raw["output"]["dir"] = out_dir;

        const std::string sub = app.get_subcommands().front()->get_name();
        Context ctx;
        ctx.cfg = sub == "validate" ? parse_config(raw) : config_from_json(raw);
        ctx.hash = hash_hex(config_hash(ctx.cfg));
        ctx.out = ctx.cfg.out_dir;
        fs::create_directories(ctx.out);
        for (const auto& [name, help, fn] : commands)
            if (name == sub) return fn(ctx);
        return kInvalid;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kInvalid;
    } catch (const PreconditionViolation& e) {
        std::cerr << "precondition violated: " << e.what() << "\n";
        return kInvalid;
    } catch (const json::exception& e) {
        std::cerr << "bad parameter: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    }
}
