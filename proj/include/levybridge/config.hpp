#ifndef LEVYBRIDGE_CONFIG_HPP
#define LEVYBRIDGE_CONFIG_HPP

// Declarative experiment configs (JSON, schema version 1).
//
// Loading normalizes the pinning weights and atom probabilities and runs
// validate_pair; to_json emits that normalized form, so load -> emit -> load
// is a fixed point and the config hash is taken over it.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levybridge/bridge_sim.hpp"
#include "levybridge/density_kernels.hpp"
#include "levybridge/errors.hpp"
#include "levybridge/measures.hpp"

namespace levybridge {

using json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
    LevyModel model;
    LengthMeasure length;
    PinningMeasure pinning;
    GridSpec grid = GridSpec::uniform(1.0, 10);
    json params = json::object();  // operation parameters, read by each subcommand
    std::size_t n_paths = 1000;
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out_dir = ".";
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline std::vector<Atom> atoms_from_json(const json& j) {
    std::vector<Atom> out;
    for (const auto& a : j) out.push_back({a.at("at").get<double>(), a.at("p").get<double>()});
    return out;
}

inline json atoms_to_json(const std::vector<Atom>& atoms) {
    json a = json::array();
    for (const Atom& x : atoms) a.push_back({{"at", x.location}, {"p", x.prob}});
    return a;
}

inline void normalize_atoms(std::vector<Atom>& atoms) {
    double s = 0.0;
    for (const Atom& a : atoms) s += a.prob;
    if (s > 0.0)
        for (Atom& a : atoms) a.prob /= s;
}

inline QuadratureConfig quad_from_json(const json& j) {
    QuadratureConfig q;
    q.rel_tol = get_or(j, "rel_tol", q.rel_tol);
    q.abs_tol = get_or(j, "abs_tol", q.abs_tol);
    q.max_subdivisions = get_or(j, "max_subdivisions", q.max_subdivisions);
    q.truncation = get_or(j, "truncation", q.truncation);
    return q;
}

inline LevyModel model_from_json(const json& j) {
    const auto family = j.at("family").get<std::string>();
    LevyModel m;
    if (family == "brownian") {
        m.family = Family::BrownianDrift;
        m.sigma = get_or(j, "sigma", 1.0);
        m.drift = get_or(j, "drift", 0.0);
    } else if (family == "gamma") {
        m.family = Family::GammaSubordinator;
        m.gamma_m = get_or(j, "m", 1.0);
        m.gamma_theta = get_or(j, "theta", 1.0);
    } else if (family == "stable") {
        m.family = Family::SymmetricStable;
        m.alpha = j.at("alpha").get<double>();
    } else {
        throw ValidationError("unknown model family '" + family + "'");
    }
    if (j.contains("quadrature")) m.quad = quad_from_json(j.at("quadrature"));
    return m;
}

inline json model_to_json(const LevyModel& m) {
    json j;
    switch (m.family) {
        case Family::BrownianDrift: j = {{"family", "brownian"}, {"sigma", m.sigma}, {"drift", m.drift}}; break;
        case Family::GammaSubordinator: j = {{"family", "gamma"}, {"m", m.gamma_m}, {"theta", m.gamma_theta}}; break;
        case Family::SymmetricStable: j = {{"family", "stable"}, {"alpha", m.alpha}}; break;
    }
    j["quadrature"] = {{"rel_tol", m.quad.rel_tol},
                       {"abs_tol", m.quad.abs_tol},
                       {"max_subdivisions", m.quad.max_subdivisions},
                       {"truncation", m.quad.truncation}};
    return j;
}

inline LengthMeasure length_from_json(const json& j) {
    LengthMeasure lm;
    if (j.contains("atoms")) lm.atoms = atoms_from_json(j.at("atoms"));
    if (j.contains("density")) {
        const auto& d = j.at("density");
        const auto kind = d.at("kind").get<std::string>();
        if (kind == "exponential") lm.density = {LengthDensity::Kind::Exponential, d.at("rate").get<double>(), 1.0};
        else if (kind == "uniform")
            lm.density = {LengthDensity::Kind::Uniform, d.at("lo").get<double>(), d.at("hi").get<double>()};
        else if (kind == "gamma")
            lm.density = {LengthDensity::Kind::Gamma, d.at("shape").get<double>(), d.at("scale").get<double>()};
        else throw ValidationError("unknown length density kind '" + kind + "'");
        lm.density_weight = get_or(d, "weight", lm.atoms.empty() ? 1.0 : 0.0);
    }
    return lm;
}

inline json length_to_json(const LengthMeasure& lm) {
    json j = {{"atoms", atoms_to_json(lm.atoms)}};
    if (lm.density_weight > 0.0) {
        const auto& d = lm.density;
        switch (d.kind) {
            case LengthDensity::Kind::Exponential: j["density"] = {{"kind", "exponential"}, {"rate", d.p1}}; break;
            case LengthDensity::Kind::Uniform: j["density"] = {{"kind", "uniform"}, {"lo", d.p1}, {"hi", d.p2}}; break;
            case LengthDensity::Kind::Gamma: j["density"] = {{"kind", "gamma"}, {"shape", d.p1}, {"scale", d.p2}}; break;
            case LengthDensity::Kind::None: break;
        }
        j["density"]["weight"] = lm.density_weight;
    }
    return j;
}

inline PinningMeasure pinning_from_json(const json& j) {
    PinningMeasure pm;
    pm.a_sd = pm.a_sc = pm.a_ac = 0.0;
    if (j.contains("atoms")) {
        const auto& a = j.at("atoms");
        pm.atoms = atoms_from_json(a.at("points"));
        normalize_atoms(pm.atoms);
        pm.a_sd = get_or(a, "weight", 1.0);
    }
    if (j.contains("cantor")) {
        const auto& c = j.at("cantor");
        CantorSpec cs;
        cs.lo = get_or(c, "lo", cs.lo);
        cs.hi = get_or(c, "hi", cs.hi);
        cs.depth = get_or(c, "depth", cs.depth);
        pm.cantor = cs;
        pm.a_sc = get_or(c, "weight", 1.0);
    }
    if (j.contains("density")) {
        const auto& d = j.at("density");
        const auto kind = d.at("kind").get<std::string>();
        if (kind == "uniform") pm.ac = AcDensity::uniform(d.at("lo").get<double>(), d.at("hi").get<double>());
        else if (kind == "normal") pm.ac = AcDensity::normal(d.at("mean").get<double>(), d.at("sd").get<double>());
        else if (kind == "table")
            pm.ac = AcDensity::table(d.at("xs").get<std::vector<double>>(), d.at("ys").get<std::vector<double>>());
        else throw ValidationError("unknown pinning density kind '" + kind + "'");
        pm.a_ac = get_or(d, "weight", 1.0);
    }
    const double s = pm.a_sd + pm.a_sc + pm.a_ac;
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("pinning weights must have a positive finite sum");
    pm.a_sd /= s;
    pm.a_sc /= s;
    pm.a_ac /= s;
    return pm;
}

inline json pinning_to_json(const PinningMeasure& pm) {
    json j = json::object();
    if (pm.a_sd > 0.0) j["atoms"] = {{"weight", pm.a_sd}, {"points", atoms_to_json(pm.atoms)}};
    if (pm.a_sc > 0.0 && pm.cantor)
        j["cantor"] = {{"weight", pm.a_sc}, {"lo", pm.cantor->lo}, {"hi", pm.cantor->hi}, {"depth", pm.cantor->depth}};
    if (pm.a_ac > 0.0) {
        const auto& d = pm.ac;
        switch (d.kind) {
            case AcDensity::Kind::Uniform: j["density"] = {{"kind", "uniform"}, {"lo", d.p1}, {"hi", d.p2}}; break;
            case AcDensity::Kind::Normal: j["density"] = {{"kind", "normal"}, {"mean", d.p1}, {"sd", d.p2}}; break;
            case AcDensity::Kind::Table: j["density"] = {{"kind", "table"}, {"xs", d.xs}, {"ys", d.ys}}; break;
            case AcDensity::Kind::None: break;
        }
        j["density"]["weight"] = pm.a_ac;
    }
    return j;
}

inline GridSpec grid_from_json(const json& j) {
    if (j.contains("times")) return GridSpec::explicit_times(j.at("times").get<std::vector<double>>());
    return GridSpec::uniform(j.at("horizon").get<double>(), j.at("steps").get<int>());
}

inline json grid_to_json(const GridSpec& g) {
    if (!g.times.empty()) return {{"times", g.times}};
    return {{"horizon", g.horizon}, {"steps", g.steps}};
}

}  // namespace detail

inline json config_to_json(const ExperimentConfig& c) {
    return {{"schema_version", kConfigSchemaVersion},
            {"model", detail::model_to_json(c.model)},
            {"length", detail::length_to_json(c.length)},
            {"pinning", detail::pinning_to_json(c.pinning)},
            {"grid", detail::grid_to_json(c.grid)},
            {"params", c.params},
            {"mc", {{"n_paths", c.n_paths}, {"seed", c.seed}, {"threads", c.threads}}},
            {"output", {{"dir", c.out_dir}}}};
}

/// Parses without the cross-checks of validate_pair; shape errors raise ValidationError.
inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != kConfigSchemaVersion)
            throw ValidationError("unsupported schema_version " + std::to_string(version));
        c.model = detail::model_from_json(j.at("model"));
        c.length = detail::length_from_json(j.at("length"));
        c.pinning = detail::pinning_from_json(j.at("pinning"));
        if (j.contains("grid")) c.grid = detail::grid_from_json(j.at("grid"));
        if (j.contains("params")) c.params = j.at("params");
        if (j.contains("mc")) {
            const auto& mc = j.at("mc");
            c.n_paths = detail::get_or<std::size_t>(mc, "n_paths", c.n_paths);
            c.seed = detail::get_or<std::uint64_t>(mc, "seed", c.seed);
            c.threads = detail::get_or(mc, "threads", c.threads);
        }
        if (j.contains("output")) c.out_dir = detail::get_or<std::string>(j.at("output"), "dir", c.out_dir);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

/// parse_config followed by validate_pair; violations raise ValidationError.
inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c = parse_config(j);
    const auto rep = validate_pair(c.model, c.length, c.pinning);
    if (!rep.ok) {
        std::string msg = "config fails validation:";
        for (const auto& v : rep.violations) msg += "\n  " + v;
        throw ValidationError(msg);
    }
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

/// Sets the dotted key (e.g. "mc.n_paths") to value, parsed as JSON when it
/// parses and kept as a string otherwise.
inline void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    std::string ptr;
    std::istringstream ks(key);
    for (std::string part; std::getline(ks, part, '.');) ptr += "/" + part;
    j[json::json_pointer(ptr)] = value;
}

/// FNV-1a over the canonical dump of the normalized config. The output
/// directory and thread count are left out: they do not change any result.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    json j = config_to_json(c);
    j.erase("output");
    j["mc"].erase("threads");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace levybridge

#endif
