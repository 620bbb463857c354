#ifndef LEVYBRIDGE_IO_HPP
#define LEVYBRIDGE_IO_HPP

// JSON forms of reports and posterior laws. Non-finite numbers become null.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levybridge/conditional.hpp"
#include "levybridge/diagnostics.hpp"

namespace levybridge {

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace detail

inline nlohmann::json report_to_json(const ExperimentReport& r) {
    using nlohmann::json;
    json j = {{"experiment", r.experiment},
              {"seed", r.seed},
              {"sample_size", r.sample_size},
              {"verdict", to_string(r.verdict)},
              {"criteria", r.criteria},
              {"notes", r.notes}};
    json est = json::array(), cnt = json::array(), tst = json::array();
    for (const auto& e : r.estimates)
        est.push_back({{"name", e.name}, {"value", detail::finite_or_null(e.value)}, {"se", detail::finite_or_null(e.se)}});
    for (const auto& c : r.counts) cnt.push_back({{"name", c.name}, {"value", c.value}});
    for (const auto& t : r.tests)
        tst.push_back({{"name", t.name},
                       {"null", t.null_hypothesis},
                       {"statistic_kind", t.statistic_kind},
                       {"statistic", detail::finite_or_null(t.statistic)},
                       {"p_value", detail::finite_or_null(t.p_value)},
                       {"threshold", detail::finite_or_null(t.threshold)},
                       {"correction", t.correction},
                       {"rejected", t.rejected}});
    j["estimates"] = est;
    j["counts"] = cnt;
    j["tests"] = tst;
    return j;
}

/// Atoms plus the weighted continuous density sampled on `grid`.
inline nlohmann::json posterior_law_to_json(const PosteriorLaw& law, const std::vector<double>& grid) {
    using nlohmann::json;
    json atoms = json::array();
    for (const Atom& a : law.atoms) atoms.push_back({{"at", a.location}, {"p", a.prob}});
    std::vector<json> dens;
    dens.reserve(grid.size());
    for (double v : grid) dens.push_back(detail::finite_or_null(law.continuous_weight * law.density(v)));
    return {{"variable", law.variable},
            {"atoms", atoms},
            {"atom_mass", law.atom_mass()},
            {"continuous_weight", law.continuous_weight},
            {"past_mass", detail::finite_or_null(law.past_mass)},
            {"density", {{"grid", grid}, {"values", dens}}}};
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[std::size_t(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return v;
}

/// One CSV comment line tying an artifact to its config and seed.
inline void write_provenance_line(std::ostream& os, const std::string& config_hash, std::uint64_t seed) {
    os << "# levybridge config_hash=" << config_hash << " seed=" << seed << "\n";
}

inline void write_csv_row(std::ostream& os, const std::vector<double>& vals) {
    char buf[32];
    for (std::size_t i = 0; i < vals.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", vals[i]);
        os << (i ? "," : "") << buf;
    }
    os << "\n";
}

}  // namespace levybridge

#endif
