#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "levybridge/config.hpp"

using namespace levybridge;
namespace fs = std::filesystem;

namespace {

const std::string kCli = LEVYBRIDGE_CLI_PATH;
const std::string kConfigs = LEVYBRIDGE_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("levybridge_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

int run(const std::string& args) {
    const int status = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config(const std::string& name) { return kConfigs + "/" + name; }

}  // namespace

TEST(Cli, ValidateRejectsNegativeGammaPin) {
    const auto out = scratch("validate");
    EXPECT_EQ(run("validate --config " + config("gamma_negative_pin.json") + " --out " + out.string()), 1);
    const auto report = json::parse(slurp(out / "validate.json"));
    EXPECT_FALSE(report.at("ok").get<bool>());
    ASSERT_EQ(report.at("violations").size(), 1u);
    EXPECT_NE(report.at("violations")[0].get<std::string>().find("z=-1"), std::string::npos);
}

TEST(Cli, OtherSubcommandsRefuseInvalidConfig) {
    EXPECT_EQ(run("sample --config " + config("gamma_negative_pin.json") + " --out " + scratch("invalid").string()), 1);
}

TEST(Cli, SampleIsByteIdenticalAcrossRunsAndThreads) {
    const auto a = scratch("sample_a"), b = scratch("sample_b");
    ASSERT_EQ(run("sample --config " + config("brownian_sample.json") + " --out " + a.string()), 0);
    ASSERT_EQ(run("sample --config " + config("brownian_sample.json") + " --threads 1 --out " + b.string()), 0);
    const std::string sa = slurp(a / "paths.csv");
    EXPECT_EQ(sa, slurp(b / "paths.csv"));
    EXPECT_EQ(sa.rfind("# levybridge config_hash=", 0), 0u);
    EXPECT_NE(sa.find(" seed=42\ntime,value,r,z,path_id\n"), std::string::npos);
}

TEST(Cli, SeedFlagChangesPaths) {
    const auto a = scratch("seed_a"), b = scratch("seed_b");
    ASSERT_EQ(run("sample --config " + config("brownian_sample.json") + " --set mc.n_paths=10 --out " + a.string()), 0);
    ASSERT_EQ(run("sample --config " + config("brownian_sample.json") + " --set mc.n_paths=10 --seed 43 --out " +
                  b.string()),
              0);
    EXPECT_NE(slurp(a / "paths.csv"), slurp(b / "paths.csv"));
}

TEST(Cli, UnderpoweredWitnessIsInconclusive) {
    const auto out = scratch("underpowered");
    EXPECT_EQ(run("markov-test --config " + config("witness_non_markov.json") +
                  " --set mc.n_paths=2000 --set params.pilot_paths=4000 --set params.table_nodes=65 --out " +
                  out.string()),
              4);
    const auto report = json::parse(slurp(out / "markov_report.json"));
    EXPECT_EQ(report.at("verdict"), "inconclusive");
}

TEST(Cli, MissingParameterIsValidationFailure) {
    EXPECT_EQ(run("measurability-test --config " + config("gamma_negative_pin.json") +
                  " --set pinning.atoms.points.0.at=1.0 --out " + scratch("missing").string()),
              1);
}

TEST(Cli, UnknownSubcommandFails) { EXPECT_EQ(run("frobnicate --config " + config("brownian_sample.json")), 1); }

TEST(Config, RoundTripIsFixedPoint) {
    for (const char* name : {"brownian_sample.json", "two_atom_markov.json", "witness_non_markov.json",
                             "gamma_uniform_pin.json", "mixed_posterior.json"}) {
        const auto c1 = config_from_json(read_json_file(config(name)));
        const json j1 = config_to_json(c1);
        const auto c2 = config_from_json(j1);
        EXPECT_EQ(j1, config_to_json(c2)) << name;
        EXPECT_EQ(config_hash(c1), config_hash(c2)) << name;
    }
}

TEST(Config, PinningWeightsAreNormalized) {
    json j = read_json_file(config("brownian_sample.json"));
    j["pinning"]["atoms"]["weight"] = 2.0;
    j["pinning"]["density"]["weight"] = 2.0;
    j["pinning"]["atoms"]["points"] = json::array({{{"at", 0.0}, {"p", 3.0}}, {{"at", 1.0}, {"p", 1.0}}});
    const auto c = config_from_json(j);
    EXPECT_DOUBLE_EQ(c.pinning.a_sd, 0.5);
    EXPECT_DOUBLE_EQ(c.pinning.a_ac, 0.5);
    EXPECT_DOUBLE_EQ(c.pinning.atoms[0].prob, 0.75);
}

TEST(Config, OverridesUseDottedKeysAndJsonValues) {
    json j = read_json_file(config("brownian_sample.json"));
    apply_override(j, "mc.n_paths=17");
    apply_override(j, "model.family=gamma");
    apply_override(j, "params.list=[1,2]");
    EXPECT_EQ(j["mc"]["n_paths"], 17);
    EXPECT_EQ(j["model"]["family"], "gamma");
    EXPECT_EQ(j["params"]["list"].size(), 2u);
    EXPECT_THROW(apply_override(j, "novalue"), ValidationError);
}

TEST(Config, RejectsUnknownSchemaVersion) {
    json j = read_json_file(config("brownian_sample.json"));
    j["schema_version"] = 2;
    EXPECT_THROW(config_from_json(j), ValidationError);
}

TEST(Config, HashIgnoresOutputAndThreads) {
    json j = read_json_file(config("brownian_sample.json"));
    const auto h = config_hash(config_from_json(j));
    j["output"]["dir"] = "elsewhere";
    j["mc"]["threads"] = 3;
    EXPECT_EQ(config_hash(config_from_json(j)), h);
    j["mc"]["seed"] = 43;
    EXPECT_NE(config_hash(config_from_json(j)), h);
}
