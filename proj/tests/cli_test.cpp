#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = ERGOLAB_CLI_PATH;
const fs::path kConfigs = ERGOLAB_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ergolab_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

struct Run {
    int code = -1;
    std::string err;
};

Run run(const std::string& command, const fs::path& config, const fs::path& out, const std::string& extra = "") {
    const fs::path err = out / "stderr.txt";
    const std::string line = kCli + " " + command + " --config " + config.string() + " --out " + out.string() + " " +
                             extra + " > /dev/null 2> " + err.string();
    const int status = std::system(line.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

json report(const fs::path& out, const std::string& command) { return json::parse(slurp(out / (command + ".json"))); }

}  // namespace

TEST(Cli, LyapunovDoublingIsMinusLogTwo) {
    const auto out = scratch("lyap");
    const auto r = run("lyapunov", kConfigs / "lyapunov_doubling.json", out);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = report(out, "lyapunov");
    EXPECT_NEAR(j.at("results").at("expansion_avg").get<double>(), -std::numbers::ln2, 1e-12);
    EXPECT_TRUE(j.at("pass").get<bool>());
    EXPECT_TRUE(fs::exists(out / "lyapunov.csv"));
    EXPECT_TRUE(json::parse(slurp(out / "lyapunov.meta.json")).contains("started_utc"));
}

TEST(Cli, StationaryQuadraticAgainstDensityOracle) {
    const auto out = scratch("stat");
    const auto r = run("stationary", kConfigs / "stationary_ulam_a2.ini", out);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = report(out, "stationary");
    EXPECT_LT(j.at("results").at("w1_to_oracle").get<double>(), 0.01);
    EXPECT_EQ(j.at("config").at("estimator").at("cells"), 16384);
}

TEST(Cli, MissingSeedIsAnError) {
    const auto out = scratch("noseed");
    spit(out / "c.json", R"({"system": {"family": "expanding_circle"}, "estimator": {"length": 1000}})");
    const auto r = run("lyapunov", out / "c.json", out);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("seed"), std::string::npos);
    EXPECT_FALSE(fs::exists(out / "lyapunov.json"));
    // a seed on the command line is enough
    EXPECT_EQ(run("lyapunov", out / "c.json", out, "--seed 4").code, 0);
    EXPECT_EQ(report(out, "lyapunov").at("config").at("seed"), 4);
}

TEST(Cli, UnknownKeysAreLineAnchored) {
    const auto out = scratch("unknown");
    spit(out / "c.ini", "seed = 1\n[system]\nfamily = expanding_circle\n[estimator]\norbits = 2\nbogus = 3\n");
    auto r = run("lyapunov", out / "c.ini", out);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("c.ini:6:"), std::string::npos) << r.err;
    spit(out / "c.json", "{\n  \"seed\": 1,\n  \"system\": {\"family\": \"expanding_circle\"},\n  \"extra\": 0\n}\n");
    r = run("lyapunov", out / "c.json", out);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("c.json:4:"), std::string::npos) << r.err;
    spit(out / "d.json", "{\n  \"seed\": 1,\n  \"system\": {\"family\": \"expanding_circle\",}\n}\n");
    r = run("lyapunov", out / "d.json", out);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("d.json:3:"), std::string::npos) << r.err;
}

TEST(Cli, ErrorsExitTwo) {
    const auto out = scratch("errors");
    spit(out / "o.json", R"({"seed": 1, "system": {"family": "expanding_circle"}, "estimator": {"oracle": "nope"}})");
    EXPECT_EQ(run("pressure", out / "o.json", out).code, 2);
    EXPECT_EQ(run("frobnicate", kConfigs / "lyapunov_doubling.json", out).code, 2);
    EXPECT_EQ(run("lyapunov", out / "missing.json", out).code, 2);
    spit(out / "s.json", R"({"seed": 1, "sweep": {"seed": 3}})");
    EXPECT_EQ(run("sweep-stability", out / "s.json", out).code, 2);
    // a command field that disagrees with the command line
    EXPECT_EQ(run("pressure", kConfigs / "lyapunov_doubling.json", out).code, 2);
}

TEST(Cli, FailedVerdictExitsOne) {
    const auto out = scratch("fail");
    spit(out / "p.json", R"({"seed": 1, "system": {"family": "expanding_circle", "params": {"d": 3}},
                              "estimator": {"oracle": "logtwo", "cells": 256}})");
    EXPECT_EQ(run("pressure", out / "p.json", out).code, 1);
    EXPECT_FALSE(report(out, "pressure").at("verdicts").at("oracle").get<bool>());
}

TEST(Cli, EveryShippedConfigPasses) {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"orbit", "orbit_quadratic.ini"},
        {"lyapunov", "lyapunov_doubling.json"},
        {"hyptimes", "hyptimes_doubling.json"},
        {"stationary", "stationary_ulam_a2.ini"},
        {"pressure", "pressure_doubling.json"},
        {"entropy", "entropy_doubling.ini"},
        {"sweep-stability", "sweep_stability.json"},
        {"sweep-semicontinuity", "sweep_semicontinuity.json"},
        {"sweep-equilibrium", "sweep_equilibrium.ini"},
        {"basins", "basins_two_sink.json"},
        {"check-classu", "classu_degree4.json"},
        {"check-nonflat", "nonflat_quadratic.ini"},
    };
    for (const auto& [command, file] : cases) {
        const auto out = scratch("all_" + command);
        const auto r = run(command, kConfigs / file, out);
        EXPECT_EQ(r.code, 0) << command << ": " << r.err;
        const auto j = report(out, command);
        EXPECT_EQ(j.at("command"), command);
        EXPECT_TRUE(j.at("config").contains("seed"));
        const std::string csv = slurp(out / (command + ".csv"));
        EXPECT_NE(csv.find("\r\n"), std::string::npos) << command;
    }
}

TEST(Cli, ReportsAreByteIdenticalAcrossRunsAndWorkers) {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    ASSERT_EQ(run("entropy", kConfigs / "entropy_doubling.ini", a, "--workers 1").code, 0);
    ASSERT_EQ(run("entropy", kConfigs / "entropy_doubling.ini", b, "--workers 3").code, 0);
    EXPECT_EQ(slurp(a / "entropy.json"), slurp(b / "entropy.json"));
    EXPECT_EQ(slurp(a / "entropy.csv"), slurp(b / "entropy.csv"));
}

TEST(Cli, ResolvedConfigReplays) {
    const auto a = scratch("replay_a");
    ASSERT_EQ(run("sweep-equilibrium", kConfigs / "sweep_equilibrium.ini", a).code, 0);
    const auto first = report(a, "sweep-equilibrium");
    const auto b = scratch("replay_b");
    spit(b / "resolved.json", first.at("config").dump());
    ASSERT_EQ(run("sweep-equilibrium", b / "resolved.json", b).code, 0) << slurp(b / "stderr.txt");
    EXPECT_EQ(first.dump(), report(b, "sweep-equilibrium").dump());
}

TEST(Cli, IniAndJsonAreEquivalent) {
    const auto a = scratch("fmt_a");
    spit(a / "c.ini",
         "command = pressure\nseed = 1\n[system]\nfamily = expanding_circle\n[system.params]\nd = 2\n"
         "[estimator]\npotential = geometric\ncells = 256\n");
    spit(a / "c.json", R"({"command": "pressure", "seed": 1,
        "system": {"family": "expanding_circle", "params": {"d": 2}},
        "estimator": {"potential": "geometric", "cells": 256}})");
    const auto b = scratch("fmt_b");
    ASSERT_EQ(run("pressure", a / "c.ini", a).code, 0);
    ASSERT_EQ(run("pressure", a / "c.json", b).code, 0);
    EXPECT_EQ(slurp(a / "pressure.json"), slurp(b / "pressure.json"));
    EXPECT_NEAR(report(a, "pressure").at("results").at("pressure").get<double>(), 0.0, 1e-8);
}

TEST(Cli, FormatFlagSelectsOutputs) {
    const auto out = scratch("format");
    ASSERT_EQ(run("pressure", kConfigs / "pressure_doubling.json", out, "--format csv").code, 0);
    EXPECT_FALSE(fs::exists(out / "pressure.json"));
    EXPECT_TRUE(fs::exists(out / "pressure.csv"));
    EXPECT_TRUE(fs::exists(out / "pressure.meta.json"));
    EXPECT_EQ(run("pressure", kConfigs / "pressure_doubling.json", out, "--format xml").code, 2);
}
