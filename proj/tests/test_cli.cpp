#include <doctest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icl/cli.hpp"
#include "icl/errors.hpp"

using namespace icl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("icl_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("doubles print as shortest round-trip strings") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-2.5e-300) == "-2.5e-300");
    CHECK(format_double(std::nan("")) == "nan");
    for (double x : {1.0 / 3, 0.1 + 0.2, 6.02214076e23, 5e-324}) {
        const std::string s = format_double(x);
        double back = 0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == x);
    }
    CHECK(format_cell(nlohmann::json(3)) == "3");
    CHECK(format_cell(nlohmann::json("a,b")) == "\"a,b\"");
    CHECK(format_cell(nlohmann::json("plain")) == "plain");
}

TEST_CASE("CSV rows carry seed and config hash; writes are atomic") {
    const fs::path dir = scratch("csv");
    write_csv(dir / "t.csv", {"x", "y"}, {{1, 0.5}, {"s", 2.25}}, 42, 0xabcull);
    CHECK(slurp(dir / "t.csv") == "x,y,seed,config_hash\n1,0.5,42,0000000000000abc\ns,2.25,42,0000000000000abc\n");
    CHECK(!fs::exists(dir / "t.csv.tmp"));
    CHECK_THROWS_AS(write_csv(dir / "u.csv", {"x"}, {{1, 2}}, 0, 0), DimensionMismatch);
}

TEST_CASE("config parsing, overrides and hashing") {
    const ExperimentConfig def = ExperimentConfig::from_json(nlohmann::json::object());
    CHECK(def.d == 5);
    CHECK(def.noise_var == 0.1);
    const ExperimentConfig round = ExperimentConfig::from_json(def.to_json());
    CHECK(round.hash() == def.hash());
    nlohmann::json j = def.to_json();
    j["seed"] = 7;
    CHECK(ExperimentConfig::from_json(j).hash() != def.hash());
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"n_grid", {5, 5}}}), InvalidConfig);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"bogus", 1}}), InvalidConfig);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"d", "five"}}), InvalidConfig);

    const fs::path dir = scratch("cfg");
    fs::create_directories(dir);
    std::ofstream(dir / "c.json") << R"({"d": 3, "samples": 5000})";
    const ExperimentConfig c = load_config((dir / "c.json").string(), 99u, std::nullopt);
    CHECK(c.d == 3);
    CHECK(c.seed == 99u);
    CHECK(c.samples == 5000);
    CHECK_THROWS_AS(load_config((dir / "missing.json").string(), std::nullopt, std::nullopt), InvalidConfig);
}

TEST_CASE("default theta0 is a unit vector under Sigma and depends on the seed") {
    ExperimentConfig c;
    const Vec t = c.theta0_vec();
    CHECK(t.dot(c.sigma().reconstruct() * t) == doctest::Approx(1.0).epsilon(1e-14));
    c.seed += 1;
    CHECK(c.theta0_vec() != t);
}

TEST_CASE("theory command passes its checks and is byte-reproducible") {
    ExperimentConfig c;
    c.fig1_dims = {5, 10};
    c.n_max = 30;
    const fs::path a = scratch("theory_a"), b = scratch("theory_b");
    std::ostringstream log;
    CHECK(cmd_theory(c, a, log) == 0);
    CHECK(cmd_theory(c, b, log) == 0);
    for (const char* f : {"figure1.csv", "figure2.csv", "figure3.csv"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(log.str().find("[FAIL]") == std::string::npos);
}

TEST_CASE("table1 reproduction") {
    const fs::path dir = scratch("table1");
    std::ostringstream log;
    CHECK(cmd_reproduce("table1", ExperimentConfig{}, dir, log) == 0);
    CHECK(slurp(dir / "table1.csv").find("value_ft_zs_fs") != std::string::npos);
    CHECK_THROWS_AS(cmd_reproduce("7", ExperimentConfig{}, dir, log), InvalidConfig);
}

TEST_CASE("validate command on a small budget") {
    ExperimentConfig c;
    c.samples = 20000;
    const fs::path dir = scratch("validate");
    std::ostringstream log;
    CHECK(cmd_validate(c, dir, log, 4, 2) == 0);
    CHECK(fs::exists(dir / "validate_errors.csv"));
    CHECK(fs::exists(dir / "validate_moments.csv"));
}

TEST_CASE("mc command on the default pretrained model") {
    ExperimentConfig c;
    c.samples = 20000;
    const fs::path dir = scratch("mc");
    std::ostringstream log;
    CHECK(cmd_mc("", c, dir, log) == 0);
    CHECK(slurp(dir / "mc.csv").rfind("n,theory,mc_mean,mc_se,z,seed,config_hash\n", 0) == 0);
}
