#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "dhn/csv.hpp"
#include "support.hpp"

using namespace dhn;
namespace fs = std::filesystem;

namespace {

#ifndef DHN_CLI_PATH
#define DHN_CLI_PATH "./dhn"
#endif

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DHN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("dhn_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_SUITE("cli_io") {

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli("definitely-not-a-subcommand") == 1);
    CHECK(run_cli("optimize --config missing.json") == 1); // --out missing
    CHECK(run_cli("generate --out /tmp/dhn_cli_x --layout hexagon") == 1);
}

TEST_CASE("generate, run and compare through the binary") {
    const fs::path dir = temp_dir("full");
    const std::string scen = (dir / "scen").string();
    CHECK(run_cli("generate --out " + scen +
                  " --seed 3 --users 2 --layout line --peak-total-w 200000"
                  " --candidates 6 --duration-s 1800") == 0);
    CHECK(fs::exists(fs::path(scen) / "scenario.json"));
    const std::string cfg = scen + "/scenario.json";
    CHECK(run_cli("partition --config " + cfg + " --out " + (dir / "part").string()) == 0);
    CHECK(fs::exists(dir / "part" / "partition.json"));
    CHECK(run_cli("nominal --config " + cfg + " --out " + (dir / "nom").string()) == 0);
    CHECK(run_cli("optimize --config " + cfg + " --out " + (dir / "opt").string()) == 0);
    CHECK(fs::exists(dir / "opt" / "metrics.csv"));
    CHECK(fs::exists(dir / "opt" / "cost_tables.csv"));
    CHECK(run_cli("compare --nominal " + (dir / "nom").string() + " --optimized " +
                  (dir / "opt").string() + " --out " + (dir / "cmp").string()) == 0);
    CHECK(fs::exists(dir / "cmp" / "summary.json"));
    CHECK(fs::exists(dir / "cmp" / "fig_mI.csv"));
    CHECK(fs::exists(dir / "cmp" / "fig_costs.csv"));
    fs::remove_all(dir);
}

TEST_CASE("numeric CSV round-trip is lossless") {
    test::TestRng rng(2718);
    const fs::path dir = temp_dir("csv");
    const fs::path file = dir / "roundtrip.csv";
    std::vector<double> values;
    for (int i = 0; i < 200; ++i) {
        // spread over many magnitudes, including awkward fractions
        const double v = (rng.uniform() - 0.5) *
                         std::pow(10.0, rng.uniform(-12.0, 12.0));
        values.push_back(v);
    }
    values.push_back(0.0);
    values.push_back(1.0 / 3.0);
    values.push_back(-2.2250738585072014e-308);
    {
        CsvWriter w(file.string(), {"value"});
        for (double v : values) w.row({CsvWriter::num(v)});
    }
    const CsvTable t = read_csv(file.string());
    REQUIRE(t.row_count() == values.size());
    for (size_t i = 0; i < values.size(); ++i)
        CHECK(t.number(i, "value") == values[i]); // exact, not approximate
    fs::remove_all(dir);
}

TEST_CASE("CSV parser rejects malformed tables") {
    CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), SpecError);
    const CsvTable t = parse_csv("a,b\n1,x\n");
    CHECK_THROWS_AS(t.number(0, "b"), SpecError);
    CHECK_THROWS_AS(t.cell(0, "missing"), SpecError);
}

TEST_CASE("commands write only inside their output directory") {
    const fs::path dir = temp_dir("scope");
    const fs::path cwd = dir / "cwd";
    fs::create_directories(cwd);
    const std::string scen = (dir / "scen").string();
    const std::string cmd = std::string("cd ") + cwd.string() + " && " + DHN_CLI_PATH +
                            " generate --out " + scen +
                            " --seed 1 --users 2 --layout line --duration-s 1800"
                            " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    // nothing appeared in the working directory
    CHECK(fs::is_empty(cwd));
    fs::remove_all(dir);
}

} // TEST_SUITE
