#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dopo/config.hpp"
#include "dopo/io.hpp"

using namespace dopo;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("dopo_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentSpec tiny_spec() {
    ExperimentSpec spec = preset_spec("case-b-desk");
    spec.sweep = {spec.sweep[2]};
    spec.n_trajectories = 96;
    spec.sample_times = {0.0, 1.0, 2.0};
    return spec;
}

} // namespace

TEST_CASE("round-trip: parse(render(spec)) == spec for every preset") {
    for (const char* name : {"case-a", "case-b", "superposition", "case-a-desk",
                             "case-b-desk", "superposition-desk"}) {
        const ExperimentSpec spec = preset_spec(name);
        const ExperimentSpec back = parse_config(render_config(spec));
        CHECK(back == spec);
    }
}

TEST_CASE("preset expansion with overrides") {
    const auto base = parse_config(R"({"preset": "case-a"})");
    CHECK(base == case_a_spec());

    const auto scaled = parse_config(R"({"preset": "case-a", "n_trajectories": 2000})");
    ExperimentSpec expect = case_a_spec();
    expect.n_trajectories = 2000;
    CHECK(scaled == expect);

    const auto retuned =
        parse_config(R"({"preset": "case-a", "params": {"g": 0.02}})");
    CHECK(retuned.params.g == doctest::Approx(0.02));
    CHECK(retuned.params.t_f == doctest::Approx(200.0)); // other params kept
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"params": {"gama_s": 0.1}})"),
                         doctest::Contains("gama_s"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"outputs": {"series": ["nope"]}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
    CHECK_THROWS_AS(preset_spec("case-z"), ConfigError);
}

TEST_CASE("--set overrides apply to dotted paths") {
    std::string text = render_config(preset_spec("case-b-desk"));
    text = apply_set_override(text, "params.gamma_s=0.25");
    text = apply_set_override(text, "n_trajectories=17");
    text = apply_set_override(text, "sample_times=[0,1,2]");
    const auto spec = parse_config(text);
    CHECK(spec.params.gamma_s == doctest::Approx(0.25));
    CHECK(spec.n_trajectories == 17);
    CHECK(spec.sample_times == std::vector<double>{0.0, 1.0, 2.0});
    CHECK_THROWS_AS(apply_set_override(text, "no_equals_sign"), ConfigError);
}

TEST_CASE("series header is stable (golden)") {
    const auto spec = case_a_spec();
    CHECK(series_header(spec.outputs) ==
          "tau,lambda,n1,n1_se,n2,n2_se,corr_xx,corr_xx_se,corr_pp,corr_pp_se,"
          "epr_sum,epr_sum_se,discord,discord_se,var_p1,var_p1_se,var_p2,var_p2_se");
}

TEST_CASE("write_outputs produces the expected file set and vacuum row") {
    const auto dir = temp_dir("outputs");
    auto spec = tiny_spec();
    const auto result = run_experiment(spec);
    const auto files = write_outputs(result, dir);
    CHECK(fs::exists(dir / "series_gc1.csv"));
    CHECK(fs::exists(dir / "metadata.json"));

    const std::string csv = slurp(dir / "series_gc1.csv");
    std::istringstream lines(csv);
    std::string header, first_row;
    std::getline(lines, header);
    std::getline(lines, first_row);
    CHECK(header == series_header(spec.outputs));
    // vacuum row: tau=0, lambda=0, n=0, EPR sum exactly 1
    CHECK(first_row.substr(0, 4) == "0,0,");
    CHECK(first_row.find(",1,") != std::string::npos);

    const auto meta = nlohmann::json::parse(slurp(dir / "metadata.json"));
    CHECK(meta["config"]["n_trajectories"] == 96);
    CHECK(meta["discord_convention"]["selected"]["log_base"] == "natural");
    CHECK(meta["discord_convention"]["table"].size() == 4);
    fs::remove_all(dir);
}

TEST_CASE("two runs with the same seed give byte-identical CSV bodies") {
    const auto dir1 = temp_dir("det1");
    const auto dir2 = temp_dir("det2");
    const auto spec = tiny_spec();
    write_outputs(run_experiment(spec, 1), dir1);
    write_outputs(run_experiment(spec, 2), dir2);
    CHECK(slurp(dir1 / "series_gc1.csv") == slurp(dir2 / "series_gc1.csv"));
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.5, 2e-3, 3.141592653589793, -0.0, 1e300, 123456789.123456789}) {
        const std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
}

TEST_CASE("CLI end to end: run, determinism across thread counts, exit codes") {
    const char* cli = std::getenv("DOPO_CLI");
    if (!cli) return; // only meaningful under ctest
    const auto dir = temp_dir("cli");
    const std::string base = std::string("\"") + cli + "\"";
    const auto run = [&](const std::string& cmd) { return std::system(cmd.c_str()); };

    const std::string common =
        " run --preset case-b-desk --trajectories 96 --seed 7"
        " --set 'sample_times=[0,1,2]' --set 'sweep=[{\"label\":\"gc1\",\"overrides\":"
        "{\"gamma_s\":0.01,\"gamma_c\":1.0}}]'";
    const int rc1 = run("DOPO_THREADS=1 " + base + common + " --out " +
                        (dir / "t1").string() + " 2>/dev/null");
    const int rc2 = run("DOPO_THREADS=2 " + base + common + " --out " +
                        (dir / "t2").string() + " 2>/dev/null");
    CHECK(rc1 == 0);
    CHECK(rc2 == 0);
    CHECK(slurp(dir / "t1" / "series_gc1.csv") == slurp(dir / "t2" / "series_gc1.csv"));

    // config error -> exit 2
    const int rc_bad = run(base + " run --preset nope --out " + (dir / "bad").string() +
                           " 2>/dev/null");
    CHECK(WEXITSTATUS(rc_bad) == 2);

    // unwritable output directory -> exit 4
    const int rc_io = run(base + common + " --out /dev/null/nope 2>/dev/null");
    CHECK(WEXITSTATUS(rc_io) == 4);

    // distributions subcommand writes marginal files
    const int rc_dist = run(base +
                            " distributions --preset superposition-desk --trajectories 64"
                            " --seed 3 --set 'sample_times=[0,29]'"
                            " --set 'outputs.distributions.times=[29]'"
                            " --set 'outputs.distributions.grid.points=101' --out " +
                            (dir / "dist").string() + " 2>/dev/null");
    CHECK(rc_dist == 0);
    CHECK(fs::exists(dir / "dist" / "dist_p1_29.csv"));
    CHECK(fs::exists(dir / "dist" / "dist_x2_29.csv"));

    // written marginals integrate to ~1 (trapezoid over the grid column)
    {
        std::istringstream csv(slurp(dir / "dist" / "dist_p1_29.csv"));
        std::string line;
        std::getline(csv, line); // header
        std::vector<double> g, d;
        while (std::getline(csv, line)) {
            const auto comma = line.find(',');
            g.push_back(std::strtod(line.substr(0, comma).c_str(), nullptr));
            d.push_back(std::strtod(line.substr(comma + 1).c_str(), nullptr));
        }
        double integral = 0.0;
        for (std::size_t i = 1; i < g.size(); ++i)
            integral += 0.5 * (d[i] + d[i - 1]) * (g[i] - g[i - 1]);
        CHECK(integral > 0.9);
        CHECK(integral < 1.1);
    }
    fs::remove_all(dir);
}
