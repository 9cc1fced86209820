#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coqm/io.hpp"

namespace fs = std::filesystem;
using Catch::Approx;

namespace {

#ifndef COQM_CLI_PATH
#error "COQM_CLI_PATH must be defined by the build"
#endif

int run_cli(const std::string& args) {
    const std::string cmd = std::string(COQM_CLI_PATH) + " " + args + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    REQUIRE(in);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(cells);
    }
    return rows;
}

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("coqm_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("angle literals") {
    CHECK(coqm::parse_angle("0.5pi") == Approx(coqm::kPi / 2));
    CHECK(coqm::parse_angle("1.5707963") == Approx(1.5707963));
    CHECK(coqm::parse_angle("90deg") == Approx(coqm::kPi / 2));
    CHECK(coqm::parse_angle("pi") == Approx(coqm::kPi));
    CHECK(coqm::parse_angle("-0.25pi") == Approx(-coqm::kPi / 4));
    CHECK_THROWS_AS(coqm::parse_angle("90degrees"), std::exception);
    CHECK_THROWS_AS(coqm::parse_angle(""), std::exception);
}

TEST_CASE("landscape command") {
    TempDir dir("landscape");
    const int rc = run_cli("landscape --grid 41x41 --theta-range 0.25pi:0.75pi "
                           "--phi-range 0:0.6pi --out-dir " +
                           dir.path.string());
    REQUIRE(rc == 0);
    const auto rows = read_csv(dir.path / "landscape.csv");
    REQUIRE(rows.size() == 41u * 41u + 1); // header + cells
    CHECK(rows[0] == std::vector<std::string>{"theta", "phi", "R", "negativity"});

    bool op = false, neg = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double th = std::stod(rows[i][0]);
        const double ph = std::stod(rows[i][1]);
        if (std::abs(th - 0.5 * coqm::kPi) < 1e-9 && std::abs(ph - 0.15 * coqm::kPi) < 1e-9) {
            op = true;
            CHECK(std::stod(rows[i][2]) == Approx(-0.1924).margin(5e-4));
        }
        if (std::abs(th - 0.25 * coqm::kPi) < 1e-9 && ph == 0.0) {
            neg = true;
            CHECK(rows[i][2].empty());
            CHECK(std::stod(rows[i][3]) == Approx(0.1036).margin(1e-4));
        }
    }
    CHECK(op);
    CHECK(neg);
}

TEST_CASE("landscape row count for a square grid") {
    TempDir dir("landscape50");
    REQUIRE(run_cli("landscape --grid 50x50 --out-dir " + dir.path.string()) == 0);
    CHECK(read_csv(dir.path / "landscape.csv").size() == 2501);
}

TEST_CASE("estimate sample_size writes the failure-rate column") {
    TempDir dir("sizes");
    const int rc = run_cli(
        "estimate --kind sample_size --theta 0.5pi --phi 0.1pi --sizes 1e2,1e3,7e3 "
        "--trials 200 --seed 9 --out-dir " +
        dir.path.string());
    REQUIRE(rc == 0);
    const auto rows = read_csv(dir.path / "sample_size.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0][0] == "n_s");
    CHECK(std::stod(rows[1][3]) > 0.4); // heavy failures at n_s = 100
    CHECK(std::stod(rows[3][3]) < 0.05);
}

TEST_CASE("estimate theta_sweep honors clipping flags") {
    TempDir dir("sweep");
    // paper default range touches the nonpositive edges: domain error without --clip
    const int rc_noclip =
        run_cli("estimate --kind theta_sweep --points 12 --trials 2 --samples 1e3 --out-dir " +
                dir.path.string());
    CHECK(rc_noclip == 3);
    const int rc = run_cli(
        "estimate --kind theta_sweep --points 12 --trials 4 --samples 1e4 --clip --out-dir " +
        dir.path.string());
    REQUIRE(rc == 0);
    const auto rows = read_csv(dir.path / "theta_sweep.csv");
    CHECK(rows.size() > 1);
    CHECK(rows.size() < 13); // clipped points dropped
    const auto rec = nlohmann::json::parse(slurp(dir.path / "theta_sweep_run.json"));
    CHECK(rec["schema"] == "coqm-run-record-v1");
    CHECK(!rec["clipped_points"].empty());
}

TEST_CASE("estimate concentration") {
    TempDir dir("conc");
    const int rc = run_cli(
        "estimate --kind concentration --c 0.1,0.3,0.5 --samples 2e4 --seed 4 --out-dir " +
        dir.path.string());
    REQUIRE(rc == 0);
    const auto rows = read_csv(dir.path / "concentration.csv");
    REQUIRE(rows.size() == 4);
    CHECK(std::stod(rows[1][0]) == Approx(0.1));
    CHECK(std::stod(rows[3][0]) == Approx(0.5));
}

TEST_CASE("estimate depolarization") {
    TempDir dir("depol");
    const int rc = run_cli(
        "estimate --kind depolarization --lambdas 1,0.9 --samples 2e4 --trials 10 "
        "--out-dir " +
        dir.path.string());
    REQUIRE(rc == 0);
    const auto rows = read_csv(dir.path / "depolarization.csv");
    REQUIRE(rows.size() > 2);
    CHECK(rows[0][0] == "lambda");
}

TEST_CASE("byte-identical reruns and thread independence") {
    TempDir a("det_a"), b("det_b"), c("det_c");
    const std::string args =
        "estimate --kind theta_sweep --range 0.48pi:0.52pi --points 5 --trials 6 "
        "--samples 1e4 --seed 77 --clip";
    REQUIRE(run_cli(args + " --threads 1 --out-dir " + a.path.string()) == 0);
    REQUIRE(run_cli(args + " --threads 1 --out-dir " + b.path.string()) == 0);
    REQUIRE(run_cli(args + " --threads 4 --out-dir " + c.path.string()) == 0);

    auto strip_outdir = [](std::string s, const std::string& dir) {
        // the run record echoes the command line, which names the out dir
        std::size_t pos;
        while ((pos = s.find(dir)) != std::string::npos) s.erase(pos, dir.size());
        return s;
    };
    CHECK(slurp(a.path / "theta_sweep.csv") == slurp(b.path / "theta_sweep.csv"));
    CHECK(slurp(a.path / "theta_sweep.csv") == slurp(c.path / "theta_sweep.csv"));
    const auto ra = strip_outdir(slurp(a.path / "theta_sweep_run.json"), a.path.string());
    const auto rb = strip_outdir(slurp(b.path / "theta_sweep_run.json"), b.path.string());
    const auto rc2 = strip_outdir(slurp(c.path / "theta_sweep_run.json"), c.path.string());
    CHECK(ra == rb);
    CHECK(ra == rc2);
}

TEST_CASE("config file with flag override") {
    TempDir dir("cfg");
    const fs::path cfgfile = dir.path / "run.cfg";
    {
        std::ofstream out(cfgfile);
        out << "seed=5\n";
        out << "samples=1e3\n";
        out << "trials=3\n";
    }
    const int rc = run_cli("--config " + cfgfile.string() +
                           " --trials 4 estimate --kind theta_sweep --range "
                           "0.49pi:0.51pi --points 3 --clip --out-dir " +
                           dir.path.string());
    REQUIRE(rc == 0);
    const auto rec = nlohmann::json::parse(slurp(dir.path / "theta_sweep_run.json"));
    CHECK(rec["master_seed"] == 5);
    CHECK(rec["config"]["n_s"] == 1000);
    CHECK(rec["config"]["trials"] == 4); // flag wins over config
}

TEST_CASE("calibrate command") {
    TempDir dir("cal");
    using namespace coqm;

    SECTION("round trip through the CSV format") {
        const auto lp = build_lattice_prior(14, 14);
        const auto truth = ErrorModelParams::experiment();
        const auto ds = synth_dataset(lp, truth, 1000000);
        const fs::path csv = dir.path / "freq.csv";
        write_frequency_csv(csv.string(), ds);
        const fs::path out = dir.path / "fit.json";
        const int rc = run_cli("calibrate --input " + csv.string() + " --out " + out.string());
        REQUIRE(rc == 0);
        const auto j = nlohmann::json::parse(slurp(out));
        CHECK(j["params"]["xB"].get<double>() == Approx(truth.x_b).margin(2e-4));
        CHECK(j["params"]["muB"].get<double>() == Approx(truth.mu_b).margin(5e-4));
        CHECK(j["params"]["phi0"].get<double>() == Approx(truth.phi0).margin(2e-4));
        CHECK(j["converged"] == true);
    }

    SECTION("no-error dataset returns the no-error row") {
        const auto lp = build_lattice_prior(10, 10);
        const auto ds = synth_dataset(lp, ErrorModelParams::no_error(), 1000000);
        const fs::path csv = dir.path / "freq0.csv";
        write_frequency_csv(csv.string(), ds);
        const fs::path out = dir.path / "fit0.json";
        REQUIRE(run_cli("calibrate --input " + csv.string() + " --out " + out.string()) == 0);
        const auto j = nlohmann::json::parse(slurp(out));
        CHECK(std::abs(j["params"]["theta0"].get<double>()) < 1e-3);
        CHECK(std::abs(j["params"]["xA"].get<double>()) < 1e-3);
        CHECK(j["params"]["muA"].get<double>() == Approx(1.0).margin(1e-3));
        CHECK(j["params"]["thetaB"].get<double>() == Approx(kPi / 2).margin(1e-3));
    }

    SECTION("malformed CSV exits 2 with a line diagnostic") {
        const fs::path csv = dir.path / "bad.csv";
        {
            std::ofstream out(csv);
            out << "theta_s,phi_s,meas,outcome,count\n";
            out << "0.3,0.1,A,0\n"; // missing column
        }
        CHECK(run_cli("calibrate --input " + csv.string() + " --out " +
                      (dir.path / "x.json").string()) == 2);
    }

    SECTION("missing input exits 2") {
        CHECK(run_cli("calibrate --input /nonexistent.csv --out " +
                      (dir.path / "y.json").string()) == 2);
    }
}

TEST_CASE("invalid configuration exits 2") {
    TempDir dir("bad");
    CHECK(run_cli("estimate --kind nonsense --out-dir " + dir.path.string()) == 2);
    CHECK(run_cli("landscape --grid 50 --out-dir " + dir.path.string()) == 2);
    CHECK(run_cli("estimate --kind theta_sweep --theta bogus --out-dir " +
                  dir.path.string()) == 2);
}
