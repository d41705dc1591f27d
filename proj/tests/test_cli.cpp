#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "kmf/cli.hpp"
#include "kmf/geometry.hpp"

using namespace kmf;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int status = run_command(args, out, err);
    return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("kmf_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config text round-trips") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int k = 0; k < 100; ++k) {
        SolverConfig c;
        c.mach = u(rng) * 3.0;
        c.aoa_deg = u(rng) * 10.0 - 5.0;
        c.gamma = 1.0 + u(rng);
        c.cfl = u(rng);
        c.n_outer = 1 + k;
        c.n_inner = 1 + k % 4;
        c.mode = k % 2 ? ExecutionMode::split4 : ExecutionMode::fused;
        c.threads = 1 + k % 8;
        if (k % 3) c.convergence_tol = u(rng) * 1e-6;
        CHECK(parse_config_text(format_config(c)) == c);
    }
}

TEST_CASE("config parsing: comments, defaults and errors") {
    const SolverConfig c = parse_config_text("# desk run\n\nmach = 0.5   # subsonic\n  cfl=0.3\n");
    CHECK(c.mach == 0.5);
    CHECK(c.cfl == 0.3);
    CHECK(c.n_inner == SolverConfig{}.n_inner);
    CHECK_FALSE(parse_config_text("convergence_tol = none\n").convergence_tol);
    try {
        parse_config_text("mach = 0.5\nspeed = 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_config_text("mach 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("n_outer = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("cfl = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("mode = gpu\n"), ConfigError);
}

TEST_CASE("usage errors exit nonzero; help exits zero") {
    CHECK(run({}).status != 0);
    CHECK(run({"frobnicate"}).status != 0);
    CHECK(run({"solve", "--cfl", "abc"}).status != 0);
    const Run help = run({"solve", "--help"});
    CHECK(help.status == 0);
    CHECK(help.out.find("--inner-iters") != std::string::npos);
    CHECK(help.out.find("[0.63]") != std::string::npos);
    CHECK(help.out.find("KMF_THREADS") != std::string::npos);
}

TEST_CASE("generate and info") {
    const fs::path dir = scratch("gen");
    const Run g = run({"generate", "--chord-points", "40", "--layers", "10", "--out", (dir / "n.grid").string()});
    CHECK(g.status == 0);
    CHECK(g.out.find("400 points") != std::string::npos);
    const PointCloud c = read_point_cloud((dir / "n.grid").string());
    CHECK(c.size() == 400);

    const Run b = run({"generate", "--kind", "lattice", "--nx", "8", "--ny", "5", "--out", (dir / "l.kmf").string()});
    CHECK(b.status == 0);
    CHECK(read_point_cloud((dir / "l.kmf").string()).size() == 40);

    const Run i = run({"info", "--grid", (dir / "l.kmf").string()});
    CHECK(i.status == 0);
    CHECK(i.out.find("points 40") != std::string::npos);
    CHECK(run({"generate", "--kind", "hex", "--out", (dir / "x").string()}).status != 0);
}

TEST_CASE("solve writes outputs and echoes a reparsable config") {
    const fs::path dir = scratch("solve");
    run({"generate", "--kind", "lattice", "--nx", "12", "--ny", "12", "--out", (dir / "l.grid").string()});
    const Run r = run({"solve", "--grid", (dir / "l.grid").string(), "--iters", "3", "--mach", "0.5", "--out",
                       (dir / "o").string()});
    INFO(r.err);
    REQUIRE(r.status == 0);
    CHECK(r.out.rfind("solve: 144 points, 3 iterations", 0) == 0);
    for (const char* f : {"solution.csv", "history.csv", "surface.csv", "config.txt"}) CHECK(fs::exists(dir / "o" / f));
    const SolverConfig echoed = read_config_file((dir / "o" / "config.txt").string());
    CHECK(echoed.mach == 0.5);
    CHECK(echoed.n_outer == 3);
    CHECK(format_config(echoed) == slurp(dir / "o" / "config.txt"));
    CHECK(slurp(dir / "o" / "history.csv").rfind("iter,residue\n1,", 0) == 0);
    CHECK(slurp(dir / "o" / "solution.csv").rfind("x,y,rho,u1,u2,p\n", 0) == 0);
}

TEST_CASE("precedence: flag over KMF_THREADS over config file over default") {
    const fs::path dir = scratch("prec");
    run({"generate", "--kind", "lattice", "--nx", "8", "--ny", "8", "--out", (dir / "l.grid").string()});
    std::ofstream(dir / "c.txt") << "mach = 0.4\ncfl = 0.3\nthreads = 3\nn_outer = 2\n";
    const auto echoed = [&](std::vector<std::string> extra) {
        std::vector<std::string> args{"solve", "--grid", (dir / "l.grid").string(), "--config",
                                      (dir / "c.txt").string(), "--out", (dir / "o").string()};
        args.insert(args.end(), extra.begin(), extra.end());
        const Run r = run(args);
        INFO(r.err);
        REQUIRE(r.status == 0);
        return read_config_file((dir / "o" / "config.txt").string());
    };
    unsetenv("KMF_THREADS");
    SolverConfig c = echoed({"--cfl", "0.25"});
    CHECK(c.mach == 0.4);
    CHECK(c.cfl == 0.25);
    CHECK(c.threads == 3);
    CHECK(c.gamma == SolverConfig{}.gamma);
    setenv("KMF_THREADS", "2", 1);
    CHECK(echoed({}).threads == 2);
    CHECK(echoed({"--threads", "4"}).threads == 4);
    unsetenv("KMF_THREADS");
}

TEST_CASE("identical manifests give identical non-timing outputs") {
    const fs::path dir = scratch("repro");
    run({"generate", "--chord-points", "40", "--layers", "12", "--far-field", "5", "--out", (dir / "n.grid").string()});
    for (const char* o : {"a", "b"}) {
        const Run r = run({"solve", "--grid", (dir / "n.grid").string(), "--iters", "4", "--threads", "2", "--out",
                           (dir / o).string()});
        REQUIRE(r.status == 0);
    }
    for (const char* f : {"solution.csv", "history.csv", "surface.csv", "config.txt"}) {
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
}

TEST_CASE("validate on a lattice passes every suite") {
    const fs::path dir = scratch("val");
    run({"generate", "--kind", "lattice", "--nx", "20", "--ny", "20", "--out", (dir / "lattice.grid").string()});
    const Run r = run({"validate", "--grid", (dir / "lattice.grid").string()});
    INFO(r.out);
    CHECK(r.status == 0);
    CHECK(r.out.find("7/7 suites passed") != std::string::npos);
}

TEST_CASE("bench writes JSON and CSV for every cell") {
    const fs::path dir = scratch("bench");
    run({"generate", "--kind", "lattice", "--nx", "10", "--ny", "10", "--out", (dir / "l.grid").string()});
    const Run r = run({"bench", "--grid", (dir / "l.grid").string(), "--modes", "fused,split4", "--threads", "1,4",
                       "--iters", "2", "--warmup", "1", "--out", (dir / "b").string()});
    INFO(r.err);
    REQUIRE(r.status == 0);
    const auto doc = nlohmann::json::parse(slurp(dir / "b" / "bench.json"));
    CHECK(doc["reports"].size() == 4);
    const std::string csv = slurp(dir / "b" / "bench.csv");
    CHECK(csv.rfind("level,points,iters,threads,mode,wall_s,rdp,speedup\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("bench exits nonzero when a cell fails") {
    const fs::path dir = scratch("benchfail");
    std::ofstream(dir / "line.grid") << "6\n0 0 0\n1 0 0\n2 0 0\n3 0 0\n4 0 0\n5 0 0\n";
    const Run r = run({"bench", "--grid", (dir / "line.grid").string(), "--iters", "2", "--out", (dir / "b").string()});
    CHECK(r.status != 0);
    CHECK(r.err.find("failed") != std::string::npos);
    CHECK(fs::exists(dir / "b" / "bench.json"));
}

TEST_CASE("runtime errors exit nonzero with a message") {
    const Run r = run({"solve", "--grid", "/nonexistent/grid", "--out", (scratch("err") / "o").string()});
    CHECK(r.status != 0);
    CHECK(r.err.find("error") != std::string::npos);
    const Run bad = run({"solve", "--cfl", "2", "--out", (scratch("err2") / "o").string()});
    CHECK(bad.status != 0);
    CHECK(bad.err.find("cfl") != std::string::npos);
}
