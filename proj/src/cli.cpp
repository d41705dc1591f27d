#include "kmf/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "kmf/bench.hpp"
#include "kmf/geometry.hpp"
#include "kmf/validation.hpp"

namespace kmf {

// ---------------------------------------------------------------------------
// Config files

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key, std::size_t line) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'", line);
    return d;
}

int parse_int(const std::string& v, const std::string& key, std::size_t line) {
    int i = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": not an integer: '" + v + "'", line);
    }
    return i;
}

}  // namespace

std::string format_config(const SolverConfig& c) {
    std::ostringstream out;
    out << "mach = " << fmt17(c.mach) << '\n'
        << "aoa_deg = " << fmt17(c.aoa_deg) << '\n'
        << "gamma = " << fmt17(c.gamma) << '\n'
        << "cfl = " << fmt17(c.cfl) << '\n'
        << "n_outer = " << c.n_outer << '\n'
        << "n_inner = " << c.n_inner << '\n'
        << "mode = " << to_string(c.mode) << '\n'
        << "threads = " << c.threads << '\n'
        << "convergence_tol = " << (c.convergence_tol ? fmt17(*c.convergence_tol) : std::string("none")) << '\n';
    return out.str();
}

SolverConfig parse_config(std::istream& in, SolverConfig c) {
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string text = trim(raw.substr(0, raw.find('#')));
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key == "mach") {
            c.mach = parse_double(value, key, line);
        } else if (key == "aoa_deg") {
            c.aoa_deg = parse_double(value, key, line);
        } else if (key == "gamma") {
            c.gamma = parse_double(value, key, line);
        } else if (key == "cfl") {
            c.cfl = parse_double(value, key, line);
        } else if (key == "n_outer") {
            c.n_outer = parse_int(value, key, line);
        } else if (key == "n_inner") {
            c.n_inner = parse_int(value, key, line);
        } else if (key == "threads") {
            c.threads = parse_int(value, key, line);
        } else if (key == "mode") {
            try {
                c.mode = parse_mode(value);
            } catch (const std::exception& e) {
                throw ConfigError(e.what(), line);
            }
        } else if (key == "convergence_tol") {
            if (value == "none") {
                c.convergence_tol.reset();
            } else {
                c.convergence_tol = parse_double(value, key, line);
            }
        } else {
            throw ConfigError("unknown key '" + key + "'", line);
        }
    }
    return c;
}

SolverConfig parse_config_text(const std::string& text, SolverConfig base) {
    std::istringstream in(text);
    return parse_config(in, std::move(base));
}

SolverConfig read_config_file(const std::string& path, SolverConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path, 0);
    try {
        return parse_config(in, std::move(base));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
    }
}

// ---------------------------------------------------------------------------
// Command line

namespace {

/// Solver flags; a flag overrides the config file only when given.
struct SolverFlags {
    SolverConfig defaults{};
    std::string config_path;
    double mach = defaults.mach, aoa = defaults.aoa_deg, gamma = defaults.gamma, cfl = defaults.cfl, tol = 0.0;
    int iters = defaults.n_outer, inner = defaults.n_inner, threads = defaults.threads;
    std::string mode = to_string(defaults.mode);
    std::vector<int> thread_list{defaults.threads};
    std::vector<std::string> mode_list{to_string(defaults.mode)};
    CLI::Option *o_mach{}, *o_aoa{}, *o_gamma{}, *o_cfl{}, *o_tol{}, *o_iters{}, *o_inner{}, *o_threads{}, *o_mode{};

    bool lists = false;

    void add(CLI::App* app, bool with_lists) {
        lists = with_lists;
        app->add_option("--config", config_path, "key = value config file (flags override it)");
        o_mach = app->add_option("--mach", mach, "free-stream Mach number")->capture_default_str();
        o_aoa = app->add_option("--aoa", aoa, "angle of attack in degrees")->capture_default_str();
        o_gamma = app->add_option("--gamma", gamma, "ratio of specific heats")->capture_default_str();
        o_cfl = app->add_option("--cfl", cfl, "CFL number in (0, 1]")->capture_default_str();
        o_iters = app->add_option("--iters", iters, "outer iterations N")->capture_default_str();
        o_inner = app->add_option("--inner-iters", inner, "inner q-derivative sweeps")->capture_default_str();
        o_tol = app->add_option("--tol", tol, "stop when the residue falls to this (default: run all N)");
        if (lists) {
            o_mode = app->add_option("--modes,--mode", mode_list, "execution modes, comma separated (fused, split4)")
                         ->delimiter(',')
                         ->capture_default_str();
            o_threads = app->add_option("--threads", thread_list,
                                        "thread counts, comma separated (fallback: KMF_THREADS)")
                            ->delimiter(',')
                            ->capture_default_str();
        } else {
            o_mode = app->add_option("--mode", mode, "execution mode: fused or split4")->capture_default_str();
            o_threads = app->add_option("--threads", threads, "worker threads (fallback: KMF_THREADS)")
                            ->capture_default_str();
        }
    }

    /// Flag > KMF_THREADS (threads only) > config file > default.
    SolverConfig resolve() const {
        SolverConfig c = config_path.empty() ? defaults : read_config_file(config_path, defaults);
        if (const char* env = std::getenv("KMF_THREADS"); env && !*o_threads) {
            c.threads = parse_int(trim(env), "KMF_THREADS", 0);
        }
        if (*o_mach) c.mach = mach;
        if (*o_aoa) c.aoa_deg = aoa;
        if (*o_gamma) c.gamma = gamma;
        if (*o_cfl) c.cfl = cfl;
        if (*o_iters) c.n_outer = iters;
        if (*o_inner) c.n_inner = inner;
        if (*o_tol) c.convergence_tol = tol;
        if (*o_mode) c.mode = parse_mode(lists ? mode_list.front() : mode);
        if (*o_threads) c.threads = lists ? thread_list.front() : threads;
        c.validate();
        return c;
    }

    std::vector<ExecutionMode> modes(const SolverConfig& c) const {
        if (!*o_mode) return {c.mode};
        std::vector<ExecutionMode> out;
        for (const auto& m : mode_list) out.push_back(parse_mode(m));
        return out;
    }
    std::vector<int> thread_counts(const SolverConfig& c) const {
        if (!*o_threads) return {c.threads};
        return thread_list;
    }
};

/// Grid file, or a generated NACA 0012 cloud.
struct GridFlags {
    std::string path;
    NacaParams naca{};
    std::size_t points = 0;
    CLI::Option* o_chord{};
    CLI::Option* o_layers{};
    CLI::Option* o_growth{};

    void add(CLI::App* app, bool with_path) {
        if (with_path) app->add_option("--grid", path, "grid file (text, or binary if it starts with KMF1)");
        o_chord = app->add_option("--chord-points", naca.chord_points, "generated cloud: points per ring (even)")
                      ->capture_default_str();
        o_layers = app->add_option("--layers", naca.layers, "generated cloud: rings from wall to far field")
                       ->capture_default_str();
        o_growth = app->add_option("--growth", naca.growth, "generated cloud: ring offset ratio")
                       ->capture_default_str();
        app->add_option("--far-field", naca.far_field, "generated cloud: outer radius in chords")
            ->capture_default_str();
        app->add_option("--points", points,
                        "generated cloud: target point count (chooses chord points, layers and growth)");
    }

    NacaParams params() const {
        if (points == 0) return naca;
        NacaParams p = naca_params_for_points(points, naca.far_field);
        if (*o_chord) p.chord_points = naca.chord_points;
        if (*o_layers) p.layers = naca.layers;
        if (*o_growth) p.growth = naca.growth;
        return p;
    }

    PointCloud load(std::string* label = nullptr) const {
        if (!path.empty()) {
            if (label) *label = std::filesystem::path(path).filename().string();
            return read_point_cloud(path);
        }
        PointCloud cloud = generate_naca_cloud(params());
        if (label) *label = "naca-" + std::to_string(cloud.size());
        return cloud;
    }
};

void ensure_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
}

template <class F>
void write_stream(const std::filesystem::path& path, F&& body) {
    std::ofstream f(path);
    f.precision(17);
    body(f);
    if (!f) throw std::runtime_error("cannot write " + path.string());
}

/// log10(peak / last) over the history after its maximum.
double orders_dropped(const std::vector<double>& h) {
    if (h.empty()) return 0.0;
    const auto peak = std::max_element(h.begin(), h.end());
    const double last = h.back();
    if (!(*peak > 0.0)) return 0.0;
    if (!(last > 0.0)) return std::numeric_limits<double>::infinity();
    return std::log10(*peak / last);
}

int cmd_generate(const std::string& kind, const GridFlags& grid, int nx, int ny, double h, const std::string& out_path,
                 std::ostream& out) {
    PointCloud cloud;
    if (kind == "naca") {
        cloud = generate_naca_cloud(grid.params());
    } else if (kind == "lattice") {
        cloud = generate_lattice_cloud(nx, ny, h);
    } else {
        throw CLI::ValidationError("--kind", "must be naca or lattice");
    }
    write_point_cloud(out_path, cloud);
    out << "generate: " << kind << " cloud, " << cloud.size() << " points (" << cloud.count(PointKind::interior)
        << " interior, " << cloud.count(PointKind::wall) << " wall, " << cloud.count(PointKind::outer)
        << " outer) -> " << out_path << '\n';
    return 0;
}

int cmd_info(const GridFlags& grid, const StencilOptions& stencil, std::ostream& out) {
    const PointCloud cloud = grid.load();
    const Connectivity conn = build_stencils(cloud, stencil);
    const CloudStats s = cloud_stats(cloud, &conn);
    out.precision(17);
    out << "points " << s.points << "\ninterior " << s.interior << "\nwall " << s.wall << "\nouter " << s.outer
        << "\nbbox " << s.lo.x << ' ' << s.lo.y << ' ' << s.hi.x << ' ' << s.hi.y << "\nmin_spacing "
        << s.min_spacing << "\nmax_spacing " << s.max_spacing << "\nmean_stencil " << s.mean_stencil
        << "\nmax_stencil " << s.max_stencil << "\ntangent_fallbacks " << conn.tangent_fallbacks() << '\n';
    out << "info: " << s.points << " points, mean stencil " << s.mean_stencil << '\n';
    return 0;
}

int cmd_solve(const SolverConfig& config, const GridFlags& grid, const StencilOptions& stencil,
              const std::string& out_dir, std::ostream& out, std::ostream& err) {
    const PointCloud cloud = grid.load();
    ensure_dir(out_dir);
    const std::filesystem::path dir(out_dir);
    write_file(dir / "config.txt", format_config(config));

    Solver solver(config, cloud, stencil);
    solver.set_instrumentation(true);
    const double t0 = steady_clock_seconds()();
    int status = 0;
    try {
        solver.run();
    } catch (const SolverError& e) {
        err << "solve: error at iteration " << e.iteration() << ", stage " << e.stage() << ", point " << e.point()
            << ": " << e.what() << '\n';
        status = 1;
    }
    const double wall = steady_clock_seconds()() - t0;
    write_stream(dir / "history.csv", [&](std::ostream& f) { write_history_csv(f, solver.history()); });
    if (status != 0) return status;

    const SurfaceReport surf = surface_report(cloud, solver.state(), config);
    write_stream(dir / "solution.csv", [&](std::ostream& f) { write_solution_csv(f, cloud, solver.state()); });
    write_stream(dir / "surface.csv", [&](std::ostream& f) { write_surface_csv(f, cloud, surf); });

    const auto& h = solver.history();
    out.precision(17);
    out << "solve: " << cloud.size() << " points, " << h.size() << " iterations, residue "
        << (h.empty() ? 0.0 : h.back()) << " (" << orders_dropped(h) << " orders below peak), lift " << surf.lift
        << ", drag " << surf.drag << ", wall mass flux " << surf.net_mass_flux << ", " << wall << " s -> "
        << out_dir << '\n';
    return 0;
}

int cmd_bench(const SolverFlags& flags, const SolverConfig& config, const GridFlags& grid,
              const std::vector<std::size_t>& levels, const TimedRunOptions& options, bool overhead,
              const std::string& out_dir, std::ostream& out, std::ostream& err) {
    SweepPlan plan;
    plan.modes = flags.modes(config);
    plan.threads = flags.thread_counts(config);
    for (int t : plan.threads) {
        if (t < 1) throw CLI::ValidationError("--threads", "thread counts must be positive");
    }
    if (levels.empty()) {
        SweepLevel level;
        level.cloud = grid.load(&level.label);
        plan.levels.push_back(std::move(level));
    } else {
        for (std::size_t target : levels) {
            SweepLevel level;
            level.cloud = generate_naca_cloud(naca_params_for_points(target, grid.naca.far_field));
            level.label = "naca-" + std::to_string(level.cloud.size());
            plan.levels.push_back(std::move(level));
        }
    }
    const SweepResult result = sweep(config, plan, options);

    ensure_dir(out_dir);
    const std::filesystem::path dir(out_dir);
    write_file(dir / "bench.json", reports_to_json(result.reports) + "\n");
    write_stream(dir / "bench.csv", [&](std::ostream& f) { write_reports_csv(f, result.reports); });

    out.precision(17);
    for (const BenchmarkReport& r : result.reports) {
        if (r.ok) {
            out << report_csv_row(r) << ", dominant stage " << stage_names[r.dominant_stage()] << '\n';
        } else {
            err << "bench: cell " << r.level << " mode " << to_string(r.mode()) << " threads " << r.threads()
                << " failed: " << r.error << '\n';
        }
    }
    bool ok = result.all_ok();
    if (overhead) {
        const OverheadMeasurement m = instrumentation_overhead(config, plan.levels.front().cloud, 5, options.stencil);
        out << "bench: instrumentation overhead " << m.overhead() * 100.0 << " % (plain " << m.plain_seconds
            << " s, instrumented " << m.instrumented_seconds << " s)\n";
        if (!(m.overhead() <= 0.02)) ok = false;
    }
    const auto failed = std::count_if(result.reports.begin(), result.reports.end(),
                                      [](const BenchmarkReport& r) { return !r.ok; });
    out << "bench: " << result.reports.size() << " cells, " << failed << " failed -> " << out_dir << '\n';
    return ok ? 0 : 1;
}

int cmd_validate(const SolverConfig& config, const GridFlags& grid, const StencilOptions& stencil,
                 std::uint64_t seed, std::ostream& out) {
    const PointCloud cloud = grid.load();
    const Connectivity conn = build_stencils(cloud, stencil);
    std::vector<SuiteResult> results;
    results.push_back(moment_suite(50, seed, 1e-8, config.gamma));
    results.push_back(split_flux_suite(50, seed + 1, 1e-8, 1e-13, config.gamma));
    results.push_back(q_roundtrip_suite(1000, seed + 2, 1e-13, config.gamma));
    results.push_back(k_exactness_suite(100, seed + 3, 1e-10));
    results.push_back(k_exactness_suite(cloud, conn, seed + 4, 1e-10));
    results.push_back(free_stream_suite(cloud, conn, config, 1e-12));
    results.push_back(mode_equivalence_suite(cloud, conn, config, seed + 5, 1e-14));
    std::size_t failed = 0;
    for (const SuiteResult& r : results) {
        out << r.summary() << '\n';
        if (!r.passed) ++failed;
    }
    out << "validate: " << results.size() - failed << "/" << results.size() << " suites passed on "
        << cloud.size() << " points\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"kmf: meshfree q-LSKUM solver for 2D compressible inviscid flow"};
    app.require_subcommand(1);

    StencilOptions stencil{};
    const auto add_stencil = [&](CLI::App* sub) {
        sub->add_option("--radius", stencil.radius, "stencil radius (0 selects k-nearest)")->capture_default_str();
        sub->add_option("--knn", stencil.k, "k-nearest stencil size")->capture_default_str();
    };

    // generate
    CLI::App* gen = app.add_subcommand("generate", "write a NACA 0012 or lattice point cloud");
    std::string gen_kind = "naca", gen_out;
    int nx = 50, ny = 50;
    double h = 0.02;
    GridFlags gen_grid;
    gen->add_option("--kind", gen_kind, "naca or lattice")->capture_default_str();
    gen_grid.add(gen, false);
    gen->add_option("--nx", nx, "lattice points along x")->capture_default_str();
    gen->add_option("--ny", ny, "lattice points along y")->capture_default_str();
    gen->add_option("--spacing", h, "lattice spacing")->capture_default_str();
    gen->add_option("--out", gen_out, "output grid path (.kmf selects binary)")->required();

    // solve
    CLI::App* sol = app.add_subcommand("solve", "run the solver and write solution, history and surface CSVs");
    SolverFlags sol_flags;
    GridFlags sol_grid;
    std::string sol_out = "kmf_out";
    sol_flags.add(sol, false);
    sol_grid.add(sol, true);
    add_stencil(sol);
    sol->add_option("--out", sol_out, "output directory")->capture_default_str();

    // bench
    CLI::App* ben = app.add_subcommand("bench", "timed runs over modes, thread counts and point levels");
    SolverFlags ben_flags;
    GridFlags ben_grid;
    std::string ben_out = "kmf_bench";
    std::vector<std::size_t> levels;
    TimedRunOptions ben_opts;
    bool overhead = false;
    ben_flags.add(ben, true);
    ben_grid.add(ben, true);
    add_stencil(ben);
    ben->add_option("--levels", levels, "generated point levels, comma separated (e.g. 2500,10000,40000)")
        ->delimiter(',');
    ben->add_option("--warmup", ben_opts.warmup, "untimed warm-up iterations")->capture_default_str();
    ben->add_option("--notes", ben_opts.notes, "free-form text stored in the report");
    ben->add_flag("--overhead", overhead, "also measure instrumentation overhead (fails above 2%)");
    ben->add_option("--out", ben_out, "output directory for bench.json and bench.csv")->capture_default_str();

    // validate
    CLI::App* val = app.add_subcommand("validate", "run the oracle and invariant suites on a cloud");
    SolverFlags val_flags;
    GridFlags val_grid;
    std::uint64_t seed = 20240101;
    val_flags.add(val, false);
    val_grid.add(val, true);
    add_stencil(val);
    val->add_option("--seed", seed, "random seed")->capture_default_str();

    // info
    CLI::App* inf = app.add_subcommand("info", "grid and stencil statistics");
    GridFlags inf_grid;
    inf_grid.add(inf, true);
    add_stencil(inf);

    std::vector<const char*> argv{"kmf"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen) return cmd_generate(gen_kind, gen_grid, nx, ny, h, gen_out, out);
        if (*inf) return cmd_info(inf_grid, stencil, out);
        if (*sol) return cmd_solve(sol_flags.resolve(), sol_grid, stencil, sol_out, out, err);
        if (*ben) {
            const SolverConfig c = ben_flags.resolve();
            return cmd_bench(ben_flags, c, ben_grid, levels, ben_opts, overhead, ben_out, out, err);
        }
        if (*val) return cmd_validate(val_flags.resolve(), val_grid, stencil, seed, out);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    } catch (const StencilDeficiency& e) {
        err << "error: " << e.what() << '\n';
        for (std::size_t i = 0; i < std::min<std::size_t>(e.entries.size(), 10); ++i) {
            const auto& en = e.entries[i];
            err << "  point " << en.point << " stencil " << to_string(en.kind) << " size " << en.size << " det "
                << en.det << '\n';
        }
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

int run_command(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_command(args, std::cout, std::cerr);
}

}  // namespace kmf
