#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "kmf/solver.hpp"
#include "kmf/validation.hpp"

using namespace kmf;

namespace {

/// Lattice whose bottom row is a flat wall with normal +y.
PointCloud flat_plate(int nx, int ny, double h) {
    PointCloud c = generate_lattice_cloud(nx, ny, h);
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.position[i].y == 0.0) {
            c.kind[i] = PointKind::wall;
            c.normal[i] = {0.0, 1.0};
        }
    }
    return c;
}

double max_abs(const FieldBlock4& r, std::size_t p) {
    double m = 0.0;
    for (std::size_t c = 0; c < 4; ++c) m = std::max(m, std::fabs(r.at(c, p)));
    return m;
}

/// 1D first-order KFVS mass residual on a uniform grid:
/// (G+_i - G+_{i-1}) / h + (G-_{i+1} - G-_i) / h with
/// G+- = rho (u A+- +- exp(-s^2) / (2 sqrt(pi beta))), A+- = erfc(-+s) / 2.
std::vector<double> kfvs_1d_mass_residual(const std::vector<double>& rho, double u, double p, double h) {
    const auto g = [&](double r, int sign) {
        const double beta = r / (2.0 * p);
        const double s = u * std::sqrt(beta);
        const double a = 0.5 * std::erfc(-sign * s);
        return r * (u * a + sign * std::exp(-s * s) / (2.0 * std::sqrt(std::numbers::pi * beta)));
    };
    std::vector<double> out(rho.size(), 0.0);
    for (std::size_t i = 1; i + 1 < rho.size(); ++i) {
        out[i] = (g(rho[i], 1) - g(rho[i - 1], 1)) / h + (g(rho[i + 1], -1) - g(rho[i], -1)) / h;
    }
    return out;
}

SolverConfig short_config(int iters) {
    SolverConfig c;
    c.n_outer = iters;
    return c;
}

}  // namespace

TEST_CASE("config validation") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    c.cfl = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.cfl = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.mach = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.n_outer = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.n_inner = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.threads = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_mode("split4") == ExecutionMode::split4);
    CHECK_THROWS(parse_mode("fast"));
}

TEST_CASE("free stream follows the nondimensionalisation") {
    SolverConfig c;
    c.mach = 0.5;
    c.aoa_deg = 30.0;
    const Primitives fs = free_stream(c);
    CHECK(fs.rho == 1.0);
    CHECK(fs.p == doctest::Approx(1.0 / 1.4).epsilon(1e-15));
    CHECK(sound_speed(fs) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fs.u1 == doctest::Approx(0.5 * std::sqrt(3.0) / 2.0).epsilon(1e-15));
    CHECK(fs.u2 == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("local timestep examples") {
    const PointCloud c = generate_lattice_cloud(6, 6, 0.01);
    const Connectivity conn = build_stencils(c);
    const PrimitiveField still(c.size(), Primitives{1.0, 0.0, 0.0, 1.0 / 1.4});
    const auto dt = local_timestep(still, conn, 0.2);
    for (double d : dt) CHECK(d == doctest::Approx(0.002).epsilon(1e-14));
    const auto dt2 = local_timestep(still, conn, 0.4);
    for (std::size_t i = 0; i < dt.size(); ++i) CHECK(dt2[i] == doctest::Approx(2.0 * dt[i]).epsilon(1e-15));

    const PrimitiveField moving(c.size(), free_stream(SolverConfig{}));
    const auto dt3 = local_timestep(moving, conn, 0.2);
    for (double d : dt3) CHECK(d == doctest::Approx(dt3.front()).epsilon(1e-14));
}

TEST_CASE("uniform free stream: zero residual on a lattice, interior points of an airfoil cloud") {
    SolverConfig cfg;
    const PointCloud lat = generate_lattice_cloud(20, 20, 0.05);
    const SuiteResult r = free_stream_suite(lat, build_stencils(lat), cfg, 1e-12);
    INFO(r.summary());
    CHECK(r.passed);

    const PointCloud naca = generate_naca_cloud({60, 20, 1.1, 6.0});
    Solver solver(cfg, naca);
    const FieldBlock4 res = solver.current_residual();
    for (std::size_t p = 0; p < naca.size(); ++p) {
        if (naca.kind[p] != PointKind::wall) CHECK(max_abs(res, p) <= 1e-12);
    }
}

TEST_CASE("fused and split4 residuals are bit-identical") {
    for (const PointCloud& c : {generate_naca_cloud({60, 20, 1.1, 6.0}), generate_lattice_cloud(30, 30, 0.05)}) {
        const SuiteResult r = mode_equivalence_suite(c, build_stencils(c), SolverConfig{}, 77, 0.0);
        INFO(r.summary());
        CHECK(r.passed);
    }
}

TEST_CASE("wall with exactly tangent flow has zero residual") {
    const PointCloud c = flat_plate(20, 12, 0.05);
    SolverConfig cfg;
    cfg.aoa_deg = 0.0;
    Solver solver(cfg, c);
    const FieldBlock4 r = solver.current_residual();
    int walls = 0;
    for (std::size_t p = 0; p < c.size(); ++p) {
        if (c.kind[p] != PointKind::wall) continue;
        ++walls;
        CHECK(std::fabs(r.at(0, p)) <= 1e-10);
        CHECK(std::fabs(r.at(2, p)) <= 1e-10);
    }
    CHECK(walls == 20);
}

TEST_CASE("wall tangency removes the normal momentum only") {
    const PointCloud c = flat_plate(5, 5, 0.1);
    PrimitiveField s(c.size(), Primitives{1.2, 0.3, 0.4, 0.8});
    FieldBlock4 u = to_conserved(s);
    const FieldBlock4 before = u;
    enforce_wall_tangency(u, c);
    for (std::size_t p = 0; p < c.size(); ++p) {
        CHECK(u.at(0, p) == before.at(0, p));
        CHECK(u.at(3, p) == before.at(3, p));
        CHECK(u.at(1, p) == before.at(1, p));
        if (c.kind[p] == PointKind::wall) {
            CHECK(u.at(2, p) == 0.0);
        } else {
            CHECK(u.at(2, p) == before.at(2, p));
        }
    }
}

TEST_CASE("outer points with free stream on both sides have zero residual") {
    const PointCloud c = generate_naca_cloud({60, 20, 1.1, 6.0});
    Solver solver(SolverConfig{}, c);
    const FieldBlock4 r = solver.current_residual();
    for (std::size_t p = 0; p < c.size(); ++p) {
        if (c.kind[p] == PointKind::outer) CHECK(max_abs(r, p) <= 1e-12);
    }
}

TEST_CASE("1D advection: a density pulse is transported downstream") {
    const int nx = 80, ny = 7;
    const double h = 0.05, u = 3.0, p = 1.0 / 1.4, x0 = 1.5, w = 0.4;
    const PointCloud c = generate_lattice_cloud(nx, ny, h);
    const auto pulse = [&](double x) {
        const double t = (x - x0) / w;
        return std::fabs(t) < 1.0 ? 1.0 + 0.2 * std::pow(std::cos(0.5 * std::numbers::pi * t), 4) : 1.0;
    };
    SolverConfig cfg;
    cfg.mach = u;
    cfg.aoa_deg = 0.0;
    PrimitiveField s(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) s.set(i, {pulse(c.position[i].x), u, 0.0, p});
    Solver solver(cfg, c);
    solver.set_state(s);
    const FieldBlock4 r = solver.current_residual();

    std::vector<double> rho(nx), got(nx);
    const int row = ny / 2;
    for (int i = 0; i < nx; ++i) {
        rho[static_cast<std::size_t>(i)] = pulse(i * h);
        got[static_cast<std::size_t>(i)] = r.at(0, static_cast<std::size_t>(row * nx + i));
    }
    const std::vector<double> ref = kfvs_1d_mass_residual(rho, u, p, h);

    double dot_gr = 0.0, gg = 0.0, rr = 0.0, peak = 0.0, upstream = 0.0;
    for (int i = 1; i < nx - 1; ++i) {
        const auto k = static_cast<std::size_t>(i);
        dot_gr += got[k] * ref[k];
        gg += got[k] * got[k];
        rr += ref[k] * ref[k];
        peak = std::max(peak, std::fabs(got[k]));
        if (i * h < x0 - w - 3.0 * h) upstream = std::max(upstream, std::fabs(got[k]));
    }
    const double correlation = dot_gr / std::sqrt(gg * rr);
    INFO("correlation with first-order KFVS " << correlation);
    CHECK(correlation >= 0.95);
    CHECK(upstream <= 1e-3 * peak);

    // Advance and check the excess mass moves right without growing upstream.
    const auto centroid = [&](const PrimitiveField& st) {
        double m = 0.0, mx = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double e = st.get(i).rho - 1.0;
            m += e;
            mx += e * c.position[i].x;
        }
        return mx / m;
    };
    const double before = centroid(solver.state());
    for (int it = 0; it < 10; ++it) solver.step();
    CHECK(centroid(solver.state()) > before + 0.05);
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.position[i].x < x0 - w - 3.0 * h) CHECK(std::fabs(solver.state().get(i).rho - 1.0) <= 2e-4);
    }
}

TEST_CASE("state update: fixed point and single stage") {
    FieldBlock4 u(3), r(3);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < 3; ++i) u.at(c, i) = 1.0 + c + 0.1 * static_cast<double>(i);
    }
    const std::vector<double> dt{0.1, 0.2, 0.3};
    FieldBlock4 stage = u;
    for (int s = 1; s <= 4; ++s) stage = state_update_rk(u, stage, s, dt, r);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(stage.at(c, i) - u.at(c, i)) <= 1e-15 * u.at(c, i));
    }

    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < 3; ++i) r.at(c, i) = 0.5 - static_cast<double>(c);
    }
    const FieldBlock4 one = state_update_rk(u, u, 1, dt, r);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < 3; ++i) CHECK(one.at(c, i) == u.at(c, i) - 0.5 * dt[i] * r.at(c, i));
    }
    CHECK_THROWS_AS(state_update_rk(u, u, 5, dt, r), std::invalid_argument);
}

TEST_CASE("SSP(4,3) is third order on y' = -y") {
    // Oracle: y(1) = exp(-1).
    const auto error = [](double dt) {
        FieldBlock4 y(1);
        y.at(0, 0) = 1.0;
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        const std::vector<double> dts{dt};
        for (int n = 0; n < steps; ++n) {
            FieldBlock4 stage = y;
            for (int s = 1; s <= 4; ++s) {
                FieldBlock4 r(1);
                r.at(0, 0) = stage.at(0, 0);
                stage = state_update_rk(y, stage, s, dts, r);
            }
            y = stage;
        }
        return std::fabs(y.at(0, 0) - std::exp(-1.0));
    };
    const double e1 = error(0.1), e2 = error(0.05), e3 = error(0.025);
    const double order = std::log2(e2 / e3);
    INFO("errors " << e1 << " " << e2 << " " << e3);
    CHECK(std::log2(e1 / e2) >= 2.9);
    CHECK(order >= 2.9);
}

TEST_CASE("residue norm examples") {
    FieldBlock4 a(1), b(1);
    CHECK(residue_norm(a, b) == 0.0);
    a.at(0, 0) = 3.0;
    a.at(1, 0) = 100.0;
    CHECK(residue_norm(a, b) == 3.0);

    const std::size_t n = 1000;
    FieldBlock4 x(n), y(n), xp(n), yp(n);
    for (std::size_t i = 0; i < n; ++i) {
        x.at(0, i) = std::sin(0.37 * static_cast<double>(i)) * 1e-3 * static_cast<double>(i % 17);
        y.at(0, i) = std::cos(0.11 * static_cast<double>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i * 389) % n;
        xp.at(0, j) = x.at(0, i);
        yp.at(0, j) = y.at(0, i);
    }
    CHECK(residue_norm(x, y) == residue_norm(xp, yp));
}

TEST_CASE("free-stream initialised run on a lattice stays at the fixed point") {
    const PointCloud c = generate_lattice_cloud(25, 25, 0.04);
    Solver solver(short_config(20), c);
    solver.run();
    REQUIRE(solver.history().size() == 20);
    for (double r : solver.history()) CHECK(r <= 1e-10);
}

TEST_CASE("histories do not depend on mode or thread count") {
    const PointCloud c = generate_naca_cloud({60, 20, 1.1, 6.0});
    const Connectivity conn = build_stencils(c);
    std::vector<std::vector<double>> runs;
    std::vector<PrimitiveField> states;
    for (ExecutionMode m : {ExecutionMode::fused, ExecutionMode::split4}) {
        for (int t : {1, 2, 8}) {
            SolverConfig cfg = short_config(8);
            cfg.mode = m;
            cfg.threads = t;
            Solver s(cfg, c, conn);
            s.run();
            runs.push_back(s.history());
            states.push_back(s.state());
        }
    }
    for (std::size_t k = 1; k < runs.size(); ++k) {
        CHECK(runs[k] == runs[0]);
        CHECK(states[k] == states[0]);
    }
}

TEST_CASE("convergence tolerance stops the run early") {
    const PointCloud c = generate_lattice_cloud(15, 15, 0.05);
    SolverConfig cfg = short_config(50);
    cfg.convergence_tol = 1e-6;
    Solver s(cfg, c);
    s.run();
    CHECK(s.iterations() == 1);
}

TEST_CASE("positivity loss reports iteration, stage and point") {
    const PointCloud c = generate_lattice_cloud(15, 15, 0.05);
    SolverConfig cfg = short_config(5);
    cfg.cfl = 1.0;
    PrimitiveField s(c.size(), free_stream(cfg));
    s.set(7 * 15 + 7, {1e-6, 0.63, 0.0, 1e-6});
    Solver solver(cfg, c);
    solver.set_state(s);
    try {
        solver.run();
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(e.iteration() >= 1);
        CHECK(!e.stage().empty());
        CHECK(e.point() < c.size());
    }
}

TEST_CASE("instrumentation accumulates every stage with an injected clock") {
    const PointCloud c = generate_lattice_cloud(10, 10, 0.1);
    Solver solver(short_config(3), c);
    double now = 0.0;
    solver.set_instrumentation(true, [&now] { return now += 1.0; });
    solver.run();
    const StageTimings& t = solver.timings();
    for (std::size_t s = 0; s < stage_count; ++s) CHECK(t.seconds[s] > 0.0);
    CHECK(t[Stage::flux_residual] == t[Stage::state_update]);
    CHECK(t.total() == std::accumulate(t.seconds.begin(), t.seconds.end(), 0.0));
}

TEST_CASE("short symmetric run at zero incidence") {
    const PointCloud c = generate_naca_cloud({60, 20, 1.1, 6.0});
    SolverConfig cfg = short_config(20);
    cfg.aoa_deg = 0.0;
    Solver s(cfg, c);
    s.run();
    const SurfaceReport surf = surface_report(c, s.state(), cfg);
    CHECK(std::fabs(surf.lift) <= 1e-10);
    CHECK(std::fabs(surf.net_mass_flux) <= 1e-12);
    CHECK(surf.wall_points.size() == 60);
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = 0; j < c.size(); ++j) {
            if (c.position[j].x == c.position[i].x && c.position[j].y == -c.position[i].y) {
                const Primitives a = s.state().get(i), b = s.state().get(j);
                CHECK(std::fabs(a.rho - b.rho) <= 1e-10);
                CHECK(std::fabs(a.u2 + b.u2) <= 1e-10);
                break;
            }
        }
    }
}

TEST_CASE("surface report of the free stream") {
    const PointCloud c = generate_naca_cloud({60, 20, 1.1, 6.0});
    SolverConfig cfg;
    const PrimitiveField s(c.size(), free_stream(cfg));
    const SurfaceReport surf = surface_report(c, s, cfg);
    for (double cp : surf.cp) CHECK(std::fabs(cp) <= 1e-14);
    CHECK(std::fabs(surf.lift) <= 1e-14);
    CHECK(surf.chord == doctest::Approx(1.0).epsilon(1e-12));
    const double perimeter = std::accumulate(surf.ds.begin(), surf.ds.end(), 0.0);
    CHECK(perimeter > 1.95);
    CHECK(perimeter < 2.05);
}

TEST_CASE("CSV outputs") {
    const PointCloud c = generate_lattice_cloud(3, 3, 0.5);
    const PrimitiveField s(c.size(), Primitives{1.0, 0.5, 0.0, 0.7});
    std::ostringstream sol, hist;
    write_solution_csv(sol, c, s);
    const std::string text = sol.str();
    CHECK(text.rfind("x,y,rho,u1,u2,p\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 10);
    write_history_csv(hist, std::vector<double>{0.5, 0.25});
    CHECK(hist.str() == "iter,residue\n1,0.5\n2,0.25\n");
}
