// Acceptance checks: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "kmf/bench.hpp"
#include "kmf/solver.hpp"
#include "kmf/validation.hpp"

using namespace kmf;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

Outcome from_suite(const SuiteResult& r) { return {r.passed, r.summary()}; }

const PointCloud& desk_cloud() {
    static const PointCloud cloud = generate_naca_cloud({});
    return cloud;
}

const PointCloud& small_cloud() {
    static const PointCloud cloud = generate_naca_cloud(naca_params_for_points(2500));
    return cloud;
}

// 1
Outcome moments() {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r = moment_suite(50, 1001, 1e-8);
    const double t = seconds_since(t0);
    return {r.passed && t < 30.0, r.summary() + ", " + fmt(t) + " s (limit 30 s)"};
}

// 2
Outcome split_fluxes() { return from_suite(split_flux_suite(50, 2002, 1e-8, 1e-13)); }

// 3
Outcome k_exactness() { return from_suite(k_exactness_suite(100, 3003, 1e-10)); }

// 4
Outcome q_round_trips() { return from_suite(q_roundtrip_suite(1000, 4004, 1e-13)); }

// 5
Outcome free_stream_preservation() {
    SolverConfig cfg;
    cfg.n_outer = 50;
    Solver solver(cfg, desk_cloud());
    try {
        solver.run();
    } catch (const SolverError& e) {
        return {false, std::string("solver error: ") + e.what()};
    }
    const auto& h = solver.history();
    const double worst = *std::max_element(h.begin(), h.end());
    const FieldBlock4 r0 = Solver(cfg, desk_cloud()).current_residual();
    double wall = 0.0, other = 0.0;
    for (std::size_t p = 0; p < desk_cloud().size(); ++p) {
        double m = 0.0;
        for (std::size_t c = 0; c < 4; ++c) m = std::max(m, std::fabs(r0.at(c, p)));
        double& slot = desk_cloud().kind[p] == PointKind::wall ? wall : other;
        slot = std::max(slot, m);
    }
    return {h.size() == 50 && worst <= 1e-10,
            "max residue over 50 iterations " + fmt(worst) + " (limit 1e-10); initial residual max " + fmt(wall) +
                " at wall points, " + fmt(other) + " elsewhere"};
}

// 6
Outcome rk_order() {
    const auto error = [](double dt) {
        FieldBlock4 y(1);
        y.at(0, 0) = 1.0;
        const std::vector<double> dts{dt};
        for (int n = 0, steps = static_cast<int>(std::lround(1.0 / dt)); n < steps; ++n) {
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
    const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
    return {o1 >= 2.9 && o2 >= 2.9, "observed orders " + fmt(o1) + ", " + fmt(o2) + " (need >= 2.9)"};
}

/// Short perturbed-state run on the 2.5k cloud.
std::vector<double> perturbed_history(ExecutionMode mode, int threads, PrimitiveField* final_state = nullptr) {
    SolverConfig cfg;
    cfg.n_outer = 20;
    cfg.mode = mode;
    cfg.threads = threads;
    Solver solver(cfg, small_cloud());
    solver.set_state(perturbed_free_stream(small_cloud(), cfg, 0.02, 7007));
    solver.run();
    if (final_state) *final_state = solver.state();
    return solver.history();
}

// 7
Outcome mode_equivalence() {
    const PointCloud& c = small_cloud();
    const SuiteResult r = mode_equivalence_suite(c, build_stencils(c), SolverConfig{}, 7007, 1e-14);
    const auto fused = perturbed_history(ExecutionMode::fused, 1);
    const auto split = perturbed_history(ExecutionMode::split4, 1);
    const bool same = fused == split;
    return {r.passed && same, r.summary() + "; " + std::to_string(c.size()) + "-point histories over " +
                                  std::to_string(fused.size()) + " iterations " +
                                  (same ? "bit-identical" : "DIFFER")};
}

// 8
Outcome determinism() {
    PrimitiveField s1, s2, s8;
    const auto h1 = perturbed_history(ExecutionMode::fused, 1, &s1);
    const auto h2 = perturbed_history(ExecutionMode::fused, 2, &s2);
    const auto h8 = perturbed_history(ExecutionMode::fused, 8, &s8);
    const bool same = h1 == h2 && h1 == h8 && s1 == s2 && s1 == s8;
    return {same, std::string("threads {1, 2, 8}: histories and final states ") +
                      (same ? "bit-identical" : "DIFFER")};
}

struct DeskRun {
    bool completed = false;
    std::string error;
    double seconds = 0.0;
    std::vector<double> history;
    SurfaceReport surface;
    bool positive = true;
};

DeskRun desk_run(double aoa) {
    SolverConfig cfg;
    cfg.aoa_deg = aoa;
    cfg.threads = 1;
    DeskRun out;
    const auto t0 = std::chrono::steady_clock::now();
    Solver solver(cfg, desk_cloud());
    try {
        solver.run();
        out.completed = true;
    } catch (const SolverError& e) {
        std::ostringstream s;
        s << "diverged at iteration " << e.iteration() << ", stage " << e.stage() << ", point " << e.point() << ": "
          << e.what();
        out.error = s.str();
        out.positive = false;
    }
    out.seconds = seconds_since(t0);
    out.history = solver.history();
    if (out.completed) {
        for (std::size_t i = 0; i < solver.state().size(); ++i) {
            const Primitives p = solver.state().get(i);
            if (!(p.rho > 0.0 && p.p > 0.0)) out.positive = false;
        }
        out.surface = surface_report(desk_cloud(), solver.state(), cfg);
    }
    return out;
}

// 9
Outcome desk_airfoil() {
    const DeskRun run = desk_run(2.0);
    std::ostringstream d;
    d << desk_cloud().size() << " points, M 0.63, AoA 2, n_inner 3: ";
    if (!run.completed) {
        d << run.error << " after " << fmt(run.seconds) << " s";
        return {false, d.str()};
    }
    const auto peak = std::max_element(run.history.begin(), run.history.end());
    const double drop = std::log10(*peak / run.history.back());
    const DeskRun sym = desk_run(0.0);
    const double lift0 = sym.completed ? std::fabs(sym.surface.lift) : NAN;
    const bool pass = run.seconds < 600.0 && drop >= 3.0 && run.positive &&
                      std::fabs(run.surface.net_mass_flux) <= 1e-6 && sym.completed && lift0 <= 1e-6;
    d << fmt(run.seconds) << " s (limit 600), residue drop " << fmt(drop) << " orders from peak at iteration "
      << (peak - run.history.begin()) + 1 << " (need 3), positivity " << (run.positive ? "held" : "LOST")
      << ", wall mass flux " << fmt(run.surface.net_mass_flux) << ", lift " << fmt(run.surface.lift)
      << "; AoA 0 run " << (sym.completed ? "lift " + fmt(lift0) : sym.error);
    return {pass, d.str()};
}

// 10
Outcome rdp_arithmetic() {
    bool ok = compute_rdp(10.0, 1000, 625000) == 1.6e-8;
    TimedRunOptions opt;
    auto calls = std::make_shared<int>(0);
    opt.clock = [calls] { return (*calls)++ == 0 ? 0.0 : 10.0; };
    opt.warmup = 2;
    SolverConfig cfg;
    cfg.n_outer = 5;
    const PointCloud lattice = generate_lattice_cloud(20, 10, 0.05);
    const BenchmarkReport r = timed_run(cfg, lattice, opt);
    ok = ok && r.wall_seconds == 10.0 && r.rdp == 10.0 / (5.0 * 200.0);
    BenchmarkReport fortran, cpp;
    fortran.rdp = 14.4090e-8;
    cpp.rdp = 5.1200e-8;
    const double s = speedup(cpp, fortran);
    BenchmarkReport slow;
    slow.rdp = 2.0 * cpp.rdp;
    ok = ok && std::fabs(s - 2.814) <= 1e-3 && speedup(cpp, cpp) == 1.0 && speedup(slow, cpp) == 0.5;
    return {ok, "fake-clock rdp " + fmt(r.rdp) + " (expect 0.01), synthetic 1.6e-8 exact, Table 3 speedup " +
                    fmt(s) + " (expect 2.814 +- 1e-3)"};
}

// 11
Outcome stage_shares() {
    SolverConfig cfg;
    cfg.n_outer = 50;
    const BenchmarkReport r = timed_run(cfg, desk_cloud());
    std::ostringstream d;
    d << "default desk run (" << r.points << " points, " << r.iterations << " timed iterations) shares:";
    for (std::size_t s = 0; s < stage_count; ++s) d << ' ' << stage_names[s] << '=' << fmt(r.stage_shares[s]);
    const bool pass = std::string(stage_names[r.dominant_stage()]) == "flux_residual";
    return {pass, d.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"moment consistency", moments},
        {"split-flux correctness", split_fluxes},
        {"k-exactness", k_exactness},
        {"q-transform round trips", q_round_trips},
        {"free-stream preservation on the desk NACA cloud", free_stream_preservation},
        {"SSP-RK3 order", rk_order},
        {"mode equivalence", mode_equivalence},
        {"determinism across thread counts", determinism},
        {"desk-scale airfoil run", desk_airfoil},
        {"RDP and speedup arithmetic", rdp_arithmetic},
        {"stage-share report", stage_shares},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
