#include "kmf/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "kmf/parallel.hpp"

namespace kmf {

std::size_t BenchmarkReport::dominant_stage() const {
    return static_cast<std::size_t>(std::max_element(stage_shares.begin(), stage_shares.end()) -
                                    stage_shares.begin());
}

double compute_rdp(double wall_seconds, long long iterations, long long points) {
    if (iterations <= 0) throw std::invalid_argument("rdp needs at least one iteration");
    if (points <= 0) throw std::invalid_argument("rdp needs at least one point");
    return wall_seconds / (static_cast<double>(iterations) * static_cast<double>(points));
}

double speedup(const BenchmarkReport& report, const BenchmarkReport& baseline) {
    const auto usable = [](double r) { return std::isfinite(r) && r > 0.0; };
    if (!usable(report.rdp)) throw std::invalid_argument("speedup: report rdp must be finite and positive");
    if (!usable(baseline.rdp)) throw std::invalid_argument("speedup: baseline rdp must be finite and positive");
    return baseline.rdp / report.rdp;
}

std::string host_fingerprint() {
    char name[256] = {};
    if (gethostname(name, sizeof name - 1) != 0) name[0] = '\0';
    std::ostringstream out;
    out << (name[0] ? name : "unknown") << "; cores=" << hardware_threads();
#ifdef __VERSION__
    out << "; compiler=" << __VERSION__;
#endif
#ifdef _OPENMP
    out << "; openmp=" << _OPENMP;
#endif
    return out.str();
}

BenchmarkReport timed_run(const SolverConfig& config, const PointCloud& cloud, const TimedRunOptions& options) {
    if (options.warmup < 0) throw std::invalid_argument("warmup must be nonnegative");
    config.validate();

    BenchmarkReport report;
    report.level = options.level;
    report.points = cloud.size();
    report.warmup = options.warmup;
    report.config = config;
    report.host = host_fingerprint();
    report.notes = options.notes;

    Solver solver(config, cloud, options.stencil);
    for (int it = 0; it < options.warmup; ++it) solver.step();

    solver.set_instrumentation(options.instrument, options.clock);
    solver.reset_timings();
    const double start = options.clock();
    for (int it = 0; it < config.n_outer; ++it) {
        const double r = solver.step();
        report.history.push_back(r);
        if (config.convergence_tol && r <= *config.convergence_tol) break;
    }
    const double stop = options.clock();

    report.iterations = static_cast<int>(report.history.size());
    report.wall_seconds = stop - start;
    report.rdp = compute_rdp(report.wall_seconds, report.iterations, static_cast<long long>(report.points));
    report.stage_seconds = solver.timings().seconds;
    for (std::size_t s = 0; s < stage_count; ++s) {
        report.stage_shares[s] = report.wall_seconds > 0.0 ? report.stage_seconds[s] / report.wall_seconds : 0.0;
    }
    return report;
}

bool SweepResult::all_ok() const {
    return std::all_of(reports.begin(), reports.end(), [](const BenchmarkReport& r) { return r.ok; });
}

SweepResult sweep(const SolverConfig& config_template, const SweepPlan& plan, const TimedRunOptions& options) {
    SweepResult result;
    for (const SweepLevel& level : plan.levels) {
        for (ExecutionMode mode : plan.modes) {
            for (int threads : plan.threads) {
                SolverConfig config = config_template;
                config.mode = mode;
                config.threads = threads;
                TimedRunOptions cell = options;
                cell.level = level.label;
                BenchmarkReport report;
                try {
                    report = timed_run(config, level.cloud, cell);
                } catch (const std::exception& e) {
                    report = BenchmarkReport{};
                    report.level = level.label;
                    report.points = level.cloud.size();
                    report.warmup = options.warmup;
                    report.config = config;
                    report.host = host_fingerprint();
                    report.notes = options.notes;
                    report.ok = false;
                    report.error = e.what();
                }
                result.reports.push_back(std::move(report));
            }
        }
    }
    const BenchmarkReport* base = result.reports.empty() ? nullptr : &result.reports.front();
    for (BenchmarkReport& r : result.reports) {
        r.speedup = std::numeric_limits<double>::quiet_NaN();
        if (base && base->ok && r.ok) {
            try {
                r.speedup = speedup(r, *base);
            } catch (const std::invalid_argument&) {
            }
        }
    }
    return result;
}

OverheadMeasurement instrumentation_overhead(const SolverConfig& config, const PointCloud& cloud, int repeats,
                                             const StencilOptions& stencil) {
    if (repeats < 1) throw std::invalid_argument("repeats must be positive");
    const Connectivity conn = build_stencils(cloud, stencil);
    const Clock clock = steady_clock_seconds();
    OverheadMeasurement m;
    m.plain_seconds = m.instrumented_seconds = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
        for (bool instrument : {false, true}) {
            Solver solver(config, cloud, conn);
            solver.set_instrumentation(instrument, clock);
            const double start = clock();
            for (int it = 0; it < config.n_outer; ++it) solver.step();
            const double t = clock() - start;
            double& best = instrument ? m.instrumented_seconds : m.plain_seconds;
            best = std::min(best, t);
        }
    }
    return m;
}

namespace {

nlohmann::json config_json(const SolverConfig& c) {
    nlohmann::json j{{"mach", c.mach},       {"aoa_deg", c.aoa_deg},  {"gamma", c.gamma},
                     {"cfl", c.cfl},         {"n_outer", c.n_outer},  {"n_inner", c.n_inner},
                     {"mode", to_string(c.mode)}, {"threads", c.threads}};
    j["convergence_tol"] = c.convergence_tol ? nlohmann::json(*c.convergence_tol) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string reports_to_json(const std::vector<BenchmarkReport>& reports) {
    nlohmann::json doc;
    doc["schema"] = "kmf-bench/1";
    doc["reports"] = nlohmann::json::array();
    for (const BenchmarkReport& r : reports) {
        nlohmann::json shares = nlohmann::json::object();
        nlohmann::json seconds = nlohmann::json::object();
        for (std::size_t s = 0; s < stage_count; ++s) {
            shares[stage_names[s]] = r.stage_shares[s];
            seconds[stage_names[s]] = r.stage_seconds[s];
        }
        doc["reports"].push_back({{"level", r.level},
                                  {"points", r.points},
                                  {"iterations", r.iterations},
                                  {"warmup", r.warmup},
                                  {"wall_seconds", r.wall_seconds},
                                  {"rdp", r.rdp},
                                  {"speedup", nullable(r.speedup)},
                                  {"mode", to_string(r.mode())},
                                  {"threads", r.threads()},
                                  {"stage_seconds", seconds},
                                  {"stage_shares", shares},
                                  {"config", config_json(r.config)},
                                  {"host", r.host},
                                  {"notes", r.notes},
                                  {"history", r.history},
                                  {"ok", r.ok},
                                  {"error", r.error}});
    }
    return doc.dump(2);
}

std::string report_csv_row(const BenchmarkReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << r.level << ',' << r.points << ',' << r.iterations << ',' << r.threads() << ',' << to_string(r.mode())
        << ',' << r.wall_seconds << ',' << r.rdp << ',';
    if (std::isfinite(r.speedup)) out << r.speedup;
    return out.str();
}

void write_reports_csv(std::ostream& out, const std::vector<BenchmarkReport>& reports) {
    out << "level,points,iters,threads,mode,wall_s,rdp,speedup\n";
    for (const BenchmarkReport& r : reports) out << report_csv_row(r) << '\n';
}

}  // namespace kmf
