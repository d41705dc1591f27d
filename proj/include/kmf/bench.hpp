#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "kmf/geometry.hpp"
#include "kmf/solver.hpp"

namespace kmf {

struct BenchmarkReport {
    std::string level;        ///< point-level label, e.g. "naca-5800"
    std::size_t points = 0;
    int iterations = 0;       ///< timed iterations (warm-up excluded)
    int warmup = 0;
    double wall_seconds = 0.0;
    double rdp = 0.0;         ///< wall_seconds / (iterations * points)
    double speedup = 1.0;     ///< filled by sweep; vs the first cell
    std::array<double, stage_count> stage_seconds{};
    std::array<double, stage_count> stage_shares{};
    SolverConfig config;
    std::string host;
    std::string notes;
    std::vector<double> history;  ///< residues of the timed iterations
    bool ok = true;
    std::string error;

    ExecutionMode mode() const { return config.mode; }
    int threads() const { return config.threads; }
    /// Index into stage_names of the largest share.
    std::size_t dominant_stage() const;
};

/// wall_seconds / (iterations * points). Throws std::invalid_argument when
/// iterations or points is zero.
double compute_rdp(double wall_seconds, long long iterations, long long points);

/// baseline.rdp / report.rdp. Throws std::invalid_argument unless both are
/// finite and positive.
double speedup(const BenchmarkReport& report, const BenchmarkReport& baseline);

/// Compiler, OpenMP and core count of this host.
std::string host_fingerprint();

struct TimedRunOptions {
    int warmup = 10;
    bool instrument = true;
    Clock clock = steady_clock_seconds();
    StencilOptions stencil{};
    std::string level;
    std::string notes;
};

/// Builds a solver from free stream, runs `warmup` untimed iterations, then
/// config.n_outer timed ones (fewer if convergence_tol is met).
BenchmarkReport timed_run(const SolverConfig& config, const PointCloud& cloud,
                          const TimedRunOptions& options = {});

struct SweepLevel {
    std::string label;
    PointCloud cloud;
};

/// Cartesian product levels x modes x threads, in that nesting order.
struct SweepPlan {
    std::vector<SweepLevel> levels;
    std::vector<ExecutionMode> modes{ExecutionMode::fused};
    std::vector<int> threads{1};
};

struct SweepResult {
    std::vector<BenchmarkReport> reports;
    bool all_ok() const;
};

/// One report per cell; a failing cell is recorded (ok = false, error set)
/// and the sweep continues. Speedups are relative to the first cell.
SweepResult sweep(const SolverConfig& config_template, const SweepPlan& plan,
                  const TimedRunOptions& options = {});

struct OverheadMeasurement {
    double plain_seconds = 0.0;         ///< best of the uninstrumented repeats
    double instrumented_seconds = 0.0;  ///< best of the instrumented repeats
    double overhead() const { return instrumented_seconds / plain_seconds - 1.0; }
};

/// Alternates uninstrumented and instrumented runs of config.n_outer
/// iterations from free stream and keeps the best time of each.
OverheadMeasurement instrumentation_overhead(const SolverConfig& config, const PointCloud& cloud,
                                             int repeats = 5, const StencilOptions& stencil = {});

/// JSON document for a report set (schema in README).
std::string reports_to_json(const std::vector<BenchmarkReport>& reports);
/// `level,points,iters,threads,mode,wall_s,rdp,speedup` with header.
void write_reports_csv(std::ostream& out, const std::vector<BenchmarkReport>& reports);
std::string report_csv_row(const BenchmarkReport& report);

}  // namespace kmf
