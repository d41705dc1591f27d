#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kmf/geometry.hpp"
#include "kmf/kinetics.hpp"
#include "kmf/lsq.hpp"
#include "kmf/state.hpp"

namespace kmf {

enum class ExecutionMode { fused, split4 };

const char* to_string(ExecutionMode mode);
ExecutionMode parse_mode(const std::string& text);

struct SolverConfig {
    double mach = 0.63;
    double aoa_deg = 2.0;
    double gamma = default_gamma;
    double cfl = 0.2;
    int n_outer = 1000;
    int n_inner = 3;
    ExecutionMode mode = ExecutionMode::fused;
    int threads = 1;
    std::optional<double> convergence_tol;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    bool operator==(const SolverConfig&) const = default;
};

/// Nondimensional free stream: rho = 1, p = 1/gamma (unit sound speed),
/// velocity of magnitude mach along the angle of attack.
Primitives free_stream(const SolverConfig& config);

/// Positivity or stencil failure raised inside the iteration loop.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, int iteration, std::string stage, std::size_t point)
        : std::runtime_error(what), iteration_(iteration), stage_(std::move(stage)), point_(point) {}
    int iteration() const noexcept { return iteration_; }
    const std::string& stage() const noexcept { return stage_; }
    std::size_t point() const noexcept { return point_; }

private:
    int iteration_;
    std::string stage_;
    std::size_t point_;
};

// ---------------------------------------------------------------------------
// Stage kernels

/// dt_i = cfl * d_min,i / (|u_i| + a_i).
std::vector<double> local_timestep(const PrimitiveField& state, const Connectivity& conn, double cfl,
                                   double gamma = default_gamma, int threads = 1);

FieldBlock4 q_variables(const PrimitiveField& state, double gamma = default_gamma, int threads = 1);

/// Everything the flux residual reads. All members are borrowed.
struct FluxInputs {
    const PointCloud& cloud;
    const Connectivity& conn;
    const FieldBlock4& q;
    const QGradients& grads;
    Primitives free_stream;
    double gamma = default_gamma;
};

/// One of the four split-flux derivative contributions at a point, in
/// Cartesian components. Term order: 0 = d(G1+)/d1 on the x- stencil,
/// 1 = d(G1-)/d1 on x+, 2 = d(G2+)/d2 on y-, 3 = d(G2-)/d2 on y+, with
/// (1, 2) the point's frame axes. At walls term 2 is the specular mirror
/// of the fluid-side stencil; at outer points term 3 is the free-stream
/// mirror of the interior-side stencil.
FluxVector split_flux_derivative(const FluxInputs& in, std::size_t point, int term);

/// Sum of the four terms at every point. `fused` evaluates all four per
/// point in one pass and shares the q-tilde reconstruction per neighbour;
/// `split4` runs one pass per term. Both accumulate in the same order and
/// give identical bits. Boundary rows come from apply_boundary.
FieldBlock4 flux_residual(const FluxInputs& in, ExecutionMode mode, int threads = 1);
void flux_residual(const FluxInputs& in, ExecutionMode mode, FieldBlock4& residual, int threads = 1);

/// Overwrites the residual rows of wall and outer points with the boundary
/// treatment (term 2 mirrored at walls, term 3 from the free stream at
/// outer points).
void apply_boundary(const FluxInputs& in, FieldBlock4& residual, int threads = 1);

/// Four-stage third-order SSP update (dt per point):
///   stages 1, 2, 4: U = U_stage - dt/2 R
///   stage 3:        U = 2/3 U_prev + 1/3 U_stage - dt/6 R
FieldBlock4 state_update_rk(const FieldBlock4& u_prev_outer, const FieldBlock4& u_stage, int stage,
                            std::span<const double> dt, const FieldBlock4& residual, int threads = 1);

/// Removes the normal momentum at wall points, keeping density and energy.
void enforce_wall_tangency(FieldBlock4& conserved, const PointCloud& cloud);

/// sqrt(sum_i (rho_new - rho_old)^2 / n), independent of point order.
double residue_norm(const FieldBlock4& u_new, const FieldBlock4& u_old);

FieldBlock4 to_conserved(const PrimitiveField& state, double gamma = default_gamma);
/// Throws PositivityError with the offending point index.
PrimitiveField to_primitives(const FieldBlock4& conserved, double gamma = default_gamma);

// ---------------------------------------------------------------------------
// Driver

enum class Stage { timestep, q_variables, q_derivatives, flux_residual, state_update, residue };
inline constexpr std::size_t stage_count = 6;
inline constexpr std::array<const char*, stage_count> stage_names{
    "timestep", "q_variables", "q_derivatives", "flux_residual", "state_update", "residue"};

/// Seconds from an arbitrary origin; must be monotonic.
using Clock = std::function<double()>;
Clock steady_clock_seconds();

struct StageTimings {
    std::array<double, stage_count> seconds{};
    double& operator[](Stage s) { return seconds[static_cast<std::size_t>(s)]; }
    double operator[](Stage s) const { return seconds[static_cast<std::size_t>(s)]; }
    double total() const;
};

class Solver {
public:
    Solver(SolverConfig config, PointCloud cloud, const StencilOptions& stencil = {});
    Solver(SolverConfig config, PointCloud cloud, Connectivity conn);

    /// One outer iteration (timestep, four RK stages, residue); returns the residue.
    double step();
    /// Runs up to n_outer iterations, stopping early at convergence_tol.
    void run();

    /// Stage timing; off by default. The clock is read at stage boundaries.
    void set_instrumentation(bool on, Clock clock = steady_clock_seconds());
    void reset_timings() { timings_ = {}; }

    const SolverConfig& config() const noexcept { return config_; }
    const PointCloud& cloud() const noexcept { return cloud_; }
    const Connectivity& connectivity() const noexcept { return conn_; }
    const PrimitiveField& state() const noexcept { return prim_; }
    const std::vector<double>& history() const noexcept { return history_; }
    const StageTimings& timings() const noexcept { return timings_; }
    int iterations() const noexcept { return static_cast<int>(history_.size()); }
    Primitives free_stream_state() const noexcept { return free_; }

    /// Replaces the state (for restarts and tests).
    void set_state(const PrimitiveField& state);
    /// Residual of the current state, without updating it.
    FieldBlock4 current_residual();

private:
    template <class F>
    void timed(Stage stage, F&& body);
    void refresh_gradients();

    SolverConfig config_;
    PointCloud cloud_;
    Connectivity conn_;
    Primitives free_;
    PrimitiveField prim_;
    FieldBlock4 u_;
    FieldBlock4 u_prev_;
    FieldBlock4 q_;
    QGradients grads_;
    QGradients scratch_;
    FieldBlock4 residual_;
    std::vector<double> history_;
    StageTimings timings_;
    bool instrument_ = false;
    Clock clock_;
    int current_iteration_ = 0;
};

struct SolveResult {
    PrimitiveField state;
    std::vector<double> history;
    StageTimings timings;
};

SolveResult solve(const SolverConfig& config, const PointCloud& cloud, const StencilOptions& stencil = {});

// ---------------------------------------------------------------------------
// Post-processing

struct SurfaceReport {
    std::vector<std::size_t> wall_points;
    std::vector<double> cp;
    std::vector<double> ds;            ///< surface length attributed to each wall point
    double net_mass_flux = 0.0;        ///< sum rho (u.n) ds / (rho_inf |u_inf| chord)
    double lift = 0.0;                 ///< force normal to the free stream / (q_inf chord)
    double drag = 0.0;                 ///< force along the free stream / (q_inf chord)
    double chord = 0.0;
};

SurfaceReport surface_report(const PointCloud& cloud, const PrimitiveField& state, const SolverConfig& config);

void write_solution_csv(std::ostream& out, const PointCloud& cloud, const PrimitiveField& state);
void write_history_csv(std::ostream& out, std::span<const double> history);
void write_surface_csv(std::ostream& out, const PointCloud& cloud, const SurfaceReport& surface);

}  // namespace kmf
