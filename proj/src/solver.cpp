#include "kmf/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "kmf/parallel.hpp"

namespace kmf {

const char* to_string(ExecutionMode mode) { return mode == ExecutionMode::fused ? "fused" : "split4"; }

ExecutionMode parse_mode(const std::string& text) {
    if (text == "fused") return ExecutionMode::fused;
    if (text == "split4") return ExecutionMode::split4;
    throw std::invalid_argument("unknown mode '" + text + "' (expected fused or split4)");
}

void SolverConfig::validate() const {
    if (!(mach > 0.0)) throw std::invalid_argument("mach must be positive");
    if (!(gamma > 1.0)) throw std::invalid_argument("gamma must exceed 1");
    if (!(cfl > 0.0 && cfl <= 1.0)) throw std::invalid_argument("cfl must lie in (0, 1]");
    if (n_outer < 1) throw std::invalid_argument("n_outer must be at least 1");
    if (n_inner < 1) throw std::invalid_argument("n_inner must be at least 1");
    if (threads < 1) throw std::invalid_argument("threads must be at least 1");
    if (!std::isfinite(aoa_deg)) throw std::invalid_argument("aoa_deg must be finite");
    if (convergence_tol && !(*convergence_tol > 0.0)) throw std::invalid_argument("convergence_tol must be positive");
}

Primitives free_stream(const SolverConfig& config) {
    const double alpha = config.aoa_deg * std::numbers::pi / 180.0;
    return {1.0, config.mach * std::cos(alpha), config.mach * std::sin(alpha), 1.0 / config.gamma};
}

// ---------------------------------------------------------------------------

std::vector<double> local_timestep(const PrimitiveField& state, const Connectivity& conn, double cfl,
                                   double gamma, int threads) {
    std::vector<double> dt(state.size());
    parallel_for(state.size(), threads, [&](std::size_t i) {
        const Primitives s = state.get(i);
        const double speed = std::sqrt(s.u1 * s.u1 + s.u2 * s.u2) + sound_speed(s, gamma);
        dt[i] = cfl * conn.min_distance(i) / speed;
    });
    return dt;
}

FieldBlock4 q_variables(const PrimitiveField& state, double gamma, int threads) {
    FieldBlock4 q(state.size());
    parallel_for(state.size(), threads, [&](std::size_t i) { q.set(i, primitives_to_q(state.get(i), gamma)); });
    return q;
}

FieldBlock4 to_conserved(const PrimitiveField& state, double gamma) {
    FieldBlock4 u(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) u.set(i, primitives_to_conserved(state.get(i), gamma));
    return u;
}

PrimitiveField to_primitives(const FieldBlock4& conserved, double gamma) {
    PrimitiveField prim(conserved.size());
    for (std::size_t i = 0; i < conserved.size(); ++i) {
        prim.set(i, conserved_to_primitives(conserved.get<ConservedTag>(i), gamma, i));
    }
    return prim;
}

// ---------------------------------------------------------------------------
// Flux residual

namespace {

using Q4 = std::array<double, 4>;

constexpr StencilKind term_stencil(int term) { return split_kinds[static_cast<std::size_t>(term)]; }
constexpr Axis term_axis(int term) { return term < 2 ? Axis::x : Axis::y; }
constexpr Sign term_sign(int term) { return term % 2 == 0 ? Sign::plus : Sign::minus; }

/// Term replaced by a mirror stencil at this kind of point, or -1.
constexpr int ghost_term(PointKind kind) {
    return kind == PointKind::wall ? 2 : (kind == PointKind::outer ? 3 : -1);
}

Q4 q_tilde(const FluxInputs& in, std::size_t i, Vec2 d) {
    Q4 out;
    for (std::size_t c = 0; c < 4; ++c) {
        out[c] = in.q.at(c, i) - 0.5 * (d.x * in.grads.qx.at(c, i) + d.y * in.grads.qy.at(c, i));
    }
    return out;
}

// Primitives in the local frame from q-variables.
Primitives local_primitives(const Q4& q, double gamma, const Frame& frame, std::size_t point) {
    if (!(q[3] < 0.0)) {
        std::ostringstream os;
        os << "reconstructed q4 = " << q[3] << " is not negative at point " << point;
        throw PositivityError(os.str(), point);
    }
    const double beta = -0.5 * q[3];
    const double u1 = q[1] / (2.0 * beta);
    const double u2 = q[2] / (2.0 * beta);
    const double rho = std::exp(q[0] - std::log(beta) / (gamma - 1.0) + beta * (u1 * u1 + u2 * u2));
    const Vec2 ul = frame.to_local({u1, u2});
    return {rho, ul.x, ul.y, rho / (2.0 * beta)};
}

struct TermSums {
    Q4 r1{};
    Q4 r2{};

    void add(Vec2 l, const FluxVector& dg) {
        for (std::size_t c = 0; c < 4; ++c) {
            r1[c] += l.x * dg[c];
            r2[c] += l.y * dg[c];
        }
    }
};

// Derivative along the term's axis, rotated to Cartesian momentum.
FluxVector finish_term(const TermSums& acc, const StencilSums& m, int term, const Frame& frame) {
    FluxVector local;
    for (std::size_t c = 0; c < 4; ++c) {
        const Vec2 g = solve_normal_equations(m, acc.r1[c], acc.r2[c]);
        local[c] = term < 2 ? g.x : g.y;
    }
    const Vec2 mom = frame.to_global({local[1], local[2]});
    return FluxVector{{local[0], mom.x, mom.y, local[3]}};
}

FluxVector term_flux(const Primitives& local, int term, double gamma) {
    return split_flux(local, term_axis(term), term_sign(term), gamma);
}

FluxVector real_term(const FluxInputs& in, std::size_t p, int term) {
    const Connectivity& conn = in.conn;
    const Frame& frame = conn.frame(p);
    const auto nbrs = conn.neighbors(p, StencilKind::full);
    const auto offs = conn.offsets(p);
    const auto masks = conn.masks(p);
    const std::uint8_t bit = stencil_bit(term_stencil(term));
    TermSums acc;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
        if (!(masks[k] & bit)) continue;
        const Vec2 d = offs[k];
        const Primitives pj = local_primitives(q_tilde(in, nbrs[k], d), in.gamma, frame, p);
        const Primitives p0 = local_primitives(q_tilde(in, p, d), in.gamma, frame, p);
        acc.add(frame.to_local(d), term_flux(pj, term, in.gamma) - term_flux(p0, term, in.gamma));
    }
    return finish_term(acc, conn.sums(p, term_stencil(term)), term, frame);
}

// Mirror-stencil term at boundary points. Ghost neighbours sit at the
// reflection of the real stencil across the tangent line; at walls they carry
// the specularly reflected state, at outer points the free stream.
FluxVector mirror_term(const FluxInputs& in, std::size_t p, int term, const Q4& q_inf) {
    const Connectivity& conn = in.conn;
    const Frame& frame = conn.frame(p);
    const bool wall = conn.kind(p) == PointKind::wall;
    const StencilKind stencil = term_stencil(wall ? 3 : 2);
    const auto nbrs = conn.neighbors(p, StencilKind::full);
    const auto offs = conn.offsets(p);
    const auto masks = conn.masks(p);
    const std::uint8_t bit = stencil_bit(stencil);
    const Primitives far = local_primitives(q_inf, in.gamma, frame, p);
    TermSums acc;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
        if (!(masks[k] & bit)) continue;
        const Vec2 l = frame.to_local(offs[k]);
        const Vec2 lm{l.x, -l.y};
        const Primitives p0 = local_primitives(q_tilde(in, p, frame.to_global(lm)), in.gamma, frame, p);
        Primitives ghost = far;
        if (wall) {
            ghost = local_primitives(q_tilde(in, nbrs[k], offs[k]), in.gamma, frame, p);
            ghost.u2 = -ghost.u2;
        }
        acc.add(lm, term_flux(ghost, term, in.gamma) - term_flux(p0, term, in.gamma));
    }
    StencilSums m = conn.sums(p, stencil);
    m.s12 = -m.s12;
    return finish_term(acc, m, term, frame);
}

// All four real terms of an interior point, sharing the reconstruction of
// each neighbour across the stencils it belongs to.
std::array<FluxVector, 4> fused_terms(const FluxInputs& in, std::size_t p) {
    const Connectivity& conn = in.conn;
    const Frame& frame = conn.frame(p);
    const auto nbrs = conn.neighbors(p, StencilKind::full);
    const auto offs = conn.offsets(p);
    const auto masks = conn.masks(p);
    std::array<TermSums, 4> acc;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
        if (!masks[k]) continue;
        const Vec2 d = offs[k];
        const Vec2 l = frame.to_local(d);
        const Primitives pj = local_primitives(q_tilde(in, nbrs[k], d), in.gamma, frame, p);
        const Primitives p0 = local_primitives(q_tilde(in, p, d), in.gamma, frame, p);
        for (int t = 0; t < 4; ++t) {
            if (masks[k] & stencil_bit(term_stencil(t))) {
                acc[static_cast<std::size_t>(t)].add(l, term_flux(pj, t, in.gamma) - term_flux(p0, t, in.gamma));
            }
        }
    }
    std::array<FluxVector, 4> out;
    for (int t = 0; t < 4; ++t) {
        out[static_cast<std::size_t>(t)] =
            finish_term(acc[static_cast<std::size_t>(t)], conn.sums(p, term_stencil(t)), t, frame);
    }
    return out;
}

void add_row(FieldBlock4& r, std::size_t p, const FluxVector& v) {
    for (std::size_t c = 0; c < 4; ++c) r.at(c, p) += v[c];
}

}  // namespace

FluxVector split_flux_derivative(const FluxInputs& in, std::size_t point, int term) {
    if (term < 0 || term > 3) throw std::invalid_argument("term must be 0..3");
    if (term == ghost_term(in.conn.kind(point))) {
        return mirror_term(in, point, term, primitives_to_q(in.free_stream, in.gamma).raw());
    }
    return real_term(in, point, term);
}

void apply_boundary(const FluxInputs& in, FieldBlock4& residual, int threads) {
    const Q4 q_inf = primitives_to_q(in.free_stream, in.gamma).raw();
    parallel_for(in.conn.size(), threads, [&](std::size_t p) {
        const int ghost = ghost_term(in.conn.kind(p));
        if (ghost < 0) return;
        FluxVector total{};
        for (int t = 0; t < 4; ++t) total += t == ghost ? mirror_term(in, p, t, q_inf) : real_term(in, p, t);
        residual.set(p, total);
    });
}

void flux_residual(const FluxInputs& in, ExecutionMode mode, FieldBlock4& residual, int threads) {
    const std::size_t n = in.conn.size();
    if (residual.size() != n) residual = FieldBlock4(n);
    if (mode == ExecutionMode::fused) {
        parallel_for(n, threads, [&](std::size_t p) {
            if (in.conn.kind(p) != PointKind::interior) return;
            const auto terms = fused_terms(in, p);
            FluxVector total{};
            for (const auto& t : terms) total += t;
            residual.set(p, total);
        });
    } else {
        parallel_for(n, threads, [&](std::size_t p) { residual.set(p, FluxVector{}); });
        for (int t = 0; t < 4; ++t) {
            parallel_for(n, threads, [&](std::size_t p) {
                if (in.conn.kind(p) != PointKind::interior) return;
                add_row(residual, p, real_term(in, p, t));
            });
        }
    }
    apply_boundary(in, residual, threads);
}

FieldBlock4 flux_residual(const FluxInputs& in, ExecutionMode mode, int threads) {
    FieldBlock4 r;
    flux_residual(in, mode, r, threads);
    return r;
}

// ---------------------------------------------------------------------------

FieldBlock4 state_update_rk(const FieldBlock4& u_prev_outer, const FieldBlock4& u_stage, int stage,
                            std::span<const double> dt, const FieldBlock4& residual, int threads) {
    if (stage < 1 || stage > 4) throw std::invalid_argument("RK stage must be 1..4");
    const std::size_t n = u_stage.size();
    if (u_prev_outer.size() != n || residual.size() != n || dt.size() != n) {
        throw std::invalid_argument("state_update_rk: size mismatch");
    }
    FieldBlock4 out(n);
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t c = 0; c < 4; ++c) {
            if (stage == 3) {
                out.at(c, i) = (2.0 / 3.0) * u_prev_outer.at(c, i) + (1.0 / 3.0) * u_stage.at(c, i) -
                               (dt[i] / 6.0) * residual.at(c, i);
            } else {
                out.at(c, i) = u_stage.at(c, i) - 0.5 * dt[i] * residual.at(c, i);
            }
        }
    });
    return out;
}

void enforce_wall_tangency(FieldBlock4& u, const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.kind[i] != PointKind::wall) continue;
        const Vec2 n = cloud.normal[i];
        const Vec2 m{u.at(1, i), u.at(2, i)};
        const double mn = dot(m, n);
        u.at(1, i) = m.x - mn * n.x;
        u.at(2, i) = m.y - mn * n.y;
    }
}

double residue_norm(const FieldBlock4& u_new, const FieldBlock4& u_old) {
    if (u_new.size() != u_old.size()) throw std::invalid_argument("residue_norm: size mismatch");
    const std::size_t n = u_new.size();
    if (n == 0) return 0.0;
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = u_new.at(0, i) - u_old.at(0, i);
        sq[i] = d * d;
    }
    return std::sqrt(reproducible_sum(sq) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Driver

Clock steady_clock_seconds() {
    return [] {
        using namespace std::chrono;
        return duration<double>(steady_clock::now().time_since_epoch()).count();
    };
}

double StageTimings::total() const {
    double t = 0.0;
    for (double s : seconds) t += s;
    return t;
}

Solver::Solver(SolverConfig config, PointCloud cloud, const StencilOptions& stencil)
    : Solver(config, cloud, build_stencils(cloud, stencil)) {}

Solver::Solver(SolverConfig config, PointCloud cloud, Connectivity conn)
    : config_(config), cloud_(std::move(cloud)), conn_(std::move(conn)), clock_(steady_clock_seconds()) {
    config_.validate();
    if (conn_.size() != cloud_.size()) throw std::invalid_argument("connectivity does not match cloud");
    free_ = free_stream(config_);
    set_state(PrimitiveField(cloud_.size(), free_));
}

void Solver::set_state(const PrimitiveField& state) {
    if (state.size() != cloud_.size()) throw std::invalid_argument("state size does not match cloud");
    prim_ = state;
    u_ = to_conserved(prim_, config_.gamma);
}

void Solver::set_instrumentation(bool on, Clock clock) {
    instrument_ = on;
    clock_ = std::move(clock);
}

template <class F>
void Solver::timed(Stage stage, F&& body) {
    try {
        if (!instrument_) {
            body();
            return;
        }
        const double t0 = clock_();
        body();
        timings_[stage] += clock_() - t0;
    } catch (const PositivityError& e) {
        throw SolverError(std::string("iteration ") + std::to_string(current_iteration_) + ", stage " +
                              stage_names[static_cast<std::size_t>(stage)] + ": " + e.what(),
                          current_iteration_, stage_names[static_cast<std::size_t>(stage)], e.point());
    } catch (const DomainError& e) {
        throw SolverError(std::string("iteration ") + std::to_string(current_iteration_) + ", stage " +
                              stage_names[static_cast<std::size_t>(stage)] + ": " + e.what(),
                          current_iteration_, stage_names[static_cast<std::size_t>(stage)],
                          PositivityError::no_point);
    }
}

// Inner iterations restart from first-order gradients every stage: carrying
// the previous stage's iterate over drives the sweeps towards the fully
// converged implicit gradients, which destabilises stretched clouds.
void Solver::refresh_gradients() {
    grads_ = first_order_q_gradients(q_, conn_, config_.threads);
    compute_q_derivatives(q_, conn_, config_.n_inner, grads_, scratch_, config_.threads);
}

double Solver::step() {
    ++current_iteration_;
    const int threads = config_.threads;
    std::vector<double> dt;
    timed(Stage::timestep, [&] { dt = local_timestep(prim_, conn_, config_.cfl, config_.gamma, threads); });
    u_prev_ = u_;
    for (int rk = 1; rk <= 4; ++rk) {
        timed(Stage::q_variables, [&] { q_ = q_variables(prim_, config_.gamma, threads); });
        timed(Stage::q_derivatives, [&] { refresh_gradients(); });
        timed(Stage::flux_residual, [&] {
            const FluxInputs in{cloud_, conn_, q_, grads_, free_, config_.gamma};
            flux_residual(in, config_.mode, residual_, threads);
        });
        timed(Stage::state_update, [&] {
            u_ = state_update_rk(u_prev_, u_, rk, dt, residual_, threads);
            enforce_wall_tangency(u_, cloud_);
            prim_ = to_primitives(u_, config_.gamma);
        });
    }
    double r = 0.0;
    timed(Stage::residue, [&] { r = residue_norm(u_, u_prev_); });
    history_.push_back(r);
    return r;
}

void Solver::run() {
    for (int it = 0; it < config_.n_outer; ++it) {
        const double r = step();
        if (config_.convergence_tol && r <= *config_.convergence_tol) break;
    }
}

FieldBlock4 Solver::current_residual() {
    const FieldBlock4 q = q_variables(prim_, config_.gamma, config_.threads);
    QGradients grads = first_order_q_gradients(q, conn_, config_.threads);
    QGradients scratch;
    compute_q_derivatives(q, conn_, config_.n_inner, grads, scratch, config_.threads);
    const FluxInputs in{cloud_, conn_, q, grads, free_, config_.gamma};
    return flux_residual(in, config_.mode, config_.threads);
}

SolveResult solve(const SolverConfig& config, const PointCloud& cloud, const StencilOptions& stencil) {
    Solver solver(config, cloud, stencil);
    solver.set_instrumentation(true);
    solver.run();
    return {solver.state(), solver.history(), solver.timings()};
}

// ---------------------------------------------------------------------------
// Post-processing

SurfaceReport surface_report(const PointCloud& cloud, const PrimitiveField& state, const SolverConfig& config) {
    SurfaceReport out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.kind[i] == PointKind::wall) out.wall_points.push_back(i);
    }
    const auto& w = out.wall_points;
    if (w.empty()) return out;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    for (auto i : w) {
        xmin = std::min(xmin, cloud.position[i].x);
        xmax = std::max(xmax, cloud.position[i].x);
    }
    out.chord = xmax - xmin;

    // Each wall point owns half the distance to its two nearest wall neighbours.
    out.ds.resize(w.size(), 0.0);
    for (std::size_t a = 0; a < w.size(); ++a) {
        double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
        for (std::size_t b = 0; b < w.size(); ++b) {
            if (a == b) continue;
            const double d = norm(cloud.position[w[b]] - cloud.position[w[a]]);
            if (d < d1) {
                d2 = d1;
                d1 = d;
            } else if (d < d2) {
                d2 = d;
            }
        }
        out.ds[a] = std::isfinite(d2) ? 0.5 * (d1 + d2) : 0.0;
    }

    const Primitives inf = free_stream(config);
    const double speed = std::hypot(inf.u1, inf.u2);
    const double dyn = 0.5 * inf.rho * speed * speed;
    const double alpha = config.aoa_deg * std::numbers::pi / 180.0;
    std::vector<double> fx(w.size()), fy(w.size()), mass(w.size());
    out.cp.resize(w.size());
    for (std::size_t a = 0; a < w.size(); ++a) {
        const Primitives s = state.get(w[a]);
        const Vec2 n = cloud.normal[w[a]];
        out.cp[a] = (s.p - inf.p) / dyn;
        fx[a] = -(s.p - inf.p) * n.x * out.ds[a];
        fy[a] = -(s.p - inf.p) * n.y * out.ds[a];
        mass[a] = s.rho * (s.u1 * n.x + s.u2 * n.y) * out.ds[a];
    }
    const double force_x = reproducible_sum(fx), force_y = reproducible_sum(fy);
    const double scale = dyn * out.chord;
    out.lift = (-force_x * std::sin(alpha) + force_y * std::cos(alpha)) / scale;
    out.drag = (force_x * std::cos(alpha) + force_y * std::sin(alpha)) / scale;
    out.net_mass_flux = reproducible_sum(mass) / (inf.rho * speed * out.chord);
    return out;
}

void write_solution_csv(std::ostream& out, const PointCloud& cloud, const PrimitiveField& state) {
    out << "x,y,rho,u1,u2,p\n" << std::setprecision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Primitives s = state.get(i);
        out << cloud.position[i].x << ',' << cloud.position[i].y << ',' << s.rho << ',' << s.u1 << ',' << s.u2
            << ',' << s.p << '\n';
    }
}

void write_history_csv(std::ostream& out, std::span<const double> history) {
    out << "iter,residue\n" << std::setprecision(17);
    for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << ',' << history[i] << '\n';
}

void write_surface_csv(std::ostream& out, const PointCloud& cloud, const SurfaceReport& surface) {
    out << "x,y,cp\n" << std::setprecision(17);
    for (std::size_t a = 0; a < surface.wall_points.size(); ++a) {
        const Vec2 x = cloud.position[surface.wall_points[a]];
        out << x.x << ',' << x.y << ',' << surface.cp[a] << '\n';
    }
}

}  // namespace kmf
