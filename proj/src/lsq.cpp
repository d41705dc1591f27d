#include "kmf/lsq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmf/parallel.hpp"

namespace kmf {

namespace {

void require_nondegenerate(const StencilSums& m) {
    if (!(std::fabs(m.det) > 0.0) || !std::isfinite(m.det)) {
        throw DegenerateStencil("least-squares matrix is singular");
    }
}

Eigen::Matrix<double, Eigen::Dynamic, 5> scaled_design(std::span<const Vec2> offsets, double& h) {
    h = 0.0;
    for (const auto& d : offsets) h = std::max(h, norm(d));
    if (!(h > 0.0)) throw DegenerateStencil("quadratic stencil has no extent");
    Eigen::Matrix<double, Eigen::Dynamic, 5> a(static_cast<Eigen::Index>(offsets.size()), 5);
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const double x = offsets[i].x / h, y = offsets[i].y / h;
        a.row(static_cast<Eigen::Index>(i)) << x, y, 0.5 * x * x, x * y, 0.5 * y * y;
    }
    return a;
}

double condition_of(const Eigen::Matrix<double, 5, 5>& m) {
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> eig(m, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace

Gradient2 lsq_gradient(std::span<const Vec2> offsets, std::span<const double> deltas) {
    if (offsets.size() != deltas.size()) throw std::invalid_argument("offsets/deltas length mismatch");
    const StencilSums m = stencil_sums(offsets);
    require_nondegenerate(m);
    double r1 = 0.0, r2 = 0.0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        r1 += offsets[i].x * deltas[i];
        r2 += offsets[i].y * deltas[i];
    }
    const Vec2 d = solve_normal_equations(m, r1, r2);
    return {d.x, d.y};
}

Gradient2 defect_corrected_gradient(std::span<const Vec2> offsets, std::span<const double> deltas,
                                    std::span<const Gradient2> neighbor_grads, Gradient2 center_grad) {
    if (offsets.size() != deltas.size() || offsets.size() != neighbor_grads.size()) {
        throw std::invalid_argument("offsets/deltas/gradients length mismatch");
    }
    const StencilSums m = stencil_sums(offsets);
    require_nondegenerate(m);
    double r1 = 0.0, r2 = 0.0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const Vec2 d = offsets[i];
        const double modified = deltas[i] - 0.5 * (d.x * (neighbor_grads[i].fx - center_grad.fx) +
                                                   d.y * (neighbor_grads[i].fy - center_grad.fy));
        r1 += d.x * modified;
        r2 += d.y * modified;
    }
    const Vec2 g = solve_normal_equations(m, r1, r2);
    return {g.x, g.y};
}

double quadratic_condition(std::span<const Vec2> offsets) {
    double h = 0.0;
    const auto a = scaled_design(offsets, h);
    return condition_of(a.transpose() * a);
}

std::array<double, 5> quadratic_derivatives(std::span<const Vec2> offsets, std::span<const double> deltas,
                                            double max_condition) {
    if (offsets.size() != deltas.size()) throw std::invalid_argument("offsets/deltas length mismatch");
    if (offsets.size() < 6) throw DegenerateStencil("quadratic least squares needs at least 6 neighbours");
    double h = 0.0;
    const auto a = scaled_design(offsets, h);
    const Eigen::Matrix<double, 5, 5> ata = a.transpose() * a;
    const double cond = condition_of(ata);
    if (!(cond <= max_condition)) {
        std::ostringstream os;
        os << "quadratic least-squares matrix is poorly conditioned (condition " << cond << ")";
        throw ConditioningError(os.str(), cond);
    }
    const Eigen::Map<const Eigen::VectorXd> rhs(deltas.data(), static_cast<Eigen::Index>(deltas.size()));
    const Eigen::Matrix<double, 5, 1> atb = a.transpose() * rhs;
    const Eigen::Matrix<double, 5, 1> x = ata.ldlt().solve(atb);
    return {x(0) / h, x(1) / h, x(2) / (h * h), x(3) / (h * h), x(4) / (h * h)};
}

// ---------------------------------------------------------------------------

namespace {

// Gathers local offsets and (optionally modified) differences for one
// stencil of `center`, then solves with the cached sums.
template <class Delta>
Gradient2 stencil_gradient(std::size_t center, const Connectivity& conn, StencilKind stencil, Delta&& delta) {
    const auto& m = conn.sums(center, stencil);
    require_nondegenerate(m);
    const auto nbrs = conn.neighbors(center, StencilKind::full);
    const auto offs = conn.offsets(center);
    const auto masks = conn.masks(center);
    const bool full = stencil == StencilKind::full;
    const Frame& frame = conn.frame(center);
    double r1 = 0.0, r2 = 0.0;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
        if (!full && !(masks[k] & stencil_bit(stencil))) continue;
        const Vec2 local = full ? offs[k] : frame.to_local(offs[k]);
        const double df = delta(nbrs[k], offs[k]);
        r1 += local.x * df;
        r2 += local.y * df;
    }
    const Vec2 g = solve_normal_equations(m, r1, r2);
    if (full) return {g.x, g.y};
    const Vec2 c = frame.to_global(g);
    return {c.x, c.y};
}

}  // namespace

Gradient2 lsq_gradient_first_order(std::size_t center, std::span<const double> field,
                                   const Connectivity& conn, StencilKind stencil) {
    const double f0 = field[center];
    return stencil_gradient(center, conn, stencil,
                            [&](std::uint32_t j, Vec2) { return field[j] - f0; });
}

std::array<double, 5> lsq_gradient_quadratic(std::size_t center, std::span<const double> field,
                                             const Connectivity& conn, double max_condition) {
    const auto nbrs = conn.neighbors(center, StencilKind::full);
    const auto offs = conn.offsets(center);
    std::vector<double> deltas(nbrs.size());
    for (std::size_t k = 0; k < nbrs.size(); ++k) deltas[k] = field[nbrs[k]] - field[center];
    return quadratic_derivatives(offs, deltas, max_condition);
}

Gradient2 defect_corrected_gradient(std::size_t center, std::span<const double> field,
                                    std::span<const Gradient2> nodal_grads, const Connectivity& conn,
                                    StencilKind stencil) {
    const double f0 = field[center];
    const Gradient2 g0 = nodal_grads[center];
    return stencil_gradient(center, conn, stencil, [&](std::uint32_t j, Vec2 d) {
        const Gradient2 gj = nodal_grads[j];
        return (field[j] - f0) - 0.5 * (d.x * (gj.fx - g0.fx) + d.y * (gj.fy - g0.fy));
    });
}

// ---------------------------------------------------------------------------

QGradients first_order_q_gradients(const FieldBlock4& q, const Connectivity& conn, int threads) {
    QGradients out(q.size());
    parallel_for(q.size(), threads, [&](std::size_t p) {
        const auto& m = conn.sums(p, StencilKind::full);
        const auto nbrs = conn.neighbors(p, StencilKind::full);
        const auto offs = conn.offsets(p);
        for (std::size_t c = 0; c < 4; ++c) {
            const auto qc = q.component(c);
            double r1 = 0.0, r2 = 0.0;
            for (std::size_t k = 0; k < nbrs.size(); ++k) {
                const double dq = qc[nbrs[k]] - qc[p];
                r1 += offs[k].x * dq;
                r2 += offs[k].y * dq;
            }
            const Vec2 g = solve_normal_equations(m, r1, r2);
            out.qx.at(c, p) = g.x;
            out.qy.at(c, p) = g.y;
        }
    });
    return out;
}

double q_derivative_sweep(const FieldBlock4& q, const Connectivity& conn, const QGradients& current,
                          QGradients& next, int threads) {
    const std::size_t n = q.size();
    if (next.size() != n) next = QGradients(n);
    std::vector<double> change(n, 0.0);
    parallel_for(n, threads, [&](std::size_t p) {
        const auto& m = conn.sums(p, StencilKind::full);
        const auto nbrs = conn.neighbors(p, StencilKind::full);
        const auto offs = conn.offsets(p);
        double worst = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            const auto qc = q.component(c);
            const auto gx = current.qx.component(c);
            const auto gy = current.qy.component(c);
            double r1 = 0.0, r2 = 0.0;
            for (std::size_t k = 0; k < nbrs.size(); ++k) {
                const std::uint32_t j = nbrs[k];
                const Vec2 d = offs[k];
                const double dq = (qc[j] - qc[p]) - 0.5 * (d.x * (gx[j] - gx[p]) + d.y * (gy[j] - gy[p]));
                r1 += d.x * dq;
                r2 += d.y * dq;
            }
            const Vec2 g = solve_normal_equations(m, r1, r2);
            worst = std::max({worst, std::fabs(g.x - gx[p]), std::fabs(g.y - gy[p])});
            next.qx.at(c, p) = g.x;
            next.qy.at(c, p) = g.y;
        }
        change[p] = worst;
    });
    return change.empty() ? 0.0 : *std::max_element(change.begin(), change.end());
}

QDerivativeResult compute_q_derivatives(const FieldBlock4& q, const Connectivity& conn, int n_inner,
                                        const QGradients& prev, int threads) {
    if (n_inner < 1) throw std::invalid_argument("n_inner must be at least 1");
    QDerivativeResult out;
    out.grads = prev;
    QGradients scratch(q.size());
    for (int it = 0; it < n_inner; ++it) {
        out.sweep_change.push_back(q_derivative_sweep(q, conn, out.grads, scratch, threads));
        std::swap(out.grads, scratch);
    }
    return out;
}

void compute_q_derivatives(const FieldBlock4& q, const Connectivity& conn, int n_inner, QGradients& grads,
                           QGradients& scratch, int threads) {
    if (n_inner < 1) throw std::invalid_argument("n_inner must be at least 1");
    for (int it = 0; it < n_inner; ++it) {
        q_derivative_sweep(q, conn, grads, scratch, threads);
        std::swap(grads, scratch);
    }
}

}  // namespace kmf
